#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "splatkit/formats.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/visibility.hpp"

// Scene manifests: a JSON index of the per-view rasters and cameras a scene
// is made of. Paths are stored relative to the manifest file. The "depth"
// and "sky" entries describe the scene at dataset scale; "rays" and
// "pred_depth" optionally carry model-frame geometry for alignment.

namespace splatkit {

struct ViewEntry {
  int id = -1;
  PinholeCamera camera;
  std::vector<std::string> images;  // one per lighting variant, may be empty
  std::string depth;                // aligned dataset depth (required for warps)
  std::string sky;                  // optional, all-zero when absent
  std::string features;            // optional feature raster
  std::string rays;                // optional model-frame ray map
  std::string pred_depth;          // optional model-frame depth
};

struct SceneManifest {
  std::string scene;
  std::vector<ViewEntry> views;
  std::string sparse_depth;               // optional
  std::vector<std::string> embeddings;    // optional, one per variant
  std::filesystem::path base_dir;         // directory of the manifest file

  std::filesystem::path resolve(const std::string& rel) const {
    return base_dir / rel;
  }

  const ViewEntry& view(int id) const {
    for (const auto& v : views)
      if (v.id == id) return v;
    throw FormatError("manifest: view id " + std::to_string(id) + " not found");
  }
};

namespace manifest_detail {

inline nlohmann::json camera_to_json(const PinholeCamera& cam) {
  nlohmann::json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  std::vector<double> rot(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot[size_t(i) * 3 + k] = cam.pose.rotation(i, k);
  j["rotation"] = rot;
  j["translation"] = {cam.pose.translation[0], cam.pose.translation[1],
                      cam.pose.translation[2]};
  return j;
}

inline PinholeCamera camera_from_json(const nlohmann::json& j) {
  Pose pose;
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || tr.size() != 3)
    throw FormatError("manifest camera: rotation/translation size");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = rot[size_t(i) * 3 + k];
    pose.translation[i] = tr[size_t(i)];
  }
  try {
    return PinholeCamera(j.at("fx").get<double>(), j.at("fy").get<double>(),
                         j.at("cx").get<double>(), j.at("cy").get<double>(),
                         j.at("width").get<int>(), j.at("height").get<int>(),
                         pose);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("manifest camera: ") + e.what());
  }
}

}  // namespace manifest_detail

inline void write_manifest(const std::filesystem::path& path,
                           const SceneManifest& manifest) {
  nlohmann::json j;
  j["scene"] = manifest.scene;
  if (!manifest.sparse_depth.empty()) j["sparse_depth"] = manifest.sparse_depth;
  if (!manifest.embeddings.empty()) j["embeddings"] = manifest.embeddings;
  j["views"] = nlohmann::json::array();
  for (const auto& v : manifest.views) {
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["camera"] = manifest_detail::camera_to_json(v.camera);
    if (!v.images.empty()) jv["images"] = v.images;
    if (!v.depth.empty()) jv["depth"] = v.depth;
    if (!v.sky.empty()) jv["sky"] = v.sky;
    if (!v.features.empty()) jv["features"] = v.features;
    if (!v.rays.empty()) jv["rays"] = v.rays;
    if (!v.pred_depth.empty()) jv["pred_depth"] = v.pred_depth;
    j["views"].push_back(jv);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

inline SceneManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  SceneManifest manifest;
  manifest.base_dir = path.parent_path();
  try {
    manifest.scene = j.value("scene", std::string{});
    manifest.sparse_depth = j.value("sparse_depth", std::string{});
    if (j.contains("embeddings"))
      manifest.embeddings = j.at("embeddings").get<std::vector<std::string>>();
    std::set<int> seen;
    for (const auto& jv : j.at("views")) {
      ViewEntry v;
      v.id = jv.at("id").get<int>();
      if (!seen.insert(v.id).second)
        throw FormatError(path.string() + ": duplicate view id " +
                          std::to_string(v.id));
      v.camera = manifest_detail::camera_from_json(jv.at("camera"));
      if (jv.contains("images"))
        v.images = jv.at("images").get<std::vector<std::string>>();
      v.depth = jv.value("depth", std::string{});
      v.sky = jv.value("sky", std::string{});
      v.features = jv.value("features", std::string{});
      v.rays = jv.value("rays", std::string{});
      v.pred_depth = jv.value("pred_depth", std::string{});
      manifest.views.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  // Referenced files must exist.
  for (const auto& v : manifest.views) {
    std::vector<std::string> paths{v.depth, v.sky, v.features, v.rays,
                                   v.pred_depth};
    paths.insert(paths.end(), v.images.begin(), v.images.end());
    for (const auto& p : paths)
      if (!p.empty() && !std::filesystem::exists(manifest.resolve(p)))
        throw FormatError(path.string() + ": missing referenced file " + p);
  }
  if (!manifest.sparse_depth.empty() &&
      !std::filesystem::exists(manifest.resolve(manifest.sparse_depth)))
    throw FormatError(path.string() + ": missing sparse depth file");
  for (const auto& e : manifest.embeddings)
    if (!std::filesystem::exists(manifest.resolve(e)))
      throw FormatError(path.string() + ": missing embedding file " + e);
  return manifest;
}

/// Loads the depth and sky rasters of a view into a ViewRecord; an absent
/// sky path yields an all-zero (never sky) map.
inline ViewRecord load_view_record(const SceneManifest& manifest, int id) {
  const ViewEntry& entry = manifest.view(id);
  if (entry.depth.empty())
    throw FormatError("manifest: view " + std::to_string(id) +
                      " has no depth raster");
  DepthMap depth = depth_from_raster(read_raster(manifest.resolve(entry.depth)));
  SkyProbability sky(entry.camera.width, entry.camera.height);
  if (!entry.sky.empty())
    sky = sky_from_raster(read_raster(manifest.resolve(entry.sky)));
  try {
    return ViewRecord(id, entry.camera, std::move(depth), std::move(sky));
  } catch (const std::invalid_argument& e) {
    throw FormatError("manifest view " + std::to_string(id) + ": " + e.what());
  }
}

}  // namespace splatkit
