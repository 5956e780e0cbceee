#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "splatkit/formats.hpp"
#include "splatkit/gaussians.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/image_io.hpp"
#include "splatkit/manifest.hpp"
#include "splatkit/render.hpp"

// Synthetic scene generator. Builds a ground-truth Gaussian wall, renders it
// from a jittered camera arc under per-variant color tints, and writes every
// raster the pipeline consumes: images, expected-depth maps, sky maps,
// feature maps encoding the untinted colors, per-variant appearance
// embeddings, an identity-equivalent appearance head, and (optionally
// rescaled) model-frame rays and depths. Deterministic for a fixed seed.

namespace splatkit {

struct SynthConfig {
  int n_gaussians = 500;
  int n_views = 4;
  int image_size = 256;
  std::uint64_t seed = 0;
  int n_variants = 2;
  int sh_degree = 1;          // degree of the ground-truth primitives
  double model_scale = 1.0;   // dataset = model_scale * model + model_shift
  Vec3 model_shift = Vec3::Zero();
  double arc_span = 0.5;      // radians subtended by the camera arc
  int threads = 1;
  std::filesystem::path out_dir;
};

struct SynthResult {
  std::filesystem::path manifest_path;
  std::filesystem::path gaussians_path;
  std::filesystem::path weights_path;
  std::vector<std::filesystem::path> embedding_paths;
  SceneManifest manifest;
};

namespace synth_detail {

inline constexpr double kShDc = 0.28209479177387814;  // Y00
inline constexpr double kWallDistance = 4.0;

inline double wall_z(double x, double y) {
  return kWallDistance + 0.25 * std::sin(1.3 * x + 0.7) +
         0.2 * std::cos(1.1 * y - 0.4);
}

/// Smooth per-channel albedo field over the wall; neighbouring primitives
/// get similar colors, as surfaces do.
inline Vec3 wall_albedo(double x, double y) {
  return Vec3(0.5 + 0.17 * std::sin(0.8 * x + 0.5 * y + 0.3),
              0.5 + 0.17 * std::sin(0.6 * x - 0.9 * y + 2.1),
              0.5 + 0.17 * std::cos(0.7 * x + 0.8 * y - 1.2));
}

// The wall extends past every camera frustum, like a facade filling the
// frame: no finite-depth silhouette is visible, which is the regime the
// masked loss assumes (background parallax-free).
inline constexpr double kWallHalfExtent = 4.4;

inline GaussianSet ground_truth_wall(std::mt19937_64& rng, int n, int degree) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianSet set;
  set.sh_degree = degree;
  const int coeffs = sh_coeff_count(degree);
  // Jittered-grid placement with density-tracking sizes keeps the wall
  // saturated (no alpha holes) for any count and seed.
  const int grid = std::max(1, int(std::floor(std::sqrt(double(n)))));
  const double cell = 2.0 * kWallHalfExtent / grid;
  const double sigma0 = 0.55 * cell;
  for (int i = 0; i < n; ++i) {
    double x, y;
    if (i < grid * grid) {
      x = (i % grid + 0.5 + 0.5 * (u(rng) - 0.5)) * cell - kWallHalfExtent;
      y = (i / grid + 0.5 + 0.5 * (u(rng) - 0.5)) * cell - kWallHalfExtent;
    } else {
      x = kWallHalfExtent * 2.0 * (u(rng) - 0.5);
      y = kWallHalfExtent * 2.0 * (u(rng) - 0.5);
    }
    const double z = wall_z(x, y) + 0.04 * (u(rng) - 0.5);
    set.centers.push_back(Vec3(x, y, z));
    set.opacities.push_back(0.93 + 0.065 * u(rng));
    Vec4 q(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    if (q.norm() < 1e-9) q = Vec4(1, 0, 0, 0);
    set.rotations.push_back(q.normalized());
    set.scales.push_back(sigma0 * Vec3(0.8 + 0.8 * u(rng), 0.8 + 0.8 * u(rng),
                                       0.8 + 0.8 * u(rng)));
    const Vec3 albedo = wall_albedo(x, y);
    for (int b = 0; b < coeffs; ++b)
      for (int c = 0; c < 3; ++c) {
        if (b == 0) {
          const double base =
              std::clamp(albedo[c] + 0.06 * (u(rng) - 0.5), 0.15, 0.85);
          set.sh.push_back((base - 0.5) / kShDc);
        } else {
          set.sh.push_back(0.08 * (u(rng) - 0.5));
        }
      }
  }
  return set;
}

inline PinholeCamera arc_camera(double phi, double radius, int size) {
  const Vec3 target(0, 0, kWallDistance);
  const Vec3 center = target - radius * Vec3(std::sin(phi), 0, std::cos(phi));
  const Vec3 forward = (target - center).normalized();
  Mat3 rot;
  rot.row(0) = Vec3(std::cos(phi), 0, -std::sin(phi));
  rot.row(1) = Vec3(0, 1, 0);
  rot.row(2) = forward;
  Pose pose;
  pose.rotation = rot;
  pose.translation = -(rot * center);
  const double f = 0.9 * size;
  return PinholeCamera(f, f, size / 2.0, size / 2.0, size, size, pose);
}

/// Adds the tint (a color offset) to every primitive's DC coefficients.
inline GaussianSet tinted(const GaussianSet& base, const Vec3& tint) {
  GaussianSet out = base;
  const size_t stride = out.sh_stride();
  for (size_t i = 0; i < out.size(); ++i)
    for (int c = 0; c < 3; ++c) out.sh[i * stride + c] += tint[c] / kShDc;
  return out;
}

/// 1x1 two-layer head with identity activation that adds the first three
/// embedding channels onto the three feature channels: sh_dc = f + e[0:3].
inline ConvHeadWeights identity_head(int d_g) {
  ConvHeadWeights w;
  w.inter_activation = Activation::Identity;
  w.layer1.out_channels = 3;
  w.layer1.in_channels = 3 + d_g;
  w.layer1.kernel_size = 1;
  w.layer1.padding = 0;
  w.layer1.kernel.assign(size_t(3) * (3 + d_g), 0.0);
  w.layer1.bias.assign(3, 0.0);
  for (int c = 0; c < 3; ++c) {
    w.layer1.kernel[w.layer1.kernel_index(c, c, 0, 0)] = 1.0;
    w.layer1.kernel[w.layer1.kernel_index(c, 3 + c, 0, 0)] = 1.0;
  }
  w.layer2.out_channels = 3;
  w.layer2.in_channels = 3;
  w.layer2.kernel_size = 1;
  w.layer2.padding = 0;
  w.layer2.kernel.assign(9, 0.0);
  w.layer2.bias.assign(3, 0.0);
  for (int c = 0; c < 3; ++c)
    w.layer2.kernel[w.layer2.kernel_index(c, c, 0, 0)] = 1.0;
  return w;
}

}  // namespace synth_detail

inline SynthResult synth_scene(const SynthConfig& cfg) {
  if (cfg.n_gaussians < 1) throw std::invalid_argument("synth: n_gaussians >= 1");
  if (cfg.n_views < 2) throw std::invalid_argument("synth: n_views >= 2");
  if (cfg.image_size < 16) throw std::invalid_argument("synth: image_size >= 16");
  if (cfg.n_variants < 1) throw std::invalid_argument("synth: n_variants >= 1");
  if (!(cfg.model_scale > 0))
    throw std::invalid_argument("synth: model_scale must be positive");
  if (cfg.sh_degree < 0 || cfg.sh_degree > kMaxShDegree)
    throw std::invalid_argument("synth: unsupported sh_degree");
  if (cfg.out_dir.empty()) throw std::invalid_argument("synth: out_dir missing");

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const GaussianSet gt =
      synth_detail::ground_truth_wall(rng, cfg.n_gaussians, cfg.sh_degree);

  // Variant tints: variant 0 is the identity.
  std::vector<Vec3> tints(cfg.n_variants, Vec3::Zero());
  for (int v = 1; v < cfg.n_variants; ++v)
    tints[v] = Vec3(0.24 * (u(rng) - 0.5), 0.24 * (u(rng) - 0.5),
                    0.24 * (u(rng) - 0.5));

  // Jittered camera arc.
  std::vector<PinholeCamera> cameras;
  for (int i = 0; i < cfg.n_views; ++i) {
    const double base = cfg.arc_span * (double(i) / (cfg.n_views - 1) - 0.5);
    // Jitter vanishes with the arc span, so a zero-span config yields
    // identical poses.
    const double phi = base + 0.02 * cfg.arc_span * (u(rng) - 0.5);
    const double radius = 5.0 + 0.4 * cfg.arc_span * (u(rng) - 0.5);
    cameras.push_back(synth_detail::arc_camera(phi, radius, cfg.image_size));
  }

  SceneManifest manifest;
  manifest.scene = "synthetic-wall-" + std::to_string(cfg.seed);
  manifest.base_dir = cfg.out_dir;

  SynthResult result;

  auto name = [](const std::string& stem, int i, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem.c_str(), i, ext.c_str());
    return std::string(buf);
  };

  for (int i = 0; i < cfg.n_views; ++i) {
    const PinholeCamera& cam = cameras[i];
    ViewEntry entry;
    entry.id = i;
    entry.camera = cam;

    // Variant renders; variant 0 doubles as the base appearance.
    RenderOutput base_render;
    for (int v = 0; v < cfg.n_variants; ++v) {
      const GaussianSet scene_v = synth_detail::tinted(gt, tints[v]);
      RenderOutput render = rasterize(scene_v, cam, cfg.threads);
      const std::string img =
          name("view", i, "_var" + std::to_string(v) + ".png");
      write_png(cfg.out_dir / img, render.color);
      entry.images.push_back(img);
      if (v == 0) base_render = std::move(render);
    }

    // Expected depth (valid where the wall is actually hit) and sky.
    DepthMap depth(cam.width, cam.height);
    SkyProbability sky(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const double alpha = base_render.accum_alpha.at(x, y, 0);
        if (alpha > 0.5) depth.set(x, y, base_render.expected_depth.at(x, y, 0));
        sky.set(x, y, std::clamp(1.0 - alpha, 0.0, 1.0));
      }
    entry.depth = name("view", i, "_depth.wsrf");
    write_raster(cfg.out_dir / entry.depth, to_raster(depth));
    entry.sky = name("view", i, "_sky.wsrf");
    write_raster(cfg.out_dir / entry.sky, to_raster(sky));

    // Features: untinted color re-encoded as DC coefficients.
    FeatureMap features(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x)
        for (int c = 0; c < 3; ++c)
          features.set(x, y, c,
                       (base_render.color.at(x, y, c) - 0.5) / synth_detail::kShDc);
    entry.features = name("view", i, "_features.wsrf");
    write_raster(cfg.out_dir / entry.features, to_raster(features));

    // Model-frame geometry: world' = (world - shift)/scale, so ray origins
    // move to (C - shift)/scale and z-depths divide by scale.
    RayMap rays = RayMap::from_camera(cam);
    const Vec3 model_origin = (cam.center() - cfg.model_shift) / cfg.model_scale;
    for (auto& o : rays.origins) o = model_origin;
    entry.rays = name("view", i, "_rays.wsrf");
    write_raster(cfg.out_dir / entry.rays, to_raster(rays));

    DepthMap pred_depth(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x)
        if (depth.is_valid(x, y))
          pred_depth.set(x, y, depth.at(x, y) / cfg.model_scale);
    entry.pred_depth = name("view", i, "_pred_depth.wsrf");
    write_raster(cfg.out_dir / entry.pred_depth, to_raster(pred_depth));

    manifest.views.push_back(std::move(entry));
  }

  // Monocular-style depth for view 0 plus sparse metric samples: the mono
  // map relates to the dataset depth by a known scale and shift.
  {
    const double mono_scale = 0.6 + 1.2 * u(rng);
    const double mono_shift = 0.1 + 0.4 * u(rng);
    const DepthMap& d0 = depth_from_raster(
        read_raster(cfg.out_dir / manifest.views[0].depth));
    DepthMap mono(d0.width, d0.height);
    for (int y = 0; y < d0.height; ++y)
      for (int x = 0; x < d0.width; ++x)
        if (d0.is_valid(x, y))
          mono.set(x, y, (d0.at(x, y) - mono_shift) / mono_scale);
    write_raster(cfg.out_dir / "view_000_mono_depth.wsrf", to_raster(mono));

    SparseDepth sparse;
    std::uniform_int_distribution<int> px(0, d0.width - 1), py(0, d0.height - 1);
    while (sparse.samples.size() < 200) {
      const int x = px(rng), y = py(rng);
      if (!d0.is_valid(x, y)) continue;
      sparse.samples.push_back({{x, y}, d0.at(x, y)});
    }
    manifest.sparse_depth = "view_000_sparse.txt";
    write_sparse_depth(cfg.out_dir / manifest.sparse_depth, sparse);
  }

  // Per-variant appearance embeddings: tint encoded in the first three of
  // d_g = 32 channels, matching the identity head below.
  for (int v = 0; v < cfg.n_variants; ++v) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(kDefaultEmbeddingDim);
    for (int c = 0; c < 3; ++c) e[c] = tints[v][c] / synth_detail::kShDc;
    const fs::path p =
        cfg.out_dir / ("embedding_var" + std::to_string(v) + ".wsem");
    write_embeddings(p, {AppearanceEmbedding(e)});
    manifest.embeddings.push_back(p.filename().string());
    result.embedding_paths.push_back(p);
  }

  result.weights_path = cfg.out_dir / "weights.wscw";
  write_conv_weights(result.weights_path,
                     synth_detail::identity_head(kDefaultEmbeddingDim));

  result.gaussians_path = cfg.out_dir / "gt.wsgs";
  write_gaussians(result.gaussians_path, gt);

  result.manifest_path = cfg.out_dir / "scene.json";
  write_manifest(result.manifest_path, manifest);
  result.manifest = read_manifest(result.manifest_path);
  return result;
}

}  // namespace splatkit
