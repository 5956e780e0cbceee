#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "splatkit/geometry.hpp"

// Cross-view depth warping, visibility masks, coverage scores and
// context/target view mining. A pixel of view A is "consistently observed"
// by view B when warping it into B lands in bounds, in front of the camera,
// and the log-depth residual against B's stored depth stays below delta.

namespace splatkit {

// Mask and mining defaults.
inline constexpr double kDefaultDelta = 0.05;
inline constexpr double kDefaultCoverageThreshold = 0.5;
inline constexpr double kDefaultVisibilityThreshold = 0.9;
inline constexpr double kDefaultSkyCutoff = 0.5;

struct VisibilityMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bits;

  VisibilityMask() = default;
  VisibilityMask(int w, int h)
      : width(w), height(h), bits(size_t(w) * h, 0) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("VisibilityMask: size must be positive");
  }

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  bool at(int x, int y) const { return bits[index(x, y)] != 0; }
  void set(int x, int y, bool v) { bits[index(x, y)] = v ? 1 : 0; }
  size_t count() const {
    size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

/// Per-pixel sky likelihood in [0,1]; consumed as an input, never computed
/// here. A pixel counts as sky when the value reaches the cutoff.
struct SkyProbability {
  int width = 0, height = 0;
  std::vector<double> values;

  SkyProbability() = default;
  SkyProbability(int w, int h)
      : width(w), height(h), values(size_t(w) * h, 0.0) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("SkyProbability: size must be positive");
  }

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  double at(int x, int y) const { return values[index(x, y)]; }
  void set(int x, int y, double v) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("SkyProbability: value outside [0,1]");
    values[index(x, y)] = v;
  }
  bool is_sky(int x, int y, double cutoff = kDefaultSkyCutoff) const {
    return at(x, y) >= cutoff;
  }
};

/// One view of a scene: camera, scale-aligned depth and sky probabilities.
struct ViewRecord {
  int id = -1;
  PinholeCamera camera;
  DepthMap aligned_depth;
  SkyProbability sky;

  ViewRecord() = default;
  ViewRecord(int id_, PinholeCamera camera_, DepthMap depth_, SkyProbability sky_)
      : id(id_), camera(std::move(camera_)), aligned_depth(std::move(depth_)),
        sky(std::move(sky_)) {
    if (aligned_depth.width != camera.width ||
        aligned_depth.height != camera.height ||
        sky.width != camera.width || sky.height != camera.height)
      throw std::invalid_argument("ViewRecord: raster/camera size mismatch");
  }

  size_t non_sky_count(double cutoff = kDefaultSkyCutoff) const {
    size_t n = 0;
    for (double v : sky.values) n += (v < cutoff) ? 1 : 0;
    return n;
  }
};

/// A mined training sample: exactly two context views plus target views.
struct ViewSet {
  std::array<int, 2> context_ids{-1, -1};
  std::vector<int> target_ids;
};

struct WarpResidual {
  ImageBuffer residual;  // 1-channel |log depth| residual on the src grid
  VisibilityMask valid;  // false where the warp leaves dst or depth is missing
};

/// Warps every src pixel into dst and compares the transformed depth against
/// dst's stored depth (nearest-neighbor sample) in log space.
inline WarpResidual log_depth_residual(const ViewRecord& src,
                                       const ViewRecord& dst) {
  const int w = src.camera.width, h = src.camera.height;
  WarpResidual out{ImageBuffer(w, h, 1), VisibilityMask(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!src.aligned_depth.is_valid(x, y)) continue;
      const Vec2 pixel(x + kPixelCenterOffset, y + kPixelCenterOffset);
      const Vec3 point =
          unproject(src.camera, pixel, src.aligned_depth.at(x, y));
      const Vec3 in_dst = dst.camera.pose.to_camera(point);
      if (in_dst.z() <= kBehindCameraEps) continue;
      const Vec2 dst_pixel(
          dst.camera.fx * in_dst.x() / in_dst.z() + dst.camera.cx,
          dst.camera.fy * in_dst.y() / in_dst.z() + dst.camera.cy);
      if (!dst.camera.contains(dst_pixel)) continue;
      const int dx = int(std::floor(dst_pixel.x()));
      const int dy = int(std::floor(dst_pixel.y()));
      if (!dst.aligned_depth.is_valid(dx, dy)) continue;
      const double sampled = dst.aligned_depth.at(dx, dy);
      out.residual.set(x, y, 0,
                       std::abs(std::log(sampled) - std::log(in_dst.z())));
      out.valid.set(x, y, true);
    }
  }
  return out;
}

/// Per-pixel OR over contexts of (warp valid and residual < delta), on the
/// target grid.
inline VisibilityMask visibility_mask(const ViewRecord& target,
                                      const std::vector<const ViewRecord*>& contexts,
                                      double delta = kDefaultDelta) {
  if (contexts.empty())
    throw std::invalid_argument("visibility_mask: empty context list");
  VisibilityMask mask(target.camera.width, target.camera.height);
  for (const ViewRecord* ctx : contexts) {
    const WarpResidual warp = log_depth_residual(target, *ctx);
    for (size_t i = 0; i < mask.bits.size(); ++i)
      if (warp.valid.bits[i] && warp.residual.values[i] < delta)
        mask.bits[i] = 1;
  }
  return mask;
}

/// mask OR (sky probability >= cutoff): the loss mask extended so sky pixels
/// always contribute.
inline VisibilityMask extend_with_sky(const VisibilityMask& mask,
                                      const SkyProbability& sky,
                                      double cutoff = kDefaultSkyCutoff) {
  if (mask.width != sky.width || mask.height != sky.height)
    throw std::invalid_argument("extend_with_sky: size mismatch");
  VisibilityMask out = mask;
  for (size_t i = 0; i < out.bits.size(); ++i)
    if (sky.values[i] >= cutoff) out.bits[i] = 1;
  return out;
}

/// Fraction of a's non-sky pixels consistently observed by b.
inline double coverage(const ViewRecord& a, const ViewRecord& b,
                       double delta = kDefaultDelta,
                       double sky_cutoff = kDefaultSkyCutoff) {
  const WarpResidual warp = log_depth_residual(a, b);
  size_t domain = 0, covered = 0;
  for (int y = 0; y < a.camera.height; ++y) {
    for (int x = 0; x < a.camera.width; ++x) {
      if (a.sky.is_sky(x, y, sky_cutoff)) continue;
      ++domain;
      if (warp.valid.at(x, y) && warp.residual.at(x, y) < delta) ++covered;
    }
  }
  if (domain == 0)
    throw std::runtime_error("coverage: view has an empty non-sky region");
  return double(covered) / double(domain);
}

inline double symmetric_coverage(const ViewRecord& a, const ViewRecord& b,
                                 double delta = kDefaultDelta,
                                 double sky_cutoff = kDefaultSkyCutoff) {
  return std::min(coverage(a, b, delta, sky_cutoff),
                  coverage(b, a, delta, sky_cutoff));
}

struct ContextPair {
  int seed_id = -1;
  int other_id = -1;
  double coverage = 0;
};

/// All (seed, other) pairs whose symmetric coverage exceeds the threshold,
/// sorted by descending coverage (ties by lower other id).
inline std::vector<ContextPair> select_context_pairs(
    const std::vector<ViewRecord>& views, int seed_id,
    double delta = kDefaultDelta,
    double cov_threshold = kDefaultCoverageThreshold,
    double sky_cutoff = kDefaultSkyCutoff) {
  const ViewRecord* seed = nullptr;
  for (const auto& v : views)
    if (v.id == seed_id) seed = &v;
  if (!seed)
    throw std::invalid_argument("select_context_pairs: seed view not found");

  std::vector<ContextPair> pairs;
  for (const auto& v : views) {
    if (v.id == seed_id) continue;
    const double cov = symmetric_coverage(*seed, v, delta, sky_cutoff);
    if (cov > cov_threshold) pairs.push_back({seed_id, v.id, cov});
  }
  std::sort(pairs.begin(), pairs.end(), [](const ContextPair& a,
                                           const ContextPair& b) {
    if (a.coverage != b.coverage) return a.coverage > b.coverage;
    return a.other_id < b.other_id;
  });
  return pairs;
}

// Tolerance for the angle comparisons of the target-selection predicate:
// with identical-orientation contexts both sides are exactly zero and the
// strict form would reject every candidate.
inline constexpr double kInterpolationAngleTol = 1e-12;

/// Target views between two contexts: the candidate must sit between the
/// contexts in both distance and rotation angle, and its visibility-mask
/// fraction over non-sky pixels must reach vis_threshold.
inline std::vector<int> select_targets(
    const ViewRecord& ctx1, const ViewRecord& ctx2,
    const std::vector<ViewRecord>& candidates, double delta = kDefaultDelta,
    double vis_threshold = kDefaultVisibilityThreshold,
    double sky_cutoff = kDefaultSkyCutoff) {
  if (ctx1.id == ctx2.id)
    throw std::invalid_argument("select_targets: identical context views");
  const PoseSeparation sep = pose_distance_angle(ctx1.camera, ctx2.camera);
  if (sep.distance <= 1e-12)
    throw std::runtime_error(
        "select_targets: context poses coincide (degenerate predicate)");

  std::vector<int> selected;
  for (const auto& cand : candidates) {
    if (cand.id == ctx1.id || cand.id == ctx2.id) continue;
    const PoseSeparation s1 = pose_distance_angle(ctx1.camera, cand.camera);
    const PoseSeparation s2 = pose_distance_angle(cand.camera, ctx2.camera);
    const bool between = s1.distance < sep.distance &&
                         s2.distance < sep.distance &&
                         s1.angle < sep.angle + kInterpolationAngleTol &&
                         s2.angle < sep.angle + kInterpolationAngleTol;
    if (!between) continue;

    const size_t domain = cand.non_sky_count(sky_cutoff);
    if (domain == 0) continue;
    const VisibilityMask mask = visibility_mask(cand, {&ctx1, &ctx2}, delta);
    size_t visible = 0;
    for (int y = 0; y < cand.camera.height; ++y)
      for (int x = 0; x < cand.camera.width; ++x)
        if (!cand.sky.is_sky(x, y, sky_cutoff) && mask.at(x, y)) ++visible;
    if (double(visible) / double(domain) >= vis_threshold)
      selected.push_back(cand.id);
  }
  return selected;
}

/// Full mining pass for one seed view: one ViewSet per qualifying context
/// pair, each with the targets that interpolate that pair.
inline std::vector<ViewSet> mine_view_sets(
    const std::vector<ViewRecord>& views, int seed_id,
    double delta = kDefaultDelta,
    double cov_threshold = kDefaultCoverageThreshold,
    double vis_threshold = kDefaultVisibilityThreshold,
    double sky_cutoff = kDefaultSkyCutoff) {
  std::vector<ViewSet> sets;
  for (const ContextPair& pair :
       select_context_pairs(views, seed_id, delta, cov_threshold, sky_cutoff)) {
    const ViewRecord* ctx1 = nullptr;
    const ViewRecord* ctx2 = nullptr;
    for (const auto& v : views) {
      if (v.id == pair.seed_id) ctx1 = &v;
      if (v.id == pair.other_id) ctx2 = &v;
    }
    ViewSet set;
    set.context_ids = {pair.seed_id, pair.other_id};
    set.target_ids =
        select_targets(*ctx1, *ctx2, views, delta, vis_threshold, sky_cutoff);
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace splatkit
