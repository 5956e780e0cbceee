#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "splatkit/gaussians.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/visibility.hpp"

// Forward tile-based Gaussian splatting with SH colors, plus the masked
// photometric metrics used to score renders. Rendering is forward-only; a
// backward pass would hook in at the per-pixel compositing loop, which is
// why the projected state is kept explicit.

namespace splatkit {

// Rasterizer constants, fixed for determinism.
inline constexpr double kCovarianceDilation = 0.3;  // px^2 added to cov2d
inline constexpr double kAlphaCap = 0.99;
inline constexpr double kAlphaSkipThreshold = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;
inline constexpr double kNearPlane = 0.01;
inline constexpr int kTileSize = 16;
inline constexpr double kFootprintSigmas = 3.0;
inline constexpr double kPsnrCapDb = 100.0;

/// Sigma = R * diag(s)^2 * R^T for a unit quaternion (w,x,y,z).
inline Mat3 cov3d(const Vec4& rotation, const Vec3& scale) {
  const Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
  const Mat3 r = q.toRotationMatrix();
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

/// One primitive of a GaussianSet, viewed without copying.
struct PrimitiveRef {
  Vec3 center;
  Vec4 rotation;
  Vec3 scale;
  double opacity;
  std::span<const double> sh;
  int sh_degree;
};

inline PrimitiveRef primitive_ref(const GaussianSet& set, size_t i) {
  return PrimitiveRef{set.centers[i], set.rotations[i], set.scales[i],
                      set.opacities[i], set.sh_of(i), set.sh_degree};
}

struct ProjectedGaussian {
  Vec2 mean2d;
  Eigen::Matrix2d cov2d;  // dilated, positive definite
  double view_depth = 0;
  Vec3 rgb = Vec3::Zero();
  double alpha = 0;

  /// Conservative pixel radius of the 3-sigma footprint.
  double radius() const {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov2d);
    return kFootprintSigmas * std::sqrt(eig.eigenvalues().maxCoeff());
  }
};

/// EWA projection of one primitive: perspective mean, first-order Jacobian
/// covariance plus dilation, SH color along the center ray. nullopt when the
/// primitive is behind the near plane or its 3-sigma footprint misses the
/// image.
inline std::optional<ProjectedGaussian> project_gaussian(
    const PinholeCamera& camera, const PrimitiveRef& g) {
  const Vec3 p = camera.pose.to_camera(g.center);
  if (p.z() < kNearPlane) return std::nullopt;
  const double inv_z = 1.0 / p.z();

  ProjectedGaussian out;
  out.view_depth = p.z();
  out.mean2d = Vec2(camera.fx * p.x() * inv_z + camera.cx,
                    camera.fy * p.y() * inv_z + camera.cy);

  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx * inv_z, 0, -camera.fx * p.x() * inv_z * inv_z,
      0, camera.fy * inv_z, -camera.fy * p.y() * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> jw = jac * camera.pose.rotation;
  out.cov2d = jw * cov3d(g.rotation, g.scale) * jw.transpose() +
              kCovarianceDilation * Eigen::Matrix2d::Identity();

  const double r = out.radius();
  if (out.mean2d.x() + r < 0 || out.mean2d.x() - r > camera.width ||
      out.mean2d.y() + r < 0 || out.mean2d.y() - r > camera.height)
    return std::nullopt;

  out.rgb = sh_to_color(g.sh, g.sh_degree,
                        (g.center - camera.center()).normalized());
  out.alpha = g.opacity;
  return out;
}

struct RenderOutput {
  ImageBuffer color;           // 3 channels, black background
  ImageBuffer accum_alpha;     // 1 channel in [0,1]
  ImageBuffer expected_depth;  // 1 channel, alpha-normalized; 0 where empty
};

namespace detail {

struct Splat {
  Vec2 mean2d;
  double inv_xx, inv_xy, inv_yy;  // inverse 2D covariance
  double depth;
  Vec3 rgb;
  double alpha;
};

inline void shade_tile(const std::vector<Splat>& splats,
                       const std::vector<int>& list, int x0, int y0, int x1,
                       int y1, RenderOutput& out) {
  // Skip the exp as soon as the exponent alone caps alpha' under the
  // contribution threshold.
  const double power_skip = std::log(kAlphaSkipThreshold);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double px = x + kPixelCenterOffset;
      const double py = y + kPixelCenterOffset;
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      double depth_acc = 0.0;
      for (const int idx : list) {
        const Splat& s = splats[idx];
        const double dx = px - s.mean2d.x();
        const double dy = py - s.mean2d.y();
        const double power =
            -0.5 * (s.inv_xx * dx * dx + 2.0 * s.inv_xy * dx * dy +
                    s.inv_yy * dy * dy);
        if (power > 0.0 || power < power_skip) continue;
        const double alpha = std::min(kAlphaCap, s.alpha * std::exp(power));
        if (alpha < kAlphaSkipThreshold) continue;
        const double weight = alpha * transmittance;
        color += weight * s.rgb;
        depth_acc += weight * s.depth;
        transmittance *= 1.0 - alpha;
        if (transmittance < kTransmittanceStop) break;
      }
      const double accum = 1.0 - transmittance;
      for (int c = 0; c < 3; ++c) out.color.set(x, y, c, color[c]);
      out.accum_alpha.set(x, y, 0, accum);
      out.expected_depth.set(x, y, 0, accum > 1e-6 ? depth_acc / accum : 0.0);
    }
  }
}

}  // namespace detail

/// Projects, depth-sorts and composites the set front to back over a black
/// background. Primitives are binned into 16x16 tiles by their 3-sigma
/// footprint; tiles own their pixels exclusively, so the output is
/// bit-identical for any thread count and invariant to input order (depth
/// ties broken by primitive index).
inline RenderOutput rasterize(const GaussianSet& gaussians,
                              const PinholeCamera& camera, int n_threads = 1) {
  const int w = camera.width, h = camera.height;
  RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, 1),
                   ImageBuffer(w, h, 1)};

  struct Candidate {
    detail::Splat splat;
    double radius;
    size_t order;  // stable tie-break on the original index
  };
  std::vector<Candidate> candidates;
  candidates.reserve(gaussians.size());
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const auto proj = project_gaussian(camera, primitive_ref(gaussians, i));
    if (!proj) continue;
    const double det = proj->cov2d.determinant();
    if (!(det > 0) || !proj->cov2d.allFinite()) continue;
    Candidate c;
    c.splat.mean2d = proj->mean2d;
    c.splat.inv_xx = proj->cov2d(1, 1) / det;
    c.splat.inv_xy = -proj->cov2d(0, 1) / det;
    c.splat.inv_yy = proj->cov2d(0, 0) / det;
    c.splat.depth = proj->view_depth;
    c.splat.rgb = proj->rgb;
    c.splat.alpha = proj->alpha;
    c.radius = proj->radius();
    c.order = i;
    candidates.push_back(c);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.splat.depth != b.splat.depth)
                return a.splat.depth < b.splat.depth;
              return a.order < b.order;
            });

  std::vector<detail::Splat> splats(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) splats[i] = candidates[i].splat;

  const int tiles_x = (w + kTileSize - 1) / kTileSize;
  const int tiles_y = (h + kTileSize - 1) / kTileSize;
  std::vector<std::vector<int>> tile_lists(size_t(tiles_x) * tiles_y);
  for (size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const int tx0 = std::max(0, int((c.splat.mean2d.x() - c.radius) / kTileSize));
    const int tx1 = std::min(tiles_x - 1,
                             int((c.splat.mean2d.x() + c.radius) / kTileSize));
    const int ty0 = std::max(0, int((c.splat.mean2d.y() - c.radius) / kTileSize));
    const int ty1 = std::min(tiles_y - 1,
                             int((c.splat.mean2d.y() + c.radius) / kTileSize));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        tile_lists[size_t(ty) * tiles_x + tx].push_back(int(i));
  }

  const int n_tiles = tiles_x * tiles_y;
  auto shade_range = [&](int first, int step) {
    for (int t = first; t < n_tiles; t += step) {
      const int tx = t % tiles_x, ty = t / tiles_x;
      detail::shade_tile(splats, tile_lists[t], tx * kTileSize, ty * kTileSize,
                         std::min(w, (tx + 1) * kTileSize),
                         std::min(h, (ty + 1) * kTileSize), out);
    }
  };
  if (n_threads <= 1) {
    shade_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k)
      pool.emplace_back(shade_range, k, n_threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Mean over masked pixels and channels of squared differences.
inline double masked_mse(const ImageBuffer& rendered, const ImageBuffer& target,
                         const VisibilityMask& mask) {
  if (rendered.width != target.width || rendered.height != target.height ||
      rendered.channels != target.channels)
    throw std::invalid_argument("masked_mse: image size mismatch");
  if (mask.width != rendered.width || mask.height != rendered.height)
    throw std::invalid_argument("masked_mse: mask size mismatch");
  double acc = 0;
  size_t n = 0;
  for (int y = 0; y < rendered.height; ++y)
    for (int x = 0; x < rendered.width; ++x) {
      if (!mask.at(x, y)) continue;
      ++n;
      for (int c = 0; c < rendered.channels; ++c) {
        const double d = rendered.at(x, y, c) - target.at(x, y, c);
        acc += d * d;
      }
    }
  if (n == 0) throw std::runtime_error("masked_mse: empty mask");
  return acc / (double(n) * rendered.channels);
}

inline constexpr double kDefaultPerceptualWeight = 0.5;

struct PhotometricLoss {
  double mse = 0;
  std::optional<double> perceptual;  // externally computed, e.g. LPIPS
  double weight = kDefaultPerceptualWeight;

  double total() const {
    return mse + (perceptual ? weight * *perceptual : 0.0);
  }
};

/// Masked photometric loss: the MSE term plus an optional externally
/// computed perceptual score (this library ships no perceptual network; the
/// scalar plugs in here).
inline PhotometricLoss masked_photometric_loss(
    const ImageBuffer& rendered, const ImageBuffer& target,
    const VisibilityMask& mask,
    std::optional<double> perceptual_score = std::nullopt,
    double weight = kDefaultPerceptualWeight) {
  PhotometricLoss loss;
  loss.mse = masked_mse(rendered, target, mask);
  loss.perceptual = perceptual_score;
  loss.weight = weight;
  return loss;
}

/// 10*log10(1/MSE) with peak 1.0, capped at 100 dB.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b,
                   const VisibilityMask* mask = nullptr) {
  double mse;
  if (mask) {
    mse = masked_mse(a, b, *mask);
  } else {
    VisibilityMask all(a.width, a.height);
    std::fill(all.bits.begin(), all.bits.end(), std::uint8_t(1));
    mse = masked_mse(a, b, all);
  }
  if (mse <= 0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

}  // namespace splatkit
