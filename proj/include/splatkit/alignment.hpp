#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "splatkit/gaussians.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/visibility.hpp"

// Weighted least-squares scale-and-translation alignment of predicted point
// clouds (and the Gaussians built from them) to dataset scale. Weights come
// from cross-view geometric consistency of the aligned dataset depths.

namespace splatkit {

inline constexpr double kDefaultConsistencyGamma = 10.0;
inline constexpr double kDefaultRejectThreshold = 0.5;
inline constexpr double kMaxNormalConditionNumber = 1e12;

/// Per-pixel alignment weight raster (1 channel, values in [0,1], zero on
/// sky pixels and failed warps).
using AlignmentWeights = FeatureMap;

struct ConsistencyWeightPair {
  AlignmentWeights w1, w2;
};

/// W(p) = exp(-gamma * |log-depth residual of the warp into the other
/// view|) on non-sky pixels; 0 on sky pixels and wherever the warp leaves
/// the other view or lacks depth.
inline ConsistencyWeightPair consistency_weights(
    const ViewRecord& v1, const ViewRecord& v2,
    double gamma = kDefaultConsistencyGamma,
    double sky_cutoff = kDefaultSkyCutoff) {
  auto one_direction = [&](const ViewRecord& src, const ViewRecord& dst) {
    const WarpResidual warp = log_depth_residual(src, dst);
    AlignmentWeights w(src.camera.width, src.camera.height, 1);
    for (int y = 0; y < src.camera.height; ++y)
      for (int x = 0; x < src.camera.width; ++x) {
        if (src.sky.is_sky(x, y, sky_cutoff)) continue;
        if (!warp.valid.at(x, y)) continue;
        w.set(x, y, 0, std::exp(-gamma * warp.residual.at(x, y)));
      }
    return w;
  };
  return {one_direction(v1, v2), one_direction(v2, v1)};
}

struct SimScaleTranslation {
  double scale = 1.0;  // > 0
  Vec3 translation = Vec3::Zero();
};

namespace detail {

struct WlsAccumulator {
  double sum_w = 0;
  Vec3 sum_wp = Vec3::Zero();
  Vec3 sum_wq = Vec3::Zero();
  double sum_wpp = 0;  // sum w * |P|^2
  double sum_wpq = 0;  // sum w * P.Q
  size_t n_points = 0;

  void add(double w, const Vec3& p, const Vec3& q) {
    sum_w += w;
    sum_wp += w * p;
    sum_wq += w * q;
    sum_wpp += w * p.squaredNorm();
    sum_wpq += w * p.dot(q);
    ++n_points;
  }
};

inline void accumulate_pair(const PointMap& pred, const PointMap& ref,
                            const AlignmentWeights& weights,
                            WlsAccumulator& acc) {
  if (pred.width != ref.width || pred.height != ref.height ||
      weights.width != pred.width || weights.height != pred.height ||
      weights.channels != 1)
    throw std::invalid_argument("wls: point map / weight size mismatch");
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      const double w = weights.at(x, y, 0);
      if (!(w > 0)) continue;
      if (!pred.is_valid(x, y) || !ref.is_valid(x, y)) continue;
      acc.add(w, pred.at(x, y), ref.at(x, y));
    }
}

}  // namespace detail

/// Closed-form minimizer of sum_i sum_p W|a*P + b - Q|^2 over scale a and
/// translation b. The 4x4 normal system is assembled in coordinates centered
/// at the weighted centroids and solved by LDLT; centering is algebraically
/// equivalent to the raw normal equations but better conditioned.
inline SimScaleTranslation wls_scale_translation(
    std::span<const PointMap> pred, std::span<const PointMap> ref,
    std::span<const AlignmentWeights> weights) {
  if (pred.size() != ref.size() || pred.size() != weights.size() ||
      pred.empty())
    throw std::invalid_argument("wls_scale_translation: view count mismatch");

  detail::WlsAccumulator acc;
  for (size_t i = 0; i < pred.size(); ++i)
    detail::accumulate_pair(pred[i], ref[i], weights[i], acc);

  if (!(acc.sum_w > 0) || acc.n_points < 4)
    throw std::runtime_error(
        "wls_scale_translation: need positive weight on at least 4 points");

  const Vec3 mean_p = acc.sum_wp / acc.sum_w;
  const Vec3 mean_q = acc.sum_wq / acc.sum_w;

  // Centered second moments. sum w*P'.Q' = sum w*P.Q - sw*mean_p.mean_q etc.
  const double s_pp = acc.sum_wpp - acc.sum_w * mean_p.squaredNorm();
  const double s_pq = acc.sum_wpq - acc.sum_w * mean_p.dot(mean_q);

  Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  normal(0, 0) = s_pp;
  normal.block<3, 3>(1, 1) = acc.sum_w * Mat3::Identity();
  // Off-diagonal blocks are sum w*P' = 0 by construction.

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(normal);
  const double lambda_min = eig.eigenvalues().minCoeff();
  const double lambda_max = eig.eigenvalues().maxCoeff();
  if (!(lambda_min > 0) ||
      lambda_max / lambda_min > kMaxNormalConditionNumber)
    throw std::runtime_error(
        "wls_scale_translation: degenerate geometry (ill-conditioned normal "
        "system)");

  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  rhs(0) = s_pq;  // sum w*Q' is zero by centering
  const Eigen::Vector4d sol = normal.ldlt().solve(rhs);

  const double a = sol(0);
  if (!(a > 0))
    throw std::runtime_error(
        "wls_scale_translation: non-positive scale (orientation error)");
  const Vec3 b = mean_q - a * mean_p + sol.segment<3>(1);
  return SimScaleTranslation{a, b};
}

/// centers <- a*centers + b, scales <- a*scales; opacity, rotation and SH
/// are untouched.
inline GaussianSet apply_alignment(const GaussianSet& g,
                                   const SimScaleTranslation& t) {
  if (!(t.scale > 0))
    throw std::invalid_argument("apply_alignment: scale must be positive");
  GaussianSet out = g;
  for (auto& c : out.centers) c = t.scale * c + t.translation;
  for (auto& s : out.scales) s *= t.scale;
  return out;
}

struct AlignmentResidual {
  double value = 0;  // weighted mean squared error per unit weight
  bool reject = false;
};

/// Weighted objective at t, normalized by the total weight so the rejection
/// threshold is resolution independent.
inline AlignmentResidual alignment_residual(
    std::span<const PointMap> pred, std::span<const PointMap> ref,
    std::span<const AlignmentWeights> weights, const SimScaleTranslation& t,
    double reject_threshold = kDefaultRejectThreshold) {
  if (pred.size() != ref.size() || pred.size() != weights.size())
    throw std::invalid_argument("alignment_residual: view count mismatch");
  double sum_w = 0, sum_err = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const PointMap& p = pred[i];
    const PointMap& q = ref[i];
    const AlignmentWeights& w = weights[i];
    if (p.width != q.width || p.height != q.height || w.width != p.width ||
        w.height != p.height || w.channels != 1)
      throw std::invalid_argument("alignment_residual: size mismatch");
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const double wt = w.at(x, y, 0);
        if (!(wt > 0) || !p.is_valid(x, y) || !q.is_valid(x, y)) continue;
        sum_w += wt;
        sum_err +=
            wt * (t.scale * p.at(x, y) + t.translation - q.at(x, y)).squaredNorm();
      }
  }
  if (!(sum_w > 0))
    throw std::runtime_error("alignment_residual: total weight is zero");
  AlignmentResidual out;
  out.value = sum_err / sum_w;
  out.reject = out.value > reject_threshold;
  return out;
}

}  // namespace splatkit
