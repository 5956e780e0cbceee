#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "splatkit/geometry.hpp"

// Robust scale-and-shift alignment of monocular depth against sparse metric
// depth. Residuals are measured in log-depth so the inlier test is unit-free.

namespace splatkit {

struct SparseDepthSample {
  Eigen::Vector2i pixel;
  double depth = 0;  // > 0
};

struct SparseDepth {
  std::vector<SparseDepthSample> samples;
};

struct ScaleShift {
  double scale = 1.0;  // > 0
  double shift = 0.0;
};

/// Least-squares fit of ref ~ scale*pred + shift via the 2x2 normal
/// equations, solved in centered form. Throws on rank deficiency (all pred
/// equal) or length mismatch.
inline ScaleShift fit_scale_shift(std::span<const double> pred,
                                  std::span<const double> ref) {
  if (pred.size() != ref.size())
    throw std::invalid_argument("fit_scale_shift: length mismatch");
  const size_t n = pred.size();
  if (n < 2) throw std::invalid_argument("fit_scale_shift: need >= 2 samples");

  double mean_p = 0, mean_r = 0;
  for (size_t i = 0; i < n; ++i) {
    mean_p += pred[i];
    mean_r += ref[i];
  }
  mean_p /= double(n);
  mean_r /= double(n);

  double var_p = 0, cov_pr = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dp = pred[i] - mean_p;
    var_p += dp * dp;
    cov_pr += dp * (ref[i] - mean_r);
  }
  if (var_p <= 1e-24 * double(n) * std::max(1.0, mean_p * mean_p))
    throw std::runtime_error(
        "fit_scale_shift: rank-deficient fit (predicted values all equal)");

  const double scale = cov_pr / var_p;
  return ScaleShift{scale, mean_r - scale * mean_p};
}

struct RansacConfig {
  int iterations = 1000;
  double inlier_log_threshold = 0.05;
  int min_inliers = 0;  // 0 = auto: max(10, 20% of usable samples)
  std::uint64_t seed = 0;
};

struct RansacResult {
  ScaleShift model;
  std::vector<std::uint8_t> inliers;  // one flag per sparse sample
  size_t inlier_count = 0;
};

namespace detail {

struct InlierScore {
  size_t count = 0;
  double residual_sum = 0;
};

inline InlierScore score_scale_shift(const ScaleShift& ss,
                                     std::span<const double> pred,
                                     std::span<const double> ref,
                                     double log_threshold,
                                     std::vector<std::uint8_t>* flags) {
  InlierScore score;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double q = ss.scale * pred[i] + ss.shift;
    bool in = false;
    if (q > 0.0) {
      const double r = std::abs(std::log(q) - std::log(ref[i]));
      if (r < log_threshold) {
        in = true;
        ++score.count;
        score.residual_sum += r;
      }
    }
    if (flags) (*flags)[i] = in ? 1 : 0;
  }
  return score;
}

}  // namespace detail

/// RANSAC over 2-point scale/shift hypotheses. A sample is an inlier of a
/// model when scale*pred+shift stays positive and the log-depth residual is
/// below the threshold. Best model by inlier count, ties by lower inlier
/// residual sum; the winner is refit on its inliers. Deterministic for a
/// fixed seed.
inline RansacResult ransac_scale_shift(const DepthMap& pred_depth,
                                       const SparseDepth& sparse,
                                       const RansacConfig& cfg = {}) {
  // Usable samples: valid predicted depth at the sample pixel.
  std::vector<size_t> usable;
  std::vector<double> pred, ref;
  for (size_t i = 0; i < sparse.samples.size(); ++i) {
    const auto& s = sparse.samples[i];
    if (!(s.depth > 0))
      throw std::invalid_argument("ransac_scale_shift: non-positive sparse depth");
    if (s.pixel.x() < 0 || s.pixel.x() >= pred_depth.width || s.pixel.y() < 0 ||
        s.pixel.y() >= pred_depth.height)
      throw std::invalid_argument("ransac_scale_shift: sample pixel out of bounds");
    if (!pred_depth.is_valid(s.pixel.x(), s.pixel.y())) continue;
    usable.push_back(i);
    pred.push_back(pred_depth.at(s.pixel.x(), s.pixel.y()));
    ref.push_back(s.depth);
  }
  const size_t n = usable.size();
  if (n < 2)
    throw std::runtime_error(
        "ransac_scale_shift: fewer than 2 sparse samples with valid depth");

  const size_t min_inliers =
      cfg.min_inliers > 0
          ? size_t(cfg.min_inliers)
          : std::max<size_t>(10, size_t(std::ceil(0.2 * double(n))));

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);

  bool found = false;
  ScaleShift best;
  detail::InlierScore best_score;
  for (int it = 0; it < cfg.iterations; ++it) {
    const size_t i = pick(rng);
    const size_t j = pick(rng);
    if (i == j) continue;
    const double dp = pred[i] - pred[j];
    if (std::abs(dp) < 1e-12 * std::max(1.0, std::abs(pred[i]))) continue;
    const double scale = (ref[i] - ref[j]) / dp;
    if (!(scale > 0)) continue;  // depth orientation must be preserved
    const ScaleShift hyp{scale, ref[i] - scale * pred[i]};
    const auto score = detail::score_scale_shift(
        hyp, pred, ref, cfg.inlier_log_threshold, nullptr);
    if (score.count > best_score.count ||
        (score.count == best_score.count && found &&
         score.residual_sum < best_score.residual_sum)) {
      best = hyp;
      best_score = score;
      found = true;
    }
  }
  if (!found || best_score.count < min_inliers)
    throw std::runtime_error("ransac_scale_shift: no model found");

  std::vector<std::uint8_t> flags(n, 0);
  detail::score_scale_shift(best, pred, ref, cfg.inlier_log_threshold, &flags);

  // Refit on the inlier set; keep the raw hypothesis if the refit degrades
  // the inlier count or loses positive orientation.
  std::vector<double> in_pred, in_ref;
  for (size_t k = 0; k < n; ++k) {
    if (flags[k]) {
      in_pred.push_back(pred[k]);
      in_ref.push_back(ref[k]);
    }
  }
  ScaleShift model = best;
  detail::InlierScore model_score = best_score;
  if (in_pred.size() >= 2) {
    try {
      const ScaleShift refit = fit_scale_shift(in_pred, in_ref);
      if (refit.scale > 0) {
        const auto refit_score = detail::score_scale_shift(
            refit, pred, ref, cfg.inlier_log_threshold, nullptr);
        if (refit_score.count >= best_score.count) {
          model = refit;
          model_score = refit_score;
        }
      }
    } catch (const std::runtime_error&) {
      // degenerate refit: keep the hypothesis
    }
  }
  detail::score_scale_shift(model, pred, ref, cfg.inlier_log_threshold, &flags);

  RansacResult out;
  out.model = model;
  out.inlier_count = model_score.count;
  out.inliers.assign(sparse.samples.size(), 0);
  for (size_t k = 0; k < n; ++k) out.inliers[usable[k]] = flags[k];
  return out;
}

/// Applies scale*D + shift per pixel; results that are non-positive (or were
/// invalid) come out invalid.
inline DepthMap apply_scale_shift(const DepthMap& pred_depth,
                                  const ScaleShift& ss) {
  DepthMap out(pred_depth.width, pred_depth.height);
  for (int y = 0; y < pred_depth.height; ++y)
    for (int x = 0; x < pred_depth.width; ++x)
      if (pred_depth.is_valid(x, y))
        out.set(x, y, ss.scale * pred_depth.at(x, y) + ss.shift);
  return out;
}

}  // namespace splatkit
