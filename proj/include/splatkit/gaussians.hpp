#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "splatkit/geometry.hpp"

// Pixel-aligned Gaussian construction: head-output activation, the two-layer
// convolutional appearance head that turns local features plus a global
// appearance embedding into SH colors, and assembly into a primitive set.

namespace splatkit {

inline constexpr int kDefaultEmbeddingDim = 32;
inline constexpr double kMinScale = 1e-6;
inline constexpr int kMaxShDegree = 3;

inline constexpr int sh_coeff_count(int degree) {
  return (degree + 1) * (degree + 1);
}

/// Degree encoded by a 3*(degree+1)^2 channel count; throws for any other.
inline int sh_degree_from_channels(int channels) {
  for (int d = 0; d <= kMaxShDegree; ++d)
    if (channels == 3 * sh_coeff_count(d)) return d;
  throw std::invalid_argument(
      "sh_degree_from_channels: channel count is not 3*(degree+1)^2");
}

/// Raw per-pixel head outputs before activation.
struct RawHeadOutputs {
  FeatureMap opacity_logit;  // 1 channel
  FeatureMap rotation_raw;   // 4 channels, (w,x,y,z)
  FeatureMap scale_log;      // 3 channels
  FeatureMap depth_offset;   // 1 channel
  FeatureMap features;       // d_l >= 1 channels

  RawHeadOutputs(FeatureMap opacity, FeatureMap rotation, FeatureMap scale,
                 FeatureMap offset, FeatureMap feats)
      : opacity_logit(std::move(opacity)), rotation_raw(std::move(rotation)),
        scale_log(std::move(scale)), depth_offset(std::move(offset)),
        features(std::move(feats)) {
    const int w = opacity_logit.width, h = opacity_logit.height;
    auto check = [&](const FeatureMap& m, int ch, const char* name) {
      if (m.width != w || m.height != h || (ch > 0 && m.channels != ch))
        throw std::invalid_argument(std::string("RawHeadOutputs: bad ") + name);
    };
    check(opacity_logit, 1, "opacity_logit");
    check(rotation_raw, 4, "rotation_raw");
    check(scale_log, 3, "scale_log");
    check(depth_offset, 1, "depth_offset");
    check(features, 0, "features");
    if (features.channels < 1)
      throw std::invalid_argument("RawHeadOutputs: features need >= 1 channel");
  }
};

/// Global appearance vector modulating Gaussian colors.
struct AppearanceEmbedding {
  Eigen::VectorXd values;

  AppearanceEmbedding() : values(Eigen::VectorXd::Zero(kDefaultEmbeddingDim)) {}
  explicit AppearanceEmbedding(Eigen::VectorXd v) : values(std::move(v)) {
    if (!values.allFinite())
      throw std::invalid_argument("AppearanceEmbedding: non-finite values");
  }
  int dim() const { return int(values.size()); }
};

enum class Activation { ReLU, Identity };

struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_size = 3;
  int padding = 1;
  std::vector<double> kernel;  // [out][in][ky][kx]
  std::vector<double> bias;    // [out]

  size_t kernel_index(int o, int i, int ky, int kx) const {
    return ((size_t(o) * in_channels + i) * kernel_size + ky) * kernel_size + kx;
  }
  void validate() const {
    if (out_channels <= 0 || in_channels <= 0 || kernel_size <= 0 || padding < 0)
      throw std::invalid_argument("ConvLayer: bad dimensions");
    if (kernel.size() != size_t(out_channels) * in_channels * kernel_size *
                             kernel_size ||
        bias.size() != size_t(out_channels))
      throw std::invalid_argument("ConvLayer: payload size mismatch");
  }
};

/// The two-layer appearance head of the color estimator. Layer 1 consumes
/// d_l + d_g channels, layer 2 emits 3*(sh degree+1)^2 channels.
struct ConvHeadWeights {
  ConvLayer layer1, layer2;
  Activation inter_activation = Activation::ReLU;

  void validate() const {
    layer1.validate();
    layer2.validate();
    if (layer1.out_channels != layer2.in_channels)
      throw std::invalid_argument("ConvHeadWeights: layer channel mismatch");
    sh_degree_from_channels(layer2.out_channels);
  }
  int sh_degree() const { return sh_degree_from_channels(layer2.out_channels); }
};

/// Primitive set, struct-of-arrays. SH coefficients are stored per primitive
/// as (degree+1)^2 basis blocks of 3 (rgb) values.
struct GaussianSet {
  int sh_degree = 0;
  std::vector<Vec3> centers;
  std::vector<double> opacities;
  std::vector<Vec4> rotations;  // unit quaternions (w,x,y,z)
  std::vector<Vec3> scales;
  std::vector<double> sh;

  size_t size() const { return centers.size(); }
  size_t sh_stride() const { return 3 * size_t(sh_coeff_count(sh_degree)); }
  std::span<const double> sh_of(size_t i) const {
    return {sh.data() + i * sh_stride(), sh_stride()};
  }

  void append(const GaussianSet& other) {
    if (other.sh_degree != sh_degree)
      throw std::invalid_argument("GaussianSet::append: SH degree mismatch");
    centers.insert(centers.end(), other.centers.begin(), other.centers.end());
    opacities.insert(opacities.end(), other.opacities.begin(),
                     other.opacities.end());
    rotations.insert(rotations.end(), other.rotations.begin(),
                     other.rotations.end());
    scales.insert(scales.end(), other.scales.begin(), other.scales.end());
    sh.insert(sh.end(), other.sh.begin(), other.sh.end());
  }

  void validate() const {
    const size_t n = size();
    if (opacities.size() != n || rotations.size() != n || scales.size() != n ||
        sh.size() != n * sh_stride())
      throw std::invalid_argument("GaussianSet: array length mismatch");
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
      throw std::invalid_argument("GaussianSet: unsupported SH degree");
    for (size_t i = 0; i < n; ++i) {
      if (!(opacities[i] > 0.0 && opacities[i] < 1.0))
        throw std::invalid_argument("GaussianSet: opacity outside (0,1)");
      if (std::abs(rotations[i].norm() - 1.0) > 1e-6)
        throw std::invalid_argument("GaussianSet: non-unit quaternion");
      if (!(scales[i].minCoeff() > 0.0))
        throw std::invalid_argument("GaussianSet: non-positive scale");
      if (!centers[i].allFinite() || !scales[i].allFinite())
        throw std::invalid_argument("GaussianSet: non-finite primitive");
    }
  }
};

struct ActivatedParams {
  FeatureMap alpha;     // 1 channel, (0,1)
  FeatureMap rotation;  // 4 channels, unit (w,x,y,z)
  FeatureMap scale;     // 3 channels, positive
};

/// sigmoid / normalize / exp activations per pixel. Scales are clamped to
/// [1e-6, scale_cap]; callers pass a scene-scale cap when one is known.
inline ActivatedParams activate_params(
    const RawHeadOutputs& raw,
    double scale_cap = std::numeric_limits<double>::infinity()) {
  const int w = raw.opacity_logit.width, h = raw.opacity_logit.height;
  const double cap = std::max(scale_cap, kMinScale);
  ActivatedParams out{FeatureMap(w, h, 1), FeatureMap(w, h, 4),
                      FeatureMap(w, h, 3)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double logit = raw.opacity_logit.at(x, y, 0);
      const double sig = 1.0 / (1.0 + std::exp(-logit));
      out.alpha.set(x, y, 0, std::clamp(sig, 1e-12, 1.0 - 1e-12));

      Vec4 q(raw.rotation_raw.at(x, y, 0), raw.rotation_raw.at(x, y, 1),
             raw.rotation_raw.at(x, y, 2), raw.rotation_raw.at(x, y, 3));
      const double norm = q.norm();
      if (norm < 1e-12 || !std::isfinite(norm))
        q = Vec4(1, 0, 0, 0);
      else
        q /= norm;
      for (int c = 0; c < 4; ++c) out.rotation.set(x, y, c, q[c]);

      for (int c = 0; c < 3; ++c)
        out.scale.set(x, y, c,
                      std::clamp(std::exp(raw.scale_log.at(x, y, c)),
                                 kMinScale, cap));
    }
  }
  return out;
}

/// Stride-1 cross-correlation with zero padding.
inline FeatureMap conv2d_forward(const FeatureMap& input,
                                 const ConvLayer& layer) {
  layer.validate();
  if (layer.in_channels != input.channels)
    throw std::invalid_argument("conv2d_forward: input channel mismatch");
  const int k = layer.kernel_size, p = layer.padding;
  const int out_w = input.width + 2 * p - k + 1;
  const int out_h = input.height + 2 * p - k + 1;
  if (out_w <= 0 || out_h <= 0)
    throw std::invalid_argument("conv2d_forward: kernel larger than padded input");

  FeatureMap out(out_w, out_h, layer.out_channels);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      for (int o = 0; o < layer.out_channels; ++o) {
        double acc = layer.bias[o];
        for (int i = 0; i < layer.in_channels; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy + ky - p;
            if (iy < 0 || iy >= input.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox + kx - p;
              if (ix < 0 || ix >= input.width) continue;
              acc += input.at(ix, iy, i) * layer.kernel[layer.kernel_index(o, i, ky, kx)];
            }
          }
        }
        out.set(ox, oy, o, acc);
      }
    }
  }
  return out;
}

/// Broadcasts the embedding over the feature raster, concatenates channels
/// and runs both head layers. Returns the SH coefficient raster.
inline FeatureMap appearance_head(const FeatureMap& features,
                                  const AppearanceEmbedding& embedding,
                                  const ConvHeadWeights& weights) {
  weights.validate();
  if (weights.layer1.in_channels != features.channels + embedding.dim())
    throw std::invalid_argument(
        "appearance_head: layer1 expects d_l + d_g input channels");

  FeatureMap stacked(features.width, features.height,
                     features.channels + embedding.dim());
  for (int y = 0; y < features.height; ++y) {
    for (int x = 0; x < features.width; ++x) {
      for (int c = 0; c < features.channels; ++c)
        stacked.set(x, y, c, features.at(x, y, c));
      for (int c = 0; c < embedding.dim(); ++c)
        stacked.set(x, y, features.channels + c, embedding.values[c]);
    }
  }

  FeatureMap hidden = conv2d_forward(stacked, weights.layer1);
  if (weights.inter_activation == Activation::ReLU)
    for (auto& v : hidden.values) v = std::max(v, 0.0);
  return conv2d_forward(hidden, weights.layer2);
}

/// One primitive per valid pixel: centers along the pixel rays at
/// depth + offset, activated opacity/rotation/scale, SH copied from the
/// color raster. The scale cap is 10% of the bounding-box diagonal of the
/// assembled centers.
inline GaussianSet assemble_gaussians(const RayMap& rays, const DepthMap& depth,
                                      const RawHeadOutputs& raw,
                                      const FeatureMap& sh_raster) {
  const int w = rays.width, h = rays.height;
  if (depth.width != w || depth.height != h || raw.opacity_logit.width != w ||
      raw.opacity_logit.height != h || sh_raster.width != w ||
      sh_raster.height != h)
    throw std::invalid_argument("assemble_gaussians: raster size mismatch");

  GaussianSet set;
  set.sh_degree = sh_degree_from_channels(sh_raster.channels);

  const PointMap centers = ray_points(rays, depth, &raw.depth_offset);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (centers.is_valid(x, y)) {
        lo = lo.cwiseMin(centers.at(x, y));
        hi = hi.cwiseMax(centers.at(x, y));
      }
  const double diag = (hi - lo).allFinite() ? (hi - lo).norm() : 0.0;
  const double cap = diag > 0 ? 0.1 * diag : kMinScale;
  const ActivatedParams act = activate_params(raw, cap);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!centers.is_valid(x, y)) continue;
      set.centers.push_back(centers.at(x, y));
      set.opacities.push_back(act.alpha.at(x, y, 0));
      set.rotations.push_back(Vec4(act.rotation.at(x, y, 0),
                                   act.rotation.at(x, y, 1),
                                   act.rotation.at(x, y, 2),
                                   act.rotation.at(x, y, 3)));
      set.scales.push_back(Vec3(act.scale.at(x, y, 0), act.scale.at(x, y, 1),
                                act.scale.at(x, y, 2)));
      for (int c = 0; c < sh_raster.channels; ++c)
        set.sh.push_back(sh_raster.at(x, y, c));
    }
  }
  return set;
}

// Real SH basis, 3DGS convention, degrees 0..3.
namespace sh_detail {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {
    1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
    -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {
    -0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
    0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
    -0.5900435899266435};
}  // namespace sh_detail

/// Evaluates the (degree+1)^2 real SH basis functions at a unit direction.
inline void sh_basis(int degree, const Vec3& dir, std::span<double> out) {
  if (degree < 0 || degree > kMaxShDegree)
    throw std::invalid_argument("sh_basis: unsupported degree");
  if (out.size() != size_t(sh_coeff_count(degree)))
    throw std::invalid_argument("sh_basis: output span size mismatch");
  using namespace sh_detail;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kC0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2[0] * x * y;
  out[5] = kC2[1] * y * z;
  out[6] = kC2[2] * (2.0 * zz - xx - yy);
  out[7] = kC2[3] * x * z;
  out[8] = kC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3[0] * y * (3.0 * xx - yy);
  out[10] = kC3[1] * x * y * z;
  out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kC3[5] * z * (xx - yy);
  out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

/// color = clamp(0.5 + sum c_b * Y_b(dir), 0, 1) per channel. Coefficients
/// are basis-major with rgb innermost.
inline Vec3 sh_to_color(std::span<const double> coeffs, int degree,
                        const Vec3& view_dir) {
  const int n = sh_coeff_count(degree);
  if (coeffs.size() != size_t(3 * n))
    throw std::invalid_argument("sh_to_color: coefficient count mismatch");
  std::array<double, 16> basis{};
  sh_basis(degree, view_dir, std::span<double>(basis.data(), size_t(n)));
  Vec3 color(0.5, 0.5, 0.5);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < 3; ++c) color[c] += basis[b] * coeffs[size_t(b) * 3 + c];
  return color.cwiseMax(0.0).cwiseMin(1.0);
}

inline AppearanceEmbedding interpolate_embedding(const AppearanceEmbedding& e1,
                                                 const AppearanceEmbedding& e2,
                                                 double t) {
  if (e1.dim() != e2.dim())
    throw std::invalid_argument("interpolate_embedding: dimension mismatch");
  return AppearanceEmbedding((1.0 - t) * e1.values + t * e2.values);
}

}  // namespace splatkit
