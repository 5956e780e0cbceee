#include "splatkit/gaussians.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace splatkit;
using testsup::Rng;

namespace {

FeatureMap random_map(Rng& rng, int w, int h, int c, double lo = -2,
                      double hi = 2) {
  FeatureMap m(w, h, c);
  for (auto& v : m.values) v = testsup::uniform(rng, lo, hi);
  return m;
}

RawHeadOutputs random_raw(Rng& rng, int w, int h, int d_l) {
  return RawHeadOutputs(random_map(rng, w, h, 1, -4, 4),
                        random_map(rng, w, h, 4),
                        random_map(rng, w, h, 3, -3, 1),
                        random_map(rng, w, h, 1, -0.2, 0.2),
                        random_map(rng, w, h, d_l));
}

ConvLayer identity_1x1(int channels) {
  ConvLayer layer;
  layer.out_channels = channels;
  layer.in_channels = channels;
  layer.kernel_size = 1;
  layer.padding = 0;
  layer.kernel.assign(size_t(channels) * channels, 0.0);
  layer.bias.assign(channels, 0.0);
  for (int c = 0; c < channels; ++c)
    layer.kernel[layer.kernel_index(c, c, 0, 0)] = 1.0;
  return layer;
}

ConvLayer random_layer(Rng& rng, int out_c, int in_c, int k, int pad) {
  ConvLayer layer;
  layer.out_channels = out_c;
  layer.in_channels = in_c;
  layer.kernel_size = k;
  layer.padding = pad;
  layer.kernel.resize(size_t(out_c) * in_c * k * k);
  layer.bias.resize(out_c);
  for (auto& v : layer.kernel) v = testsup::uniform(rng, -1, 1);
  for (auto& v : layer.bias) v = testsup::uniform(rng, -1, 1);
  return layer;
}

// Independent reference: plain sextuple loop over the output raster.
FeatureMap conv2d_reference(const FeatureMap& in, const ConvLayer& layer) {
  const int k = layer.kernel_size, p = layer.padding;
  FeatureMap out(in.width + 2 * p - k + 1, in.height + 2 * p - k + 1,
                 layer.out_channels);
  for (int o = 0; o < layer.out_channels; ++o)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        double acc = layer.bias[o];
        for (int i = 0; i < layer.in_channels; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy - p + ky, ix = ox - p + kx;
              const double pix =
                  (ix >= 0 && ix < in.width && iy >= 0 && iy < in.height)
                      ? in.at(ix, iy, i)
                      : 0.0;
              acc += pix * layer.kernel[layer.kernel_index(o, i, ky, kx)];
            }
        out.set(ox, oy, o, acc);
      }
  return out;
}

}  // namespace

TEST_CASE("activate_params: sigmoid, normalization, exp") {
  FeatureMap logit(2, 1, 1), rot(2, 1, 4), scale(2, 1, 3), off(2, 1, 1),
      feat(2, 1, 1);
  logit.set(0, 0, 0, 0.0);
  logit.set(1, 0, 0, 100.0);
  rot.set(0, 0, 0, 2.0);  // (2,0,0,0) -> (1,0,0,0)
  // pixel (1,0): all-zero quaternion -> identity
  const RawHeadOutputs raw(logit, rot, scale, off, feat);
  const ActivatedParams act = activate_params(raw);

  CHECK(act.alpha.at(0, 0, 0) == Catch::Approx(0.5));
  CHECK(act.alpha.at(1, 0, 0) < 1.0);
  CHECK(act.alpha.at(1, 0, 0) > 0.99);

  CHECK(act.rotation.at(0, 0, 0) == Catch::Approx(1.0));
  CHECK(act.rotation.at(0, 0, 1) == Catch::Approx(0.0));
  CHECK(act.rotation.at(1, 0, 0) == Catch::Approx(1.0));

  CHECK(act.scale.at(0, 0, 0) == Catch::Approx(1.0));  // exp(0) = 1
}

TEST_CASE("activate_params: scale clamping") {
  FeatureMap logit(1, 1, 1), rot(1, 1, 4), scale(1, 1, 3), off(1, 1, 1),
      feat(1, 1, 1);
  scale.set(0, 0, 0, 50.0);    // exp(50) huge
  scale.set(0, 0, 1, -50.0);   // exp(-50) tiny
  scale.set(0, 0, 2, 0.0);
  rot.set(0, 0, 0, 1.0);
  const RawHeadOutputs raw(logit, rot, scale, off, feat);
  const ActivatedParams act = activate_params(raw, 2.0);
  CHECK(act.scale.at(0, 0, 0) == Catch::Approx(2.0));
  CHECK(act.scale.at(0, 0, 1) == Catch::Approx(1e-6));
  CHECK(act.scale.at(0, 0, 2) == Catch::Approx(1.0));
}

TEST_CASE("conv2d_forward: identity and constant kernels") {
  Rng rng(10001);
  const FeatureMap input = random_map(rng, 6, 5, 3);

  const FeatureMap same = conv2d_forward(input, identity_1x1(3));
  CHECK(same.values == input.values);

  ConvLayer zero = random_layer(rng, 2, 3, 3, 1);
  std::fill(zero.kernel.begin(), zero.kernel.end(), 0.0);
  zero.bias = {0.7, -0.3};
  const FeatureMap constant = conv2d_forward(input, zero);
  for (int y = 0; y < constant.height; ++y)
    for (int x = 0; x < constant.width; ++x) {
      CHECK(constant.at(x, y, 0) == Catch::Approx(0.7));
      CHECK(constant.at(x, y, 1) == Catch::Approx(-0.3));
    }
}

TEST_CASE("conv2d_forward matches the naive reference") {
  Rng rng(10002);
  for (int trial = 0; trial < 8; ++trial) {
    const int in_c = 1 + trial % 3;
    const int out_c = 1 + (trial + 1) % 3;
    const int k = (trial % 2) ? 3 : 1;
    const int pad = (trial % 2) ? 1 : 0;
    const FeatureMap input = random_map(rng, 8, 8, in_c);
    const ConvLayer layer = random_layer(rng, out_c, in_c, k, pad);
    const FeatureMap got = conv2d_forward(input, layer);
    const FeatureMap ref = conv2d_reference(input, layer);
    REQUIRE(got.values.size() == ref.values.size());
    for (size_t i = 0; i < got.values.size(); ++i)
      CHECK(std::abs(got.values[i] - ref.values[i]) < 1e-6);
  }
  // Shape mismatch is rejected.
  Rng rng2(1);
  const FeatureMap input = random_map(rng2, 4, 4, 2);
  const ConvLayer wrong = random_layer(rng2, 1, 3, 3, 1);
  CHECK_THROWS_AS(conv2d_forward(input, wrong), std::invalid_argument);
}

namespace {

ConvHeadWeights linear_head(Rng& rng, int d_l, int d_g, int out_ch,
                            bool zero_embedding_columns = false) {
  ConvHeadWeights w;
  w.inter_activation = Activation::Identity;
  w.layer1 = random_layer(rng, 8, d_l + d_g, 1, 0);
  w.layer2 = random_layer(rng, out_ch, 8, 1, 0);
  if (zero_embedding_columns)
    for (int o = 0; o < w.layer1.out_channels; ++o)
      for (int i = d_l; i < d_l + d_g; ++i)
        w.layer1.kernel[w.layer1.kernel_index(o, i, 0, 0)] = 0.0;
  return w;
}

}  // namespace

TEST_CASE("appearance_head: zero weights give a constant raster") {
  Rng rng(10003);
  const int d_l = 4, d_g = 8;
  ConvHeadWeights w = linear_head(rng, d_l, d_g, 3);
  std::fill(w.layer2.kernel.begin(), w.layer2.kernel.end(), 0.0);
  w.layer2.bias = {0.25, 0.5, 0.75};

  const FeatureMap f = random_map(rng, 5, 4, d_l);
  Eigen::VectorXd e1v = Eigen::VectorXd::Random(d_g);
  Eigen::VectorXd e2v = Eigen::VectorXd::Random(d_g);
  const FeatureMap out1 = appearance_head(f, AppearanceEmbedding(e1v), w);
  const FeatureMap out2 = appearance_head(f, AppearanceEmbedding(e2v), w);
  CHECK(out1.values == out2.values);
  for (int y = 0; y < out1.height; ++y)
    for (int x = 0; x < out1.width; ++x) {
      CHECK(out1.at(x, y, 0) == Catch::Approx(0.25));
      CHECK(out1.at(x, y, 2) == Catch::Approx(0.75));
    }
}

TEST_CASE("appearance_head: linear head is affine in the embedding") {
  Rng rng(10004);
  const int d_l = 3, d_g = 6;
  const ConvHeadWeights w = linear_head(rng, d_l, d_g, 12);
  const FeatureMap f = random_map(rng, 6, 6, d_l);

  const AppearanceEmbedding zero(Eigen::VectorXd::Zero(d_g));
  const AppearanceEmbedding e1(Eigen::VectorXd::Random(d_g));
  const AppearanceEmbedding e2(Eigen::VectorXd::Random(d_g));
  const AppearanceEmbedding sum(e1.values + e2.values);

  const FeatureMap o0 = appearance_head(f, zero, w);
  const FeatureMap o1 = appearance_head(f, e1, w);
  const FeatureMap o2 = appearance_head(f, e2, w);
  const FeatureMap os = appearance_head(f, sum, w);
  for (size_t i = 0; i < os.values.size(); ++i)
    CHECK(std::abs(o1.values[i] + o2.values[i] - o0.values[i] - os.values[i]) <
          1e-6);
}

TEST_CASE("appearance_head: zero embedding columns make it e-invariant") {
  Rng rng(10005);
  const int d_l = 3, d_g = 5;
  const ConvHeadWeights w = linear_head(rng, d_l, d_g, 3, true);
  const FeatureMap f = random_map(rng, 4, 4, d_l);
  const FeatureMap a =
      appearance_head(f, AppearanceEmbedding(Eigen::VectorXd::Random(d_g)), w);
  const FeatureMap b =
      appearance_head(f, AppearanceEmbedding(Eigen::VectorXd::Random(d_g)), w);
  CHECK(a.values == b.values);

  // While generic weights react to the embedding.
  const ConvHeadWeights wg = linear_head(rng, d_l, d_g, 3, false);
  const FeatureMap c =
      appearance_head(f, AppearanceEmbedding(Eigen::VectorXd::Random(d_g)), wg);
  const FeatureMap d =
      appearance_head(f, AppearanceEmbedding(Eigen::VectorXd::Random(d_g)), wg);
  CHECK(c.values != d.values);
}

TEST_CASE("assemble_gaussians: counts follow pixel validity") {
  Rng rng(10006);
  const int w = 2, h = 2;
  RayMap rays(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      rays.set(x, y, Vec3(x, y, 0), Vec3(0, 0, 1));
  DepthMap depth(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) depth.set(x, y, 2.0);

  RawHeadOutputs raw = random_raw(rng, w, h, 3);
  FeatureMap sh = random_map(rng, w, h, 3);

  const GaussianSet all = assemble_gaussians(rays, depth, raw, sh);
  CHECK(all.size() == 4);
  CHECK(all.sh_degree == 0);
  all.validate();

  raw.depth_offset.set(1, 1, 0, -5.0);  // D + dD <= 0 at one pixel
  const GaussianSet three = assemble_gaussians(rays, depth, raw, sh);
  CHECK(three.size() == 3);
}

TEST_CASE("assemble_gaussians: centers match ray_points exactly") {
  Rng rng(10007);
  const int w = 5, h = 4;
  RayMap rays(w, h);
  DepthMap depth(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      rays.set(x, y, Vec3(testsup::uniform(rng, -1, 1), 0, 0),
               testsup::random_unit_vector(rng));
      depth.set(x, y, testsup::uniform(rng, 1.0, 4.0));
    }
  const RawHeadOutputs raw = random_raw(rng, w, h, 2);
  const FeatureMap sh = random_map(rng, w, h, 12);

  const GaussianSet set = assemble_gaussians(rays, depth, raw, sh);
  const PointMap expect = ray_points(rays, depth, &raw.depth_offset);
  size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!expect.is_valid(x, y)) continue;
      CHECK((set.centers[k] - expect.at(x, y)).norm() == 0.0);
      ++k;
    }
  CHECK(k == set.size());
  CHECK(set.sh_degree == 1);
}

TEST_CASE("assemble_gaussians: random inputs always satisfy the invariants") {
  Rng rng(10008);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 3 + trial % 4, h = 2 + trial % 3;
    RayMap rays(w, h);
    DepthMap depth(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        rays.set(x, y, Vec3::Zero(), testsup::random_unit_vector(rng));
        depth.set(x, y, testsup::uniform(rng, 0.1, 10.0));
      }
    const RawHeadOutputs raw = random_raw(rng, w, h, 1 + trial % 5);
    const FeatureMap sh = random_map(rng, w, h, 3 * (1 + trial % 2) * (1 + trial % 2));
    const GaussianSet set = assemble_gaussians(rays, depth, raw, sh);
    CHECK_NOTHROW(set.validate());
  }
}

TEST_CASE("sh_to_color: DC conventions") {
  const std::vector<double> zeros{0, 0, 0};
  const Vec3 grey = sh_to_color(zeros, 0, Vec3::UnitZ());
  CHECK(grey.x() == Catch::Approx(0.5));

  const double c0 = 0.5 / 0.28209479177387814;
  const std::vector<double> bright{c0, c0, c0};
  const Vec3 white = sh_to_color(bright, 0, Vec3::UnitZ());
  CHECK(white.x() == Catch::Approx(1.0));
  CHECK(white.y() == Catch::Approx(1.0));

  // Degree-0 color ignores the view direction.
  Rng rng(10009);
  const std::vector<double> coeffs{0.3, -0.1, 0.2};
  const Vec3 ref = sh_to_color(coeffs, 0, Vec3::UnitZ());
  for (int i = 0; i < 20; ++i) {
    const Vec3 dir = testsup::random_unit_vector(rng);
    CHECK((sh_to_color(coeffs, 0, dir) - ref).norm() == 0.0);
  }
}

TEST_CASE("sh_basis is orthonormal under spherical quadrature") {
  // Midpoint product rule over (theta, phi); smooth integrand, so the grid
  // error is far below the 1e-4 gate.
  const int n_theta = 400, n_phi = 400;
  const int n = sh_coeff_count(3);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  std::array<double, 16> basis{};
  for (int it = 0; it < n_theta; ++it) {
    const double theta = (it + 0.5) * M_PI / n_theta;
    for (int ip = 0; ip < n_phi; ++ip) {
      const double phi = (ip + 0.5) * 2.0 * M_PI / n_phi;
      const Vec3 dir(std::sin(theta) * std::cos(phi),
                     std::sin(theta) * std::sin(phi), std::cos(theta));
      sh_basis(3, dir, basis);
      const double weight =
          std::sin(theta) * (M_PI / n_theta) * (2.0 * M_PI / n_phi);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) gram(i, j) += weight * basis[i] * basis[j];
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double expect = (i == j) ? 1.0 : 0.0;
      INFO("gram(" << i << "," << j << ")");
      CHECK(std::abs(gram(i, j) - expect) < 1e-4);
    }
}

TEST_CASE("interpolate_embedding: endpoints, cancellation, symmetry") {
  Rng rng(10010);
  const AppearanceEmbedding e1(Eigen::VectorXd::Random(16));
  const AppearanceEmbedding e2(Eigen::VectorXd::Random(16));

  CHECK(interpolate_embedding(e1, e2, 0.0).values == e1.values);
  CHECK(interpolate_embedding(e1, e2, 1.0).values == e2.values);

  const AppearanceEmbedding neg(-e1.values);
  CHECK(interpolate_embedding(e1, neg, 0.5).values.norm() == 0.0);

  for (int i = 0; i < 20; ++i) {
    const double t = testsup::uniform(rng, 0, 1);
    const auto a = interpolate_embedding(e1, e2, t);
    const auto b = interpolate_embedding(e2, e1, 1.0 - t);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-15);
  }

  const AppearanceEmbedding small(Eigen::VectorXd::Random(4));
  CHECK_THROWS_AS(interpolate_embedding(e1, small, 0.5), std::invalid_argument);
}
