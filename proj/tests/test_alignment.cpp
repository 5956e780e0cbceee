#include "splatkit/alignment.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "scene_fixtures.hpp"
#include "test_support.hpp"

using namespace splatkit;
using testsup::Rng;

namespace {

PointMap points_from(const std::vector<Vec3>& pts, int w, int h) {
  PointMap m(w, h, FrameTag::world());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, pts[size_t(y) * w + x]);
  return m;
}

AlignmentWeights uniform_weights(int w, int h, double value = 1.0) {
  AlignmentWeights weights(w, h, 1);
  for (auto& v : weights.values) v = value;
  return weights;
}

struct WlsProblem {
  std::vector<PointMap> pred, ref;
  std::vector<AlignmentWeights> weights;
};

WlsProblem random_problem(Rng& rng, int w, int h, double a, const Vec3& b,
                          double noise_sigma = 0.0, bool random_weights = false) {
  std::normal_distribution<double> noise(0.0, noise_sigma);
  std::vector<Vec3> p(size_t(w) * h), q(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = Vec3(testsup::uniform(rng, -2, 2), testsup::uniform(rng, -2, 2),
                testsup::uniform(rng, 1, 5));
    q[i] = a * p[i] + b;
    if (noise_sigma > 0) q[i] += Vec3(noise(rng), noise(rng), noise(rng));
  }
  WlsProblem prob;
  prob.pred.push_back(points_from(p, w, h));
  prob.ref.push_back(points_from(q, w, h));
  AlignmentWeights weights = uniform_weights(w, h);
  if (random_weights)
    for (auto& v : weights.values) v = testsup::uniform(rng, 0.05, 1.0);
  prob.weights.push_back(weights);
  return prob;
}

double objective(const WlsProblem& prob, double a, const Vec3& b) {
  double sum = 0, sw = 0;
  for (size_t i = 0; i < prob.pred.size(); ++i)
    for (int y = 0; y < prob.pred[i].height; ++y)
      for (int x = 0; x < prob.pred[i].width; ++x) {
        const double w = prob.weights[i].at(x, y, 0);
        if (!(w > 0) || !prob.pred[i].is_valid(x, y)) continue;
        sum += w * (a * prob.pred[i].at(x, y) + b - prob.ref[i].at(x, y))
                       .squaredNorm();
        sw += w;
      }
  return sum / sw;
}

// Independent oracle: assemble the raw (uncentered) 4x4 normal equations and
// solve with a dense pivoted LU.
std::pair<double, Vec3> dense_solver_oracle(const WlsProblem& prob) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  for (size_t i = 0; i < prob.pred.size(); ++i)
    for (int y = 0; y < prob.pred[i].height; ++y)
      for (int x = 0; x < prob.pred[i].width; ++x) {
        const double w = prob.weights[i].at(x, y, 0);
        if (!(w > 0) || !prob.pred[i].is_valid(x, y)) continue;
        const Vec3 p = prob.pred[i].at(x, y);
        const Vec3 q = prob.ref[i].at(x, y);
        Eigen::Matrix<double, 3, 4> X;
        X.col(0) = p;
        X.block<3, 3>(0, 1) = Mat3::Identity();
        m += w * X.transpose() * X;
        rhs += w * X.transpose() * q;
      }
  const Eigen::Vector4d sol = m.fullPivLu().solve(rhs);
  return {sol(0), sol.segment<3>(1)};
}

}  // namespace

TEST_CASE("consistency_weights: identical views give unit weights") {
  Rng rng(11001);
  fixtures::SlabScene scene;
  scene.backdrop_z = 5.0;
  PinholeCamera cam(60, 60, 24, 18, 48, 36);
  const ViewRecord v = fixtures::make_view(0, cam, scene);
  const auto [w1, w2] = consistency_weights(v, v);
  for (double w : w1.values) CHECK(w == Catch::Approx(1.0));
  for (double w : w2.values) CHECK(w == Catch::Approx(1.0));
}

TEST_CASE("consistency_weights: log-2 residual and sky zeroing") {
  fixtures::SlabScene scene;
  scene.backdrop_z = 4.0;
  PinholeCamera cam(60, 60, 16, 12, 32, 24);
  ViewRecord v1 = fixtures::make_view(0, cam, scene);
  ViewRecord v2 = fixtures::make_view(1, cam, scene);
  // Double the second view's depth at one pixel: the warp of (7,5) lands on
  // itself, so both directions see a log(2) residual there.
  v2.aligned_depth.set(7, 5, 2.0 * v1.aligned_depth.at(7, 5));
  v1.sky.set(3, 3, 1.0);

  const auto [w1, w2] = consistency_weights(v1, v2, 10.0);
  CHECK(w1.at(7, 5, 0) == Catch::Approx(std::pow(2.0, -10.0)).epsilon(1e-12));
  CHECK(w1.at(3, 3, 0) == 0.0);   // sky pixel
  CHECK(w1.at(10, 10, 0) == Catch::Approx(1.0));
  CHECK(w2.at(7, 5, 0) == Catch::Approx(std::pow(2.0, -10.0)).epsilon(1e-12));
}

TEST_CASE("consistency_weights: out-of-bounds warps get zero weight") {
  fixtures::SlabScene scene;
  scene.backdrop_z = 4.0;
  PinholeCamera cam_a(60, 60, 16, 12, 32, 24);
  Pose far_off;
  far_off.translation = Vec3(-50, 0, 0);
  PinholeCamera cam_b(60, 60, 16, 12, 32, 24, far_off);
  const ViewRecord a = fixtures::make_view(0, cam_a, scene);
  const ViewRecord b = fixtures::make_view(1, cam_b, scene);
  const auto [w1, w2] = consistency_weights(a, b);
  for (double w : w1.values) CHECK(w == 0.0);
}

TEST_CASE("wls_scale_translation: noiseless recovery to 1e-9") {
  Rng rng(11002);
  const Vec3 b_true(1, -1, 3);
  const WlsProblem prob = random_problem(rng, 20, 15, 2.0, b_true);
  const SimScaleTranslation t =
      wls_scale_translation(prob.pred, prob.ref, prob.weights);
  CHECK(std::abs(t.scale - 2.0) < 1e-9);
  CHECK((t.translation - b_true).norm() < 1e-9);
}

TEST_CASE("wls_scale_translation: zero-weight points are excluded") {
  Rng rng(11003);
  WlsProblem prob = random_problem(rng, 10, 10, 1.5, Vec3(0.2, 0.4, -0.1));
  const SimScaleTranslation clean =
      wls_scale_translation(prob.pred, prob.ref, prob.weights);

  // Corrupt one point but zero its weight: the solution must not move.
  WlsProblem outlier = prob;
  outlier.ref[0].set(3, 4, Vec3(1e6, -1e6, 1e6));
  outlier.weights[0].set(3, 4, 0, 0.0);
  const SimScaleTranslation same =
      wls_scale_translation(outlier.pred, outlier.ref, outlier.weights);
  CHECK(std::abs(same.scale - clean.scale) < 1e-12);
  CHECK((same.translation - clean.translation).norm() < 1e-12);
}

TEST_CASE("wls_scale_translation: matches a dense solver oracle on 10k points") {
  Rng rng(11004);
  const WlsProblem prob =
      random_problem(rng, 100, 100, 1.3, Vec3(0.5, -2, 1), 0.05, true);
  const SimScaleTranslation t =
      wls_scale_translation(prob.pred, prob.ref, prob.weights);
  const auto [oa, ob] = dense_solver_oracle(prob);
  CHECK(std::abs(t.scale - oa) < 1e-8);
  CHECK((t.translation - ob).norm() < 1e-8);

  // Objective at the solution beats 10k random perturbations.
  const double at_solution = objective(prob, t.scale, t.translation);
  for (int i = 0; i < 10000 / 4; ++i) {
    const double da = testsup::uniform(rng, -0.2, 0.2);
    const Vec3 db(testsup::uniform(rng, -0.2, 0.2),
                  testsup::uniform(rng, -0.2, 0.2),
                  testsup::uniform(rng, -0.2, 0.2));
    CHECK(objective(prob, t.scale + da, t.translation + db) >=
          at_solution - 1e-12);
  }

  // Finite-difference gradient of the normalized objective vanishes.
  const double h = 1e-6;
  double grad_norm_sq = 0;
  {
    const double gp = objective(prob, t.scale + h, t.translation);
    const double gm = objective(prob, t.scale - h, t.translation);
    grad_norm_sq += std::pow((gp - gm) / (2 * h), 2);
  }
  for (int c = 0; c < 3; ++c) {
    Vec3 e = Vec3::Zero();
    e[c] = h;
    const double gp = objective(prob, t.scale, t.translation + e);
    const double gm = objective(prob, t.scale, t.translation - e);
    grad_norm_sq += std::pow((gp - gm) / (2 * h), 2);
  }
  CHECK(std::sqrt(grad_norm_sq) < 1e-8);
}

TEST_CASE("wls_scale_translation: degenerate and orientation errors") {
  // All points identical: the centered system is singular.
  std::vector<Vec3> same(16, Vec3(1, 2, 3));
  std::vector<PointMap> pred{points_from(same, 4, 4)};
  std::vector<PointMap> ref{points_from(same, 4, 4)};
  std::vector<AlignmentWeights> w{uniform_weights(4, 4)};
  CHECK_THROWS_AS(wls_scale_translation(pred, ref, w), std::runtime_error);

  // Mirrored data wants a negative scale.
  Rng rng(11005);
  WlsProblem prob = random_problem(rng, 6, 6, 1.0, Vec3::Zero());
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      prob.ref[0].set(x, y, -2.0 * prob.pred[0].at(x, y));
  CHECK_THROWS_AS(
      wls_scale_translation(prob.pred, prob.ref, prob.weights),
      std::runtime_error);

  // Too few weighted points.
  WlsProblem tiny = random_problem(rng, 2, 2, 1.0, Vec3::Zero());
  for (auto& v : tiny.weights[0].values) v = 0.0;
  tiny.weights[0].set(0, 0, 0, 1.0);
  CHECK_THROWS_AS(wls_scale_translation(tiny.pred, tiny.ref, tiny.weights),
                  std::runtime_error);
}

TEST_CASE("apply_alignment: identity, similarity scaling, attribute preservation") {
  Rng rng(11006);
  GaussianSet g;
  g.sh_degree = 1;
  for (int i = 0; i < 20; ++i) {
    g.centers.push_back(Vec3(testsup::uniform(rng, -2, 2),
                             testsup::uniform(rng, -2, 2),
                             testsup::uniform(rng, -2, 2)));
    g.opacities.push_back(testsup::uniform(rng, 0.1, 0.9));
    Vec4 q(testsup::uniform(rng, -1, 1), testsup::uniform(rng, -1, 1),
           testsup::uniform(rng, -1, 1), testsup::uniform(rng, -1, 1));
    g.rotations.push_back(q.normalized());
    g.scales.push_back(Vec3(testsup::uniform(rng, 0.01, 1),
                            testsup::uniform(rng, 0.01, 1),
                            testsup::uniform(rng, 0.01, 1)));
    for (size_t k = 0; k < g.sh_stride(); ++k)
      g.sh.push_back(testsup::uniform(rng, -1, 1));
  }
  g.validate();

  const GaussianSet same = apply_alignment(g, SimScaleTranslation{1.0, Vec3::Zero()});
  CHECK(same.centers[3] == g.centers[3]);
  CHECK(same.scales[7] == g.scales[7]);

  const SimScaleTranslation t{2.0, Vec3(0.3, -0.7, 1.1)};
  const GaussianSet scaled = apply_alignment(g, t);
  for (size_t i = 1; i < g.size(); ++i) {
    const double before = (g.centers[i] - g.centers[0]).norm();
    const double after = (scaled.centers[i] - scaled.centers[0]).norm();
    CHECK(after == Catch::Approx(2.0 * before));
  }
  CHECK(scaled.opacities == g.opacities);
  CHECK(scaled.sh == g.sh);
  for (size_t i = 0; i < g.size(); ++i) {
    CHECK(scaled.rotations[i] == g.rotations[i]);
    CHECK((scaled.scales[i] - 2.0 * g.scales[i]).norm() == 0.0);
  }

  CHECK_THROWS_AS(apply_alignment(g, SimScaleTranslation{-1.0, Vec3::Zero()}),
                  std::invalid_argument);
}

TEST_CASE("alignment_residual: acceptance, rejection and weight invariance") {
  Rng rng(11007);
  const WlsProblem prob = random_problem(rng, 12, 12, 3.0, Vec3(1, 0, -1));

  const SimScaleTranslation good{3.0, Vec3(1, 0, -1)};
  const auto perfect =
      alignment_residual(prob.pred, prob.ref, prob.weights, good);
  CHECK(perfect.value == Catch::Approx(0.0).margin(1e-18));
  CHECK_FALSE(perfect.reject);

  const SimScaleTranslation identity{1.0, Vec3::Zero()};
  const auto off = alignment_residual(prob.pred, prob.ref, prob.weights, identity);
  CHECK(off.value > kDefaultRejectThreshold);
  CHECK(off.reject);

  // Scaling all weights by a constant leaves the normalized value unchanged.
  WlsProblem scaled = prob;
  for (auto& v : scaled.weights[0].values) v *= 7.5;
  const auto off2 =
      alignment_residual(scaled.pred, scaled.ref, scaled.weights, identity);
  CHECK(off2.value == Catch::Approx(off.value).epsilon(1e-12));

  WlsProblem zero = prob;
  for (auto& v : zero.weights[0].values) v = 0.0;
  CHECK_THROWS_AS(alignment_residual(zero.pred, zero.ref, zero.weights, good),
                  std::runtime_error);
}
