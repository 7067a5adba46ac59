#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <vector>

#include "rdro/pg.hpp"
#include "support/gradcheck.hpp"
#include "support/policy_oracles.hpp"

using namespace rdro;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> x(n);
  for (auto& v : x) v = z(rng);
  return x;
}

std::vector<double> sum_pullback(std::span<const double> c) {
  return {std::accumulate(c.begin(), c.end(), 0.0)};
}

}  // namespace

TEST(InnerGradient, ShiftAdversaryExpectation) {
  for (auto k : {KernelKind::Gaussian, KernelKind::Epanechnikov}) {
    SampleBatch b;
    b.x_phi = normals(200, 1);
    b.x_theta = b.x_phi;
    for (auto& v : b.x_theta) v += 0.25;
    b.theta_pullback = sum_pullback;
    RiskSpec spec;
    spec.wasserstein = {1.0, 1.0};  // inside the ball: Lambda = 0
    spec.kde = KdeSpec::silverman(k);
    const auto g = inner_gradient(b, spec, LagrangeState{});
    ASSERT_EQ(g.size(), 1u);
    EXPECT_NEAR(g[0], -1.0, 1e-12);
  }
}

TEST(InnerGradient, ZeroTapeGivesZero) {
  SampleBatch b;
  b.x_phi = normals(50, 2);
  b.x_theta = b.x_phi;
  b.theta_pullback = [](std::span<const double>) { return std::vector<double>(4, 0.0); };
  RiskSpec spec;
  spec.distortion = Distortion::alpha_beta(0.1, 0.9, 0.75);
  for (double v : inner_gradient(b, spec, LagrangeState{})) EXPECT_EQ(v, 0.0);
}

TEST(InnerGradient, Errors) {
  SampleBatch b;
  b.x_phi = {1.0};
  b.x_theta = {1.0};
  b.theta_pullback = sum_pullback;
  EXPECT_THROW(inner_gradient(b, RiskSpec{}, LagrangeState{}), std::invalid_argument);
  b.x_phi = {1.0, 2.0, 3.0};
  b.x_theta = {1.0, std::nan(""), 3.0};
  try {
    inner_gradient(b, RiskSpec{}, LagrangeState{});
    FAIL();
  } catch (const EstimatorError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(OuterGradient, DeterministicScalarWealth) {
  const double phi = 1.7;
  SampleBatch b;
  b.x_phi.assign(64, phi);
  b.x_theta = b.x_phi;
  b.phi_pullback_theta = sum_pullback;
  b.phi_pullback_phi = sum_pullback;
  RiskSpec spec;
  spec.kde = KdeSpec::fixed(0.1);
  const auto g = outer_gradient(b, spec, LagrangeState{}, true);
  EXPECT_NEAR(g[0], -1.0, 1e-12);
}

TEST(LambdaGate, InsideBallPenaltyIsExactlyZero) {
  const auto x_phi = normals(300, 3);
  auto x_theta = normals(300, 4);
  RiskSpec spec;
  spec.distortion = Distortion::cvar(0.2);
  for (double p : {1.0, 2.0}) {
    spec.wasserstein = {p, 0.0};
    const double d = distance(x_theta, x_phi, spec.wasserstein);
    spec.wasserstein.epsilon = d;  // on the boundary counts as inside
    LagrangeState ls;
    ls.lambda = 5.0;
    const auto in = inner_cotangents(x_phi, x_theta, spec, ls);
    EXPECT_EQ(in.lambda.value, 0.0);
    for (double v : in.penalty) EXPECT_EQ(v, 0.0);
    const auto out = outer_cotangents(x_phi, x_theta, spec, ls, true);
    for (double v : out.phi) EXPECT_EQ(v, 0.0);
    spec.wasserstein.epsilon = 0.9 * d;
    EXPECT_GT(inner_cotangents(x_phi, x_theta, spec, ls).lambda.value, 0.0);
  }
}

TEST(Surrogate, InnerAndOuterMatchFiniteDifferences) {
  const Distortion dists[] = {Distortion::alpha_beta(0.1, 0.9, 0.75), Distortion::cvar(0.2), Distortion::ute(0.8),
                              Distortion::expectation()};
  std::uint64_t seed = 10;
  for (auto k : {KernelKind::Gaussian, KernelKind::Epanechnikov}) {
    for (const auto& d : dists) {
      for (double p : {1.0, 2.0}) {
        oracle::GradCase gc;
        gc.distortion = d;
        gc.kernel = k;
        gc.p = p;
        gc.penalty_active = (seed % 2) == 0;
        gc.utility = (seed % 3) == 0 ? Utility::exponential(0.5) : Utility::linear();
        gc.n = 128;
        gc.seed = seed++;
        const auto r = oracle::check_gradients(gc);
        EXPECT_LE(r.inner_error, 1e-3) << gc.describe();
        EXPECT_LE(r.outer_error, 1e-3) << gc.describe();
        EXPECT_EQ(r.inner_lambda > 0.0, gc.penalty_active) << gc.describe();
      }
    }
  }
}

TEST(Surrogate, PairingChangesDoNotBreakAgreement) {
  // Look for a configuration whose comonotonic pairing changes between two
  // adjacent adversaries, then check both.
  oracle::GradCase gc;
  gc.distortion = Distortion::alpha_beta(0.2, 0.7, 0.5);
  gc.p = 2.0;
  gc.n = 128;
  bool found = false;
  for (std::uint64_t seed = 70; seed < 90 && !found; ++seed) {
    gc.seed = seed;
    gc.offset = 0.0;
    const auto base = oracle::check_gradients(gc);
    gc.offset = 0.02;
    const auto moved = oracle::check_gradients(gc);
    if (base.pairing == moved.pairing) continue;
    found = true;
    EXPECT_LE(base.inner_error, 1e-3);
    EXPECT_LE(moved.inner_error, 1e-3);
    EXPECT_LE(base.outer_error, 1e-3);
    EXPECT_LE(moved.outer_error, 1e-3);
  }
  EXPECT_TRUE(found);
}

TEST(RandomizedGradient, ZeroScoreGivesZero) {
  std::vector<ScorePath> paths(20);
  for (std::size_t m = 0; m < paths.size(); ++m) {
    paths[m].outcome = static_cast<double>(m);
    paths[m].score = {0.0, 0.0};
  }
  const std::vector<double> grid{-1.0, 5.0, 30.0};
  for (const auto& row : randomized_cdf_gradient(paths, grid, KdeSpec::silverman()))
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(RandomizedGradient, TwoStateChainEnumeration) {
  const oracle::TwoStateChain chain;
  const auto paths = chain.enumerate();
  double total = 0.0;
  for (const auto& p : paths) total += p.weight;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const double h = 0.3;
  std::vector<double> grid;
  for (double x = -2.0; x <= 7.0; x += 0.25) grid.push_back(x);
  const auto est = randomized_cdf_gradient(paths, grid, KdeSpec::fixed(h));
  const auto ref = chain.reference_gradient(grid, h);
  EXPECT_LE(oracle::matrix_relative_error(est, ref), 1e-3);
}

TEST(RandomizedGradient, GaussianOneStepQuadrature) {
  const oracle::GaussianOneStep toy;
  const auto paths = toy.simulate(100000, 5);
  const double h = 0.2;
  std::vector<double> grid;
  for (double x = -2.0; x <= 2.5; x += 0.25) grid.push_back(x);
  const auto est = randomized_cdf_gradient(paths, grid, KdeSpec::fixed(h));
  const auto ref = toy.quadrature(grid, h, 20000);
  EXPECT_LE(oracle::matrix_relative_error(est, ref), 0.05);
}
