#pragma once

// Randomised-policy toy problems with brute-force reference gradients.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rdro/nn.hpp"
#include "rdro/pg.hpp"

namespace oracle {

/// Two states, two actions, softmax policy over a one-hot state, horizon T.
/// Action a moves the chain to state a with probability 0.8 and to 1-a
/// otherwise; the outcome is the summed reward r[s][a].
struct TwoStateChain {
  std::size_t horizon = 3;
  std::array<std::array<double, 2>, 2> reward{{{0.0, 1.0}, {-0.5, 2.0}}};
  double stay = 0.8;
  rdro::Mlp policy = rdro::Mlp({2, 2}, rdro::OutputActivation::softmax());

  TwoStateChain() {
    const double init[] = {0.3, -0.2, 0.1, 0.5, -0.4, 0.2};
    std::copy(std::begin(init), std::end(init), policy.parameters().begin());
  }

  /// pi(a | s) straight from the parameter layout (W row-major, then b).
  static double prob(std::span<const double> theta, std::size_t s, std::size_t a) {
    const double l0 = theta[0 * 2 + s] + theta[4];
    const double l1 = theta[1 * 2 + s] + theta[5];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    return (a == 0 ? e0 : e1) / (e0 + e1);
  }

  /// Every (action, next state) history from state 0: outcome, probability
  /// and, through the network, the policy score.
  std::vector<rdro::ScorePath> enumerate() const {
    std::vector<rdro::ScorePath> out;
    const std::size_t branches = std::size_t{1} << (2 * horizon);
    const auto theta = policy.parameters();
    for (std::size_t code = 0; code < branches; ++code) {
      rdro::ScorePath path;
      path.score.assign(policy.param_count(), 0.0);
      double w = 1.0;
      std::size_t s = 0;
      for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t a = (code >> (2 * t)) & 1;
        const bool moved_as_asked = ((code >> (2 * t + 1)) & 1) == 0;
        const double pa = prob(theta, s, a);
        w *= pa * (moved_as_asked ? stay : 1.0 - stay);
        path.outcome += reward[s][a];
        const double in[2] = {s == 0 ? 1.0 : 0.0, s == 1 ? 1.0 : 0.0};
        rdro::Tape tape;
        policy.forward(in, tape);
        double cot[2] = {0.0, 0.0};
        cot[a] = 1.0 / tape.output[a];
        policy.backward(tape, cot, path.score);
        s = moved_as_asked ? a : 1 - a;
      }
      path.weight = w;
      out.push_back(std::move(path));
    }
    return out;
  }

  /// Smoothed G(x) = sum over histories of probability * Phi((x - X)/h),
  /// evaluated without the score machinery.
  double smoothed_cdf(std::span<const double> theta, double x, double h) const {
    const std::size_t branches = std::size_t{1} << (2 * horizon);
    double g = 0.0;
    for (std::size_t code = 0; code < branches; ++code) {
      double w = 1.0;
      double outcome = 0.0;
      std::size_t s = 0;
      for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t a = (code >> (2 * t)) & 1;
        const bool moved_as_asked = ((code >> (2 * t + 1)) & 1) == 0;
        w *= prob(theta, s, a) * (moved_as_asked ? stay : 1.0 - stay);
        outcome += reward[s][a];
        s = moved_as_asked ? a : 1 - a;
      }
      g += w * 0.5 * std::erfc(-(x - outcome) / (h * std::sqrt(2.0)));
    }
    return g;
  }

  /// Central differences of smoothed_cdf, one row per grid point.
  std::vector<std::vector<double>> reference_gradient(std::span<const double> grid, double h) const {
    std::vector<double> theta(policy.parameters().begin(), policy.parameters().end());
    std::vector<std::vector<double>> out(grid.size(), std::vector<double>(theta.size()));
    const double step = 1e-5;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      for (std::size_t g = 0; g < grid.size(); ++g) {
        theta[k] = keep + step;
        const double up = smoothed_cdf(theta, grid[g], h);
        theta[k] = keep - step;
        const double dn = smoothed_cdf(theta, grid[g], h);
        out[g][k] = (up - dn) / (2 * step);
      }
      theta[k] = keep;
    }
    return out;
  }
};

/// One step: the action a ~ N(m, sigma^2) with sigma = exp(log_sigma) is the
/// outcome. Score (a-m)/sigma^2 and (a-m)^2/sigma^2 - 1.
struct GaussianOneStep {
  double m = 0.3;
  double log_sigma = std::log(0.8);

  std::vector<rdro::ScorePath> simulate(std::size_t n, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const double sigma = std::exp(log_sigma);
    std::vector<rdro::ScorePath> out(n);
    for (auto& p : out) {
      const double e = z(rng);
      p.outcome = m + sigma * e;
      p.score = {e / sigma, e * e - 1.0};
    }
    return out;
  }

  /// grad of int Phi((x - a)/h) pdf(a) da by midpoint quadrature of the
  /// parameter derivative of the normal density.
  std::vector<std::vector<double>> quadrature(std::span<const double> grid, double h, int cells = 200000) const {
    const double sigma = std::exp(log_sigma);
    const boost::math::normal nd(m, sigma);
    const double lo = m - 12 * sigma;
    const double da = 24 * sigma / cells;
    std::vector<std::vector<double>> out(grid.size(), std::vector<double>(2, 0.0));
    for (int c = 0; c < cells; ++c) {
      const double a = lo + (c + 0.5) * da;
      const double f = boost::math::pdf(nd, a);
      const double u = (a - m) / sigma;
      const double dm = f * u / sigma;
      const double ds = f * (u * u - 1.0);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double k = 0.5 * std::erfc(-(grid[g] - a) / (h * std::sqrt(2.0)));
        out[g][0] += k * dm * da;
        out[g][1] += k * ds * da;
      }
    }
    return out;
  }
};

inline double matrix_relative_error(const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) {
      num += (a[r][c] - b[r][c]) * (a[r][c] - b[r][c]);
      den += b[r][c] * b[r][c];
    }
  }
  return std::sqrt(num / den);
}

}  // namespace oracle
