#pragma once

// Mini-batch policy-gradient estimators for the robust RDEU problem
//
//     inf_phi sup_theta R[X^theta]  s.t.  d_p[X^theta, X^phi] <= eps,
//
// with the constraint handled by the augmented Lagrangian
//     L = R[X^theta] + lambda c + (mu/2) c^2,   c = (d_p^p - eps^p)_+.
//
// Gradients of quantile-based functionals are obtained through the KDE
// identity  grad F^{-1}(s) = -grad F(x) / f(x) = sum_j w_ij grad x_j,
// where w are the normalised kernel weights of the batch. Estimators are
// returned as per-sample cotangents; a Pullback turns a cotangent into a
// parameter gradient (a vector-Jacobian product over the batch).

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "rdro/density.hpp"
#include "rdro/optim.hpp"
#include "rdro/risk.hpp"
#include "rdro/wasserstein.hpp"

namespace rdro {

struct RiskSpec {
  Distortion distortion = Distortion::expectation();
  Utility utility = Utility::linear();
  WassersteinSpec wasserstein{};
  KdeSpec kde{};
};

/// sum_j a_j grad x_j for a cotangent a over the batch.
using Pullback = std::function<std::vector<double>(std::span<const double>)>;

class EstimatorError : public std::runtime_error {
 public:
  EstimatorError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (sample " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct SampleBatch {
  std::vector<double> x_phi;
  std::vector<double> x_theta;
  std::vector<std::vector<double>> y;  ///< exogenous noise, optional
  Pullback theta_pullback;             ///< over x_theta, wrt theta
  Pullback phi_pullback_theta;         ///< over x_theta, wrt phi (theta frozen)
  Pullback phi_pullback_phi;           ///< over x_phi in its original order, wrt phi

  std::size_t size() const { return x_theta.size(); }
};

/// Lambda = (lambda + mu c) 1{d_p > eps} for the batch.
struct LambdaWeight {
  double value = 0.0;
  double distance = 0.0;
  double constraint_error = 0.0;
};

inline LambdaWeight lambda_weight(std::span<const double> x_theta, std::span<const double> x_phi,
                                  const WassersteinSpec& w, const LagrangeState& ls) {
  LambdaWeight out;
  const double dp = distance_power(x_theta, x_phi, w);
  out.distance = w.order == 1.0 ? dp : (w.order == 2.0 ? std::sqrt(dp) : std::pow(dp, 1.0 / w.order));
  out.constraint_error = std::max(dp - w.epsilon_power(), 0.0);
  out.value = out.distance > w.epsilon ? ls.lambda + ls.mu * out.constraint_error : 0.0;
  return out;
}

namespace detail {

inline void check_batch(std::span<const double> x_phi, std::span<const double> x_theta) {
  if (x_theta.size() != x_phi.size()) throw std::invalid_argument("x_theta and x_phi lengths differ");
  if (x_theta.size() < 2) throw std::invalid_argument("gradient estimators need N >= 2");
  for (std::size_t i = 0; i < x_theta.size(); ++i) {
    if (!std::isfinite(x_theta[i])) throw EstimatorError("non-finite x_theta", i);
    if (!std::isfinite(x_phi[i])) throw EstimatorError("non-finite x_phi", i);
  }
}

/// gamma(F(x_i)) for every point. F is non-decreasing along the sorted sample,
/// so only the two breakpoints of gamma need locating.
inline std::vector<double> gamma_at_kde_levels(std::span<const double> x, const Kde& kde,
                                               const Distortion& dist) {
  const std::size_t n = x.size();
  std::vector<double> g(n);
  if (dist.kind() == Distortion::Kind::Expectation) {
    std::fill(g.begin(), g.end(), 1.0);
    return g;
  }
  const auto order = ascending_order(x);
  const auto first_above = [&](double level) {
    std::size_t lo = 0;
    std::size_t hi = n;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (kde.cdf(x[order[mid]]) > level) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  };
  const std::size_t ka = first_above(dist.alpha());
  const std::size_t kb = std::max(ka, first_above(dist.beta()));
  for (std::size_t k = 0; k < n; ++k) {
    const double u = k < ka ? dist.alpha() : (k < kb ? dist.beta() : 1.0);
    g[order[k]] = dist.gamma_unchecked(u);
  }
  return g;
}

/// |d|^{p-1} sgn(d)
inline double iota(double d, double p) {
  if (d == 0.0) return 0.0;
  const double s = d > 0.0 ? 1.0 : -1.0;
  if (p == 1.0) return s;
  if (p == 2.0) return d;
  return s * std::pow(std::abs(d), p - 1.0);
}

inline void check_cotangent(std::span<const double> a, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) throw EstimatorError(std::string("non-finite ") + what + " cotangent", i);
  }
}

}  // namespace detail

/// Cotangents on x_theta of the two parts of dL/dtheta.
struct InnerCotangents {
  std::vector<double> risk;     ///< gradient of R[X^theta]
  std::vector<double> penalty;  ///< gradient of lambda c + (mu/2) c^2
  LambdaWeight lambda;

  /// risk_sign * risk + penalty.
  std::vector<double> combined(double risk_sign = 1.0) const {
    std::vector<double> out(risk.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = risk_sign * risk[i] + penalty[i];
    return out;
  }
};

/// Per-sample terms of
///   dL/dtheta = -(1/N) sum_i [U'(x_i) gamma(F(x_i)) - p Lambda iota_i] sum_j w_ij grad x_j,
/// with iota_i = |x_i - xc_i|^{p-1} sgn(x_i - xc_i) against the comonotonic
/// reorder xc of x_phi.
inline InnerCotangents inner_cotangents(std::span<const double> x_phi, std::span<const double> x_theta,
                                        const RiskSpec& spec, const LagrangeState& ls) {
  detail::check_batch(x_phi, x_theta);
  const std::size_t n = x_theta.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Kde kde(x_theta, spec.kde);

  InnerCotangents out;
  out.lambda = lambda_weight(x_theta, x_phi, spec.wasserstein, ls);

  auto k = detail::gamma_at_kde_levels(x_theta, kde, spec.distortion);
  for (std::size_t i = 0; i < n; ++i) {
    if (k[i] != 0.0) k[i] *= spec.utility.derivative(x_theta[i]);
  }
  if (out.lambda.value > 0.0) {
    const double p = spec.wasserstein.order;
    const auto xc = comonotonic_pair(x_theta, x_phi);
    std::vector<double> pen(n);
    for (std::size_t i = 0; i < n; ++i) pen[i] = p * out.lambda.value * detail::iota(x_theta[i] - xc[i], p);
    std::tie(out.risk, out.penalty) = kde.pullback(k, pen);
  } else {
    out.risk = kde.pullback(k);
    out.penalty.assign(n, 0.0);
  }
  for (auto& a : out.risk) a *= -inv_n;
  for (auto& a : out.penalty) a *= inv_n;
  detail::check_cotangent(out.risk, "risk");
  detail::check_cotangent(out.penalty, "penalty");
  return out;
}

/// Gradient of L with respect to the adversary parameters theta. This is the
/// gradient of R + lambda c + (mu/2) c^2; a maximising adversary combines the
/// parts itself (see InnerCotangents::combined).
inline std::vector<double> inner_gradient(const SampleBatch& batch, const RiskSpec& spec,
                                          const LagrangeState& ls) {
  if (!batch.theta_pullback) throw std::invalid_argument("inner gradient needs a theta pullback");
  const auto cot = inner_cotangents(batch.x_phi, batch.x_theta, spec, ls);
  return batch.theta_pullback(cot.combined());
}

struct OuterCotangents {
  std::vector<double> theta;  ///< on x_theta
  std::vector<double> phi;    ///< on x_phi, original order; zero when Lambda = 0
  LambdaWeight lambda;
};

/// Per-sample terms of dL/dphi. With Q_theta, Q_phi the KDE quantile functions,
/// the penalty differentiates |Q_theta(s) - Q_phi(s)|^p, so the reference
/// sample enters with kernel rows of the reordered x_phi and opposite sign.
/// With penalty_active = false Lambda is forced to zero (binding inner constraint).
inline OuterCotangents outer_cotangents(std::span<const double> x_phi, std::span<const double> x_theta,
                                        const RiskSpec& spec, const LagrangeState& ls,
                                        bool penalty_active = true) {
  detail::check_batch(x_phi, x_theta);
  const std::size_t n = x_theta.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Kde kde_theta(x_theta, spec.kde);

  OuterCotangents out;
  out.lambda = lambda_weight(x_theta, x_phi, spec.wasserstein, ls);
  if (!penalty_active) out.lambda.value = 0.0;

  auto k = detail::gamma_at_kde_levels(x_theta, kde_theta, spec.distortion);
  for (std::size_t i = 0; i < n; ++i) {
    if (k[i] != 0.0) k[i] *= spec.utility.derivative(x_theta[i]);
  }
  out.phi.assign(n, 0.0);
  if (out.lambda.value > 0.0) {
    const double p = spec.wasserstein.order;
    const auto perm = comonotonic_permutation(x_theta, x_phi);
    std::vector<double> coef_phi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = p * out.lambda.value * detail::iota(x_theta[i] - x_phi[perm[i]], p);
      k[i] -= t;
      coef_phi[perm[i]] = t;
    }
    const Kde kde_phi(x_phi, spec.kde);
    out.phi = kde_phi.pullback(coef_phi);
    for (auto& a : out.phi) a *= -inv_n;
    detail::check_cotangent(out.phi, "reference");
  }
  out.theta = kde_theta.pullback(k);
  for (auto& a : out.theta) a *= -inv_n;
  detail::check_cotangent(out.theta, "outer");
  return out;
}

inline std::vector<double> outer_gradient(const SampleBatch& batch, const RiskSpec& spec,
                                          const LagrangeState& ls, bool penalty_active = true) {
  if (!batch.phi_pullback_theta) throw std::invalid_argument("outer gradient needs a phi pullback over x_theta");
  const auto cot = outer_cotangents(batch.x_phi, batch.x_theta, spec, ls, penalty_active);
  auto g = batch.phi_pullback_theta(cot.theta);
  if (cot.lambda.value > 0.0) {
    if (!batch.phi_pullback_phi) throw std::invalid_argument("outer gradient needs a phi pullback over x_phi");
    const auto gp = batch.phi_pullback_phi(cot.phi);
    if (gp.size() != g.size()) throw std::invalid_argument("phi pullbacks disagree on parameter count");
    for (std::size_t k2 = 0; k2 < g.size(); ++k2) g[k2] += gp[k2];
  }
  return g;
}

/// One simulated path of a randomised policy: its terminal outcome and the
/// accumulated score sum_t grad_phi log pi(a_t | x_t).
struct ScorePath {
  double outcome = 0.0;
  std::vector<double> score;
  double weight = -1.0;  ///< probability weight; negative means 1/N
};

/// Score-function estimate of grad_phi G(x) for the smoothed distribution
/// function G(x) = E[K((x - X)/h)], one gradient row per grid point:
///   sum_m w_m score_m K((x - x_m)/h).
inline std::vector<std::vector<double>> randomized_cdf_gradient(std::span<const ScorePath> paths,
                                                                std::span<const double> x_grid,
                                                                const KdeSpec& kde) {
  if (paths.empty()) throw std::invalid_argument("randomised policy gradient needs at least one path");
  const std::size_t dim = paths.front().score.size();
  std::vector<double> outcomes;
  outcomes.reserve(paths.size());
  for (const auto& p : paths) {
    if (p.score.size() != dim) throw std::invalid_argument("score vectors differ in length");
    outcomes.push_back(p.outcome);
  }
  const double h = bandwidth(outcomes, kde);
  const double uniform = 1.0 / static_cast<double>(paths.size());
  std::vector<std::vector<double>> out(x_grid.size(), std::vector<double>(dim, 0.0));
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    auto& row = out[g];
    for (const auto& p : paths) {
      const double w = (p.weight < 0.0 ? uniform : p.weight) * kde.kernel.cdf((x_grid[g] - p.outcome) / h);
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < dim; ++k) row[k] += w * p.score[k];
    }
  }
  return out;
}

}  // namespace rdro
