#pragma once

// Independent reference computations for the test suites. Nothing here uses
// the windowed or prefix-sum KDE code paths, the comonotonic helpers or the
// cotangent machinery of the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rdro/density.hpp"
#include "rdro/driver.hpp"
#include "rdro/nn.hpp"
#include "rdro/risk.hpp"

namespace oracle {

inline double kernel_pdf(rdro::KernelKind k, double u) {
  if (k == rdro::KernelKind::Gaussian) return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
  return std::abs(u) < std::sqrt(5.0) ? 0.75 / std::sqrt(5.0) * (1.0 - u * u / 5.0) : 0.0;
}

inline double kernel_cdf(rdro::KernelKind k, double u) {
  if (k == rdro::KernelKind::Gaussian) return 0.5 * std::erfc(-u / std::sqrt(2.0));
  const double r = std::sqrt(5.0);
  if (u <= -r) return 0.0;
  if (u >= r) return 1.0;
  return 0.5 + 0.75 * (u / r) - 0.25 * std::pow(u / r, 3);
}

/// Full-sum smoothed distribution function.
inline double kde_cdf(std::span<const double> pts, double h, rdro::KernelKind k, double x) {
  double s = 0.0;
  for (double p : pts) s += kernel_cdf(k, (x - p) / h);
  return s / static_cast<double>(pts.size());
}

inline double kde_pdf(std::span<const double> pts, double h, rdro::KernelKind k, double x) {
  double s = 0.0;
  for (double p : pts) s += kernel_pdf(k, (x - p) / h);
  return s / (static_cast<double>(pts.size()) * h);
}

/// Solves kde_cdf(x) = s by safeguarded Newton iteration started at guess.
inline double kde_quantile(std::span<const double> pts, double h, rdro::KernelKind k, double s, double guess) {
  const auto [mn, mx] = std::minmax_element(pts.begin(), pts.end());
  double lo = *mn - 50.0 * h;
  double hi = *mx + 50.0 * h;
  const double n = static_cast<double>(pts.size());
  double x = guess;
  for (int it = 0; it < 200; ++it) {
    double cdf = 0.0;
    double pdf = 0.0;
    for (double p : pts) {
      const double u = (x - p) / h;
      cdf += kernel_cdf(k, u);
      pdf += kernel_pdf(k, u);
    }
    const double f = cdf / n - s;
    // residual at the rounding level of the sum
    if (std::abs(f) <= 4.0 * std::numeric_limits<double>::epsilon()) return x;
    if (f > 0.0) {
      hi = std::min(hi, x);
    } else {
      lo = std::max(lo, x);
    }
    const double d = pdf / (n * h);
    double next = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

inline double silverman(std::span<const double> pts) {
  const double n = static_cast<double>(pts.size());
  const double m = std::accumulate(pts.begin(), pts.end(), 0.0) / n;
  double ss = 0.0;
  for (double p : pts) ss += (p - m) * (p - m);
  return 1.06 * std::sqrt(ss / (n - 1.0)) * std::pow(n, -0.2);
}

/// Integer ranks by stable sort.
inline std::vector<std::size_t> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<std::size_t> r(x.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = k;
  return r;
}

inline std::vector<double> sorted(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return s;
}

/// Settings of the frozen-rank surrogate of the augmented Lagrangian.
struct SurrogateSpec {
  rdro::Distortion distortion = rdro::Distortion::expectation();
  rdro::Utility utility = rdro::Utility::linear();
  rdro::KernelKind kernel = rdro::KernelKind::Gaussian;
  double p = 1.0;
  double epsilon = 0.0;
  double lambda = 1.0;
  double mu = 10.0;
  bool penalty = true;
};

/// Inner surrogate around a base sample x0 = x_theta(theta_0):
///   L(theta) = -(1/N) sum_i U(Q_theta(s_i)) gamma(s_i) + lambda c + mu/2 c^2,
///   c = ((1/N) sum_i |Q_theta(s_i) - xc_i|^p - eps^p)_+,
/// where the levels s_i = F_0(x0_i), the bandwidth and the comonotonic
/// partners xc_i of x_phi are frozen at theta_0.
class InnerSurrogate {
 public:
  InnerSurrogate(std::span<const double> x_phi, std::span<const double> x0, SurrogateSpec spec)
      : spec_(spec), x0_(x0.begin(), x0.end()) {
    h_ = silverman(x0);
    const std::size_t n = x0.size();
    s_.resize(n);
    for (std::size_t i = 0; i < n; ++i) s_[i] = kde_cdf(x0, h_, spec_.kernel, x0[i]);
    const auto r = ranks(x0);
    const auto phi_sorted = sorted(x_phi);
    xc_.resize(n);
    for (std::size_t i = 0; i < n; ++i) xc_[i] = phi_sorted[r[i]];
  }

  double operator()(std::span<const double> x) const {
    const std::size_t n = x.size();
    double risk = 0.0;
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = kde_quantile(x, h_, spec_.kernel, s_[i], x[i]);
      const double g = spec_.distortion.kind() == rdro::Distortion::Kind::Expectation ? 1.0 : spec_.distortion.gamma(std::clamp(s_[i], 1e-300, 1.0 - 1e-16));
      risk -= spec_.utility.value(q) * g;
      dist += std::pow(std::abs(q - xc_[i]), spec_.p);
    }
    risk /= static_cast<double>(n);
    dist /= static_cast<double>(n);
    if (!spec_.penalty) return risk;
    const double c = std::max(dist - std::pow(spec_.epsilon, spec_.p), 0.0);
    return risk + spec_.lambda * c + 0.5 * spec_.mu * c * c;
  }

  double bandwidth() const { return h_; }

 private:
  SurrogateSpec spec_;
  std::vector<double> x0_;
  double h_ = 0.0;
  std::vector<double> s_;
  std::vector<double> xc_;
};

/// Outer surrogate: as the inner one, but the reference quantiles move too.
/// The penalty compares Q_theta(s_i) with Q_phi(t_i), where t_i is the frozen
/// level of the comonotonic partner of x_theta_i inside the x_phi sample.
class OuterSurrogate {
 public:
  OuterSurrogate(std::span<const double> x_phi0, std::span<const double> x_theta0, SurrogateSpec spec)
      : spec_(spec) {
    const std::size_t n = x_theta0.size();
    h_theta_ = silverman(x_theta0);
    h_phi_ = silverman(x_phi0);
    s_.resize(n);
    for (std::size_t i = 0; i < n; ++i) s_[i] = kde_cdf(x_theta0, h_theta_, spec_.kernel, x_theta0[i]);
    // partner of x_theta_i: the x_phi sample with the same rank
    const auto rt = ranks(x_theta0);
    const auto rp = ranks(x_phi0);
    std::vector<std::size_t> by_rank(n);
    for (std::size_t j = 0; j < n; ++j) by_rank[rp[j]] = j;
    partner_.resize(n);
    t_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      partner_[i] = by_rank[rt[i]];
      t_[i] = kde_cdf(x_phi0, h_phi_, spec_.kernel, x_phi0[partner_[i]]);
    }
  }

  double operator()(std::span<const double> x_phi, std::span<const double> x_theta) const {
    const std::size_t n = x_theta.size();
    double risk = 0.0;
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = kde_quantile(x_theta, h_theta_, spec_.kernel, s_[i], x_theta[i]);
      const double g = spec_.distortion.kind() == rdro::Distortion::Kind::Expectation ? 1.0 : spec_.distortion.gamma(std::clamp(s_[i], 1e-300, 1.0 - 1e-16));
      risk -= spec_.utility.value(q) * g;
      if (spec_.penalty) {
        const double r = kde_quantile(x_phi, h_phi_, spec_.kernel, t_[i], x_phi[partner_[i]]);
        dist += std::pow(std::abs(q - r), spec_.p);
      }
    }
    risk /= static_cast<double>(n);
    dist /= static_cast<double>(n);
    if (!spec_.penalty) return risk;
    const double c = std::max(dist - std::pow(spec_.epsilon, spec_.p), 0.0);
    return risk + spec_.lambda * c + 0.5 * spec_.mu * c * c;
  }

 private:
  SurrogateSpec spec_;
  double h_theta_ = 0.0;
  double h_phi_ = 0.0;
  std::vector<double> s_;
  std::vector<double> t_;
  std::vector<std::size_t> partner_;
};

/// Central finite-difference gradient of f over params (restored afterwards).
inline std::vector<double> fd_gradient(std::span<double> params, const std::function<double()>& f,
                                       double step = 1e-7) {
  std::vector<double> g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    const double d = step * std::max(1.0, std::abs(saved));
    params[k] = saved + d;
    const double up = f();
    params[k] = saved - d;
    const double down = f();
    params[k] = saved;
    g[k] = (up - down) / (2.0 * d);
  }
  return g;
}

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// x_phi_j = net(z_j) for fixed standard-normal z: a reference model whose
/// batch is a deterministic function of phi, for finite differences.
class NoiseNetReference final : public rdro::ReferenceModel {
 public:
  NoiseNetReference(std::size_t hidden, std::uint64_t seed)
      : net_(rdro::Mlp::he_uniform({1, hidden, 1}, rdro::OutputActivation::identity(), seed)), seed_(seed) {}

  std::vector<double> sample(std::size_t n, std::uint64_t seed) override {
    std::mt19937_64 rng(seed ^ seed_);
    std::normal_distribution<double> z(0.0, 1.0);
    z_.resize(n);
    for (auto& v : z_) v = z(rng);
    return evaluate();
  }

  /// Batch at the current parameters with the last noise.
  std::vector<double> evaluate() {
    tapes_.resize(z_.size());
    std::vector<double> x(z_.size());
    for (std::size_t j = 0; j < z_.size(); ++j) {
      net_.forward(std::span<const double>(&z_[j], 1), tapes_[j]);
      x[j] = tapes_[j].output[0];
    }
    return x;
  }

  std::span<double> parameters() override { return net_.parameters(); }

  std::vector<double> pullback(std::span<const double> cot) override {
    std::vector<double> g(net_.param_count(), 0.0);
    for (std::size_t j = 0; j < cot.size(); ++j) net_.backward(tapes_[j], std::span<const double>(&cot[j], 1), g);
    return g;
  }

 private:
  rdro::Mlp net_;
  std::uint64_t seed_;
  std::vector<double> z_;
  std::vector<rdro::Tape> tapes_;
};

/// Mean of the worst alpha-tail of a standard normal: -pdf(z_alpha)/alpha.
inline double normal_lower_tail_mean(double alpha) {
  const boost::math::normal n;
  return -boost::math::pdf(n, boost::math::quantile(n, alpha)) / alpha;
}

/// RDEU as the Choquet integral
///   int_{-inf}^0 1 - g(P(U(Y) > y)) dy - int_0^inf g(P(U(Y) > y)) dy
/// of the empirical distribution, by midpoint quadrature on `cells` cells
/// spanning the range of U(Y). g(x) = int_{1-x}^1 gamma.
inline double choquet_rdeu(std::span<const double> samples, const rdro::Distortion& dist, const rdro::Utility& util,
                           std::size_t cells = 200000) {
  std::vector<double> u;
  for (double y : samples) u.push_back(util.value(y));
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  const double lo = std::min(u.front(), 0.0);
  const double hi = std::max(u.back(), 0.0);
  if (hi == lo) return 0.0;
  const double dy = (hi - lo) / static_cast<double>(cells);
  double acc = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    const double y = lo + (static_cast<double>(k) + 0.5) * dy;
    const auto above = static_cast<double>(u.end() - std::upper_bound(u.begin(), u.end(), y));
    const double surv = above / n;
    const double g = surv <= 0.0 ? 0.0 : (surv >= 1.0 ? 1.0 : dist.integral(1.0 - surv, 1.0));
    acc += y < 0.0 ? (1.0 - g) * dy : -g * dy;
  }
  return acc;
}

}  // namespace oracle
