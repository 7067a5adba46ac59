#pragma once

// Rank-dependent expected utility (RDEU) on empirical samples.
//
// RDEU is evaluated through its quantile representation
//
//     R[Y] = - \int_0^1 U(F_Y^{-1}(s)) gamma(s) ds
//
// against the left-continuous empirical quantile function, whose cells are
// ((i-1)/N, i/N]. All supported distortions have a piecewise-constant gamma,
// so every cell integral is evaluated in closed form. Lower is better.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdro {

/// Distortion weight gamma on (0,1), piecewise constant on
/// (0, alpha], (alpha, beta], (beta, 1).
class Distortion {
 public:
  enum class Kind { AlphaBeta, CVaR, UTE, Expectation };

  /// Two-sided alpha-beta distortion mixing the lower alpha-tail (weight
  /// p_weight) and the upper (1-beta)-tail.
  static Distortion alpha_beta(double alpha, double beta, double p_weight) {
    if (!(alpha > 0.0 && alpha <= beta && beta < 1.0)) {
      throw std::invalid_argument("alpha-beta distortion requires 0 < alpha <= beta < 1");
    }
    if (!(p_weight >= 0.0 && p_weight <= 1.0)) {
      throw std::invalid_argument("alpha-beta distortion requires 0 <= p_weight <= 1");
    }
    const double eta = p_weight * alpha + (1.0 - p_weight) * (1.0 - beta);
    if (!(eta > 0.0)) {
      throw std::invalid_argument("alpha-beta distortion has a vanishing normaliser");
    }
    return {Kind::AlphaBeta, alpha, beta, p_weight, p_weight / eta, 0.0, (1.0 - p_weight) / eta};
  }

  /// Mean of the worst alpha-fraction of outcomes.
  static Distortion cvar(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("CVaR requires 0 < alpha < 1");
    }
    // Same cut points and densities as alpha_beta(alpha, alpha, 1).
    return {Kind::CVaR, alpha, alpha, 1.0, 1.0 / alpha, 0.0, 0.0};
  }

  /// Mean of the best (1-beta)-fraction of outcomes.
  static Distortion ute(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
      throw std::invalid_argument("UTE requires 0 < beta < 1");
    }
    return {Kind::UTE, beta, beta, 0.0, 0.0, 0.0, 1.0 / (1.0 - beta)};
  }

  static Distortion expectation() { return {Kind::Expectation, 0.5, 0.5, 0.0, 1.0, 1.0, 1.0}; }

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double p_weight() const { return p_weight_; }

  /// gamma(u); the indicator at u == alpha and at u == beta takes the lower branch.
  double gamma(double u) const {
    if (!(u > 0.0 && u < 1.0)) {
      throw std::domain_error("gamma is defined on the open interval (0,1)");
    }
    return gamma_unchecked(u);
  }

  double gamma_unchecked(double u) const {
    if (u <= alpha_) return lower_;
    if (u <= beta_) return middle_;
    return upper_;
  }

  /// Closed-form \int_a^b gamma(s) ds for 0 <= a <= b <= 1.
  double integral(double a, double b) const {
    const auto overlap = [a, b](double lo, double hi) {
      return std::max(0.0, std::min(b, hi) - std::max(a, lo));
    };
    return lower_ * overlap(0.0, alpha_) + middle_ * overlap(alpha_, beta_) +
           upper_ * overlap(beta_, 1.0);
  }

  /// Largest value gamma takes.
  double max_weight() const { return std::max({lower_, middle_, upper_}); }

  std::string describe() const {
    std::ostringstream os;
    switch (kind_) {
      case Kind::AlphaBeta:
        os << "alpha-beta(alpha=" << alpha_ << ", beta=" << beta_ << ", p=" << p_weight_ << ")";
        break;
      case Kind::CVaR: os << "cvar(" << alpha_ << ")"; break;
      case Kind::UTE: os << "ute(" << beta_ << ")"; break;
      case Kind::Expectation: os << "expectation"; break;
    }
    return os.str();
  }

 private:
  Distortion(Kind kind, double alpha, double beta, double p, double lower, double middle,
             double upper)
      : kind_(kind), alpha_(alpha), beta_(beta), p_weight_(p), lower_(lower), middle_(middle),
        upper_(upper) {}

  Kind kind_;
  double alpha_;
  double beta_;
  double p_weight_;
  double lower_;
  double middle_;
  double upper_;
};

/// Non-decreasing concave utility U with derivative U'.
class Utility {
 public:
  enum class Kind { Linear, Exponential, Power };

  static Utility linear() { return {Kind::Linear, 0.0}; }

  /// U(x) = (1 - exp(-a x)) / a.
  static Utility exponential(double risk_aversion) {
    if (!(risk_aversion > 0.0)) {
      throw std::invalid_argument("exponential utility requires a positive risk aversion");
    }
    return {Kind::Exponential, risk_aversion};
  }

  /// U(x) = x^e on x > 0.
  static Utility power(double exponent) {
    if (!(exponent > 0.0 && exponent < 1.0)) {
      throw std::invalid_argument("power utility requires an exponent in (0,1)");
    }
    return {Kind::Power, exponent};
  }

  Kind kind() const { return kind_; }
  double parameter() const { return param_; }

  double value(double x) const {
    switch (kind_) {
      case Kind::Linear: return x;
      case Kind::Exponential: return -std::expm1(-param_ * x) / param_;
      case Kind::Power: check_positive(x); return std::pow(x, param_);
    }
    return x;
  }

  double derivative(double x) const {
    switch (kind_) {
      case Kind::Linear: return 1.0;
      case Kind::Exponential: return std::exp(-param_ * x);
      case Kind::Power: check_positive(x); return param_ * std::pow(x, param_ - 1.0);
    }
    return 1.0;
  }

 private:
  Utility(Kind kind, double param) : kind_(kind), param_(param) {}

  static void check_positive(double x) {
    if (!(x > 0.0)) throw std::domain_error("power utility is only defined for positive outcomes");
  }

  Kind kind_;
  double param_;
};

/// Sample of real outcomes with its ascending order.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("empirical distribution needs at least one sample");
    order_.resize(values_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [this](std::size_t a, std::size_t b) { return values_[a] < values_[b]; });
    sorted_.reserve(values_.size());
    for (auto i : order_) sorted_.push_back(values_[i]);
  }

  explicit EmpiricalDistribution(std::span<const double> values)
      : EmpiricalDistribution(std::vector<double>(values.begin(), values.end())) {}

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& sorted() const { return sorted_; }
  /// order()[k] is the index of the k-th smallest value.
  const std::vector<std::size_t>& order() const { return order_; }

  double mean() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(size());
  }

 private:
  std::vector<double> values_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
};

inline double gamma_eval(const Distortion& dist, double u) { return dist.gamma(u); }

/// Weight \int_{(k-1)/N}^{k/N} gamma for the k-th order statistic (k is 0-based).
inline std::vector<double> quantile_cell_weights(const Distortion& dist, std::size_t n) {
  std::vector<double> w(n);
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = dist.integral(static_cast<double>(k) / nn, static_cast<double>(k + 1) / nn);
  }
  return w;
}

inline double rdeu(const EmpiricalDistribution& samples, const Distortion& dist,
                   const Utility& util) {
  const auto& y = samples.sorted();
  const auto w = quantile_cell_weights(dist, y.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (w[k] != 0.0) acc += util.value(y[k]) * w[k];
  }
  return -acc;
}

inline double rdeu(std::span<const double> samples, const Distortion& dist, const Utility& util) {
  return rdeu(EmpiricalDistribution(samples), dist, util);
}

struct RdeuSummary {
  double cvar_alpha = 0.0;  ///< mean of the worst alpha-tail of the outcome
  double ute_beta = 0.0;    ///< mean of the best (1-beta)-tail
  double mean = 0.0;
};

/// Wealth-convention tail statistics: CVaR and UTE are reported as tail means,
/// i.e. the negated RDEU under a linear utility.
inline RdeuSummary rdeu_summary(const EmpiricalDistribution& samples, double alpha, double beta) {
  const auto lin = Utility::linear();
  return {-rdeu(samples, Distortion::cvar(alpha), lin), -rdeu(samples, Distortion::ute(beta), lin),
          samples.mean()};
}

inline RdeuSummary rdeu_summary(std::span<const double> samples, double alpha, double beta) {
  return rdeu_summary(EmpiricalDistribution(samples), alpha, beta);
}

}  // namespace rdro
