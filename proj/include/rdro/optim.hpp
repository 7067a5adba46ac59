#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdro {

class NonFiniteGradient : public std::domain_error {
 public:
  NonFiniteGradient(std::size_t index, double value)
      : std::domain_error("non-finite gradient entry at index " + std::to_string(index) + " (" +
                          std::to_string(value) + ")"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Bias-corrected ADAM; descends the supplied gradient.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  Adam(std::size_t n, Options opt) : opt_(opt), m_(n, 0.0), v_(n, 0.0) {}

  const Options& options() const { return opt_; }
  std::size_t steps() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw std::invalid_argument("ADAM step: parameter/gradient length mismatch");
    }
    for (std::size_t k = 0; k < grad.size(); ++k) {
      if (!std::isfinite(grad[k])) throw NonFiniteGradient(k, grad[k]);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < grad.size(); ++k) {
      m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * grad[k];
      v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * grad[k] * grad[k];
      const double mhat = m_[k] / c1;
      const double vhat = v_[k] / c2;
      params[k] -= opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.epsilon);
    }
  }

 private:
  Options opt_{};
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Multiplier state of the augmented Lagrangian
///   L = R + lambda c + (mu/2) c^2.
struct LagrangeState {
  double lambda = 1.0;
  double mu = 10.0;
  double growth = 1.5;
  std::size_t update_period = 50;
  double mu_max = 1e8;  ///< mu stops growing here

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lagrange multiplier must be >= 0");
    if (!(mu > 0.0)) throw std::invalid_argument("penalty mu must be > 0");
    if (!(growth > 1.0)) throw std::invalid_argument("penalty growth must be > 1");
    if (update_period == 0) throw std::invalid_argument("multiplier update period must be positive");
    if (!(mu_max >= mu)) throw std::invalid_argument("mu_max must be >= mu");
  }
};

/// lambda <- lambda + mu c, mu <- growth mu.
inline LagrangeState lagrange_update(LagrangeState s, double constraint_err) {
  if (!(constraint_err >= 0.0)) throw std::invalid_argument("constraint error must be >= 0");
  s.lambda += s.mu * constraint_err;
  s.mu = std::min(s.growth * s.mu, s.mu_max);
  return s;
}

inline double lagrangian_value(double rdeu_value, double constraint_err, const LagrangeState& s) {
  return rdeu_value + s.lambda * constraint_err + 0.5 * s.mu * constraint_err * constraint_err;
}

}  // namespace rdro
