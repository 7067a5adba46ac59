#pragma once

// Alternating optimisation of the robust problem: an inner augmented-Lagrangian
// loop trains the adversary on a frozen reference batch, and an outer loop
// takes ADAM steps on the policy against the trained adversary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdro/optim.hpp"
#include "rdro/pg.hpp"
#include "rdro/risk.hpp"
#include "rdro/wasserstein.hpp"

namespace rdro {

/// splitmix64 finaliser; derives independent stream seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream * 0x100000001B3ULL + index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Generator of the reference outcome X^phi, owning the policy parameters phi.
class ReferenceModel {
 public:
  virtual ~ReferenceModel() = default;
  /// Simulates a fresh batch and keeps what the pullback needs.
  virtual std::vector<double> sample(std::size_t n, std::uint64_t seed) = 0;
  virtual std::span<double> parameters() = 0;
  /// sum_j a_j grad_phi x_phi_j for the last sampled batch.
  virtual std::vector<double> pullback(std::span<const double> cotangent) = 0;
};

/// Produces X^theta from the last reference batch.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual std::span<double> parameters() = 0;
  virtual std::vector<double> push(std::span<const double> x_phi) = 0;
  /// sum_j a_j grad_theta x_theta_j for the last push.
  virtual std::vector<double> pullback_parameters(std::span<const double> cotangent) = 0;
  /// Cotangent on x_phi induced through x_theta = H(x_phi), for the last push.
  virtual std::vector<double> pullback_input(std::span<const double> cotangent) = 0;
};

enum class Direction { Maximize, Minimize };

struct StoppingRule {
  enum class Kind {
    RelativeChange,  ///< windowed mean moves by less than rel_tol
    NoImprovement,   ///< best value unchanged for `window` iterations
  };
  Kind kind = Kind::RelativeChange;
  double rel_tol = 0.01;
  std::size_t window = 50;
  std::size_t max_iterations = 2000;
  std::size_t min_iterations = 0;
};

struct TraceRow {
  std::string phase;  ///< "inner" or "outer"
  std::size_t outer = 0;
  std::size_t inner = 0;
  double rdeu = 0.0;            ///< R[X^theta]
  double reference_rdeu = 0.0;  ///< R[X^phi]
  double distance = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
  double constraint_error = 0.0;
};

struct InnerOptions {
  Direction direction = Direction::Maximize;
  StoppingRule stopping{StoppingRule::Kind::RelativeChange, 0.01, 50, 2000, 100};
  Adam::Options adam{};
  /// Constraint counts as satisfied when c <= tol * eps^p on the training batch.
  double feasibility_tol = 0.05;
  /// Same test on the fresh validation batch, whose distance carries sampling error.
  double validation_tol = 0.10;
  std::size_t trace_every = 50;
};

struct InnerResult {
  double rdeu = 0.0;            ///< on the validation batch
  double reference_rdeu = 0.0;  ///< on the validation batch
  double distance = 0.0;
  double constraint_error = 0.0;
  bool constraint_satisfied = false;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> x_phi;    ///< validation batch
  std::vector<double> x_theta;
  std::vector<double> window_means;  ///< training RDEU averaged per stopping window
};

namespace detail {

inline bool feasible(double constraint_err, const WassersteinSpec& w, double tol) {
  if (!std::isfinite(w.epsilon)) return true;
  return constraint_err <= tol * w.epsilon_power();
}

inline double spread(std::span<const double> x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(std::max<std::size_t>(x.size() - 1, 1)));
}

/// Tracks a stopping rule over a stream of objective values.
class StopMonitor {
 public:
  StopMonitor(StoppingRule rule, Direction better, double scale)
      : rule_(rule), better_(better), scale_(scale) {}

  /// Feeds one value; returns true once the rule is met.
  bool update(double value, bool feasible) {
    ++count_;
    if (rule_.kind == StoppingRule::Kind::RelativeChange) {
      acc_ += value;
      if (count_ % rule_.window != 0) return false;
      const double mean = acc_ / static_cast<double>(rule_.window);
      acc_ = 0.0;
      means_.push_back(mean);
      if (means_.size() < 2 || count_ < rule_.min_iterations || !feasible) return false;
      const double prev = means_[means_.size() - 2];
      return std::abs(mean - prev) <= rule_.rel_tol * std::max(std::abs(prev), scale_);
    }
    const bool improved = better_ == Direction::Maximize ? value > best_ : value < best_;
    if (!feasible) {
      since_ = 0;
      return false;
    }
    if (improved || !seen_) {
      best_ = value;
      seen_ = true;
      since_ = 0;
      return false;
    }
    ++since_;
    return since_ >= rule_.window && count_ >= rule_.min_iterations;
  }

  const std::vector<double>& window_means() const { return means_; }

 private:
  StoppingRule rule_;
  Direction better_;
  double scale_;
  std::size_t count_ = 0;
  double acc_ = 0.0;
  std::vector<double> means_;
  double best_ = 0.0;
  bool seen_ = false;
  std::size_t since_ = 0;
};

}  // namespace detail

/// Inner problem: trains the adversary on a fixed reference batch.
class InnerSolver {
 public:
  InnerSolver(Adversary& adversary, RiskSpec spec, LagrangeState multipliers, InnerOptions options)
      : adv_(adversary), spec_(std::move(spec)), initial_(multipliers), ls_(multipliers),
        opt_(options), adam_(adversary.parameters().size(), options.adam) {
    spec_.wasserstein.validate();
    ls_.validate();
  }

  const LagrangeState& multipliers() const { return ls_; }
  LagrangeState& multipliers() { return ls_; }
  void reset_multipliers() { ls_ = initial_; }
  const RiskSpec& spec() const { return spec_; }
  const InnerOptions& options() const { return opt_; }
  Adversary& adversary() { return adv_; }

  /// Runs the inner loop on x_phi, then validates on a fresh reference batch
  /// drawn from `reference` with `validation_seed`.
  InnerResult solve(std::span<const double> x_phi, ReferenceModel& reference, std::uint64_t validation_seed,
                    std::vector<TraceRow>* trace = nullptr, std::size_t outer_index = 0) {
    const double risk_sign = opt_.direction == Direction::Maximize ? -1.0 : 1.0;
    const double ref_rdeu = rdeu(x_phi, spec_.distortion, spec_.utility);
    detail::StopMonitor monitor(opt_.stopping, opt_.direction, detail::spread(x_phi));
    auto params = adv_.parameters();
    std::optional<std::vector<double>> best;
    double best_value = 0.0;

    InnerResult out;
    std::size_t it = 0;
    for (; it < opt_.stopping.max_iterations; ++it) {
      const auto x_theta = adv_.push(x_phi);
      const auto cot = inner_cotangents(x_phi, x_theta, spec_, ls_);
      const double value = rdeu(x_theta, spec_.distortion, spec_.utility);
      const bool ok = detail::feasible(cot.lambda.constraint_error, spec_.wasserstein, opt_.feasibility_tol);
      if (ok && (!best || better(value, best_value))) {
        best.emplace(params.begin(), params.end());
        best_value = value;
      }
      if (trace && (it % opt_.trace_every == 0)) {
        trace->push_back({"inner", outer_index, it, value, ref_rdeu, cot.lambda.distance, ls_.lambda, ls_.mu,
                          cot.lambda.constraint_error});
      }
      if (monitor.update(value, ok)) {
        out.converged = true;
        break;
      }
      const auto grad = adv_.pullback_parameters(cot.combined(risk_sign));
      adam_.step(params, grad);
      if ((it + 1) % ls_.update_period == 0) ls_ = lagrange_update(ls_, cot.lambda.constraint_error);
    }
    if (!out.converged && best) std::copy(best->begin(), best->end(), params.begin());
    out.iterations = it;
    out.window_means = monitor.window_means();

    out.x_phi = reference.sample(x_phi.size(), validation_seed);
    out.x_theta = adv_.push(out.x_phi);
    const auto lw = lambda_weight(out.x_theta, out.x_phi, spec_.wasserstein, ls_);
    out.distance = lw.distance;
    out.constraint_error = lw.constraint_error;
    out.constraint_satisfied = detail::feasible(lw.constraint_error, spec_.wasserstein, opt_.validation_tol);
    out.rdeu = rdeu(out.x_theta, spec_.distortion, spec_.utility);
    out.reference_rdeu = rdeu(out.x_phi, spec_.distortion, spec_.utility);
    return out;
  }

 private:
  bool better(double a, double b) const { return opt_.direction == Direction::Maximize ? a > b : a < b; }

  Adversary& adv_;
  RiskSpec spec_;
  LagrangeState initial_;
  LagrangeState ls_;
  InnerOptions opt_;
  Adam adam_;
};

struct OuterOptions {
  StoppingRule stopping{StoppingRule::Kind::RelativeChange, 0.01, 20, 200, 40};
  Adam::Options adam{1e-2, 0.9, 0.999, 1e-8};
  std::size_t batch_size = 2048;
  std::uint64_t seed = 1;
  /// Outer steps use Lambda = 0 unless set.
  bool penalty_in_outer = false;
  /// Multipliers restart from their initial values at every outer iteration.
  bool reset_multipliers = false;
  std::size_t max_inner_retries = 2;
};

struct OuterResult {
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t skipped_steps = 0;
  InnerResult last_inner;
};

/// Outer problem: alternates inner solves and policy steps.
inline OuterResult solve_outer(ReferenceModel& reference, InnerSolver& inner, const OuterOptions& opt,
                               std::vector<TraceRow>* trace = nullptr) {
  const auto& spec = inner.spec();
  auto phi = reference.parameters();
  Adam adam(phi.size(), opt.adam);
  OuterResult out;
  std::optional<detail::StopMonitor> monitor;

  std::size_t i = 0;
  for (; i < opt.stopping.max_iterations; ++i) {
    const auto x_phi = reference.sample(opt.batch_size, derive_seed(opt.seed, 1, i));
    if (!monitor) monitor.emplace(opt.stopping, Direction::Minimize, detail::spread(x_phi));
    if (opt.reset_multipliers) inner.reset_multipliers();

    InnerResult res;
    for (std::size_t attempt = 0;; ++attempt) {
      res = inner.solve(x_phi, reference, derive_seed(opt.seed, 2, i * 16 + attempt), trace, i);
      if (res.constraint_satisfied || attempt >= opt.max_inner_retries) break;
      auto& ls = inner.multipliers();
      ls.mu = std::min(ls.mu * ls.growth, ls.mu_max);
    }
    out.last_inner = res;

    const double ref_value = res.reference_rdeu;
    if (trace) {
      trace->push_back({"outer", i, res.iterations, res.rdeu, ref_value, res.distance, inner.multipliers().lambda,
                        inner.multipliers().mu, res.constraint_error});
    }
    if (!res.constraint_satisfied) {
      ++out.skipped_steps;
      continue;
    }
    // The reference model and the adversary both hold the validation batch.
    const auto cot = outer_cotangents(res.x_phi, res.x_theta, spec, inner.multipliers(), opt.penalty_in_outer);
    auto cot_phi = inner.adversary().pullback_input(cot.theta);
    for (std::size_t k = 0; k < cot_phi.size(); ++k) cot_phi[k] += cot.phi[k];
    const auto grad = reference.pullback(cot_phi);
    if (!grad.empty()) adam.step(phi, grad);

    if (monitor->update(ref_value, true)) {
      out.converged = true;
      ++i;
      break;
    }
  }
  out.iterations = i;
  return out;
}

}  // namespace rdro
