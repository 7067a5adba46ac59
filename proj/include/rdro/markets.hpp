#pragma once

// Scenario simulators: a one-factor return model, an Ornstein-Uhlenbeck asset
// with the trader's own price impact, and a correlated GBM market with a
// short rate for benchmark strategies.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rdro/nn.hpp"

namespace rdro {

/// Row-major sample matrix.
struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// ---------------------------------------------------------------------------
// Factor model: R_i = zeta + Z_i, zeta ~ N(0, s^2), Z_i ~ N(m i, (v i)^2).

struct FactorMarketSpec {
  std::size_t assets = 10;
  double systematic_sd = 0.02;
  double drift_step = 0.03;
  double idiosyncratic_sd_step = 0.025;

  void validate() const {
    if (assets < 1) throw std::invalid_argument("factor market needs at least one asset");
    if (!(systematic_sd > 0.0) || !(idiosyncratic_sd_step > 0.0)) {
      throw std::invalid_argument("factor market standard deviations must be positive");
    }
  }
  double mean(std::size_t i) const { return drift_step * static_cast<double>(i + 1); }
  double idiosyncratic_sd(std::size_t i) const { return idiosyncratic_sd_step * static_cast<double>(i + 1); }
};

inline SampleMatrix simulate_factor_returns(const FactorMarketSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  SampleMatrix out{n, spec.assets, std::vector<double>(n * spec.assets)};
  for (std::size_t r = 0; r < n; ++r) {
    const double zeta = spec.systematic_sd * z(rng);
    for (std::size_t i = 0; i < spec.assets; ++i) {
      out.data[r * spec.assets + i] = zeta + spec.mean(i) + spec.idiosyncratic_sd(i) * z(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistical arbitrage on an OU asset with price impact
//   dS = (kappa (b - S) + c sgn(trade) sqrt|trade|) dt + sigma dW.
//
// At step k the policy sees (t_k / T, S_k, q_k / bound) and returns the
// target inventory q_{k+1} in (-bound, bound); the trade q_{k+1} - q_k is
// executed at S_k and its impact enters the drift of the same step.

struct OuStatArbSpec {
  double kappa = 5.0;
  double mean_level = 1.0;
  double sigma = 0.8;
  double impact = 0.1;
  std::size_t steps = 252;
  double dt = 1.0 / 252.0;
  double inventory_bound = 5.0;
  double s0 = 1.0;

  void validate() const {
    if (!(kappa > 0.0) || !(sigma > 0.0) || !(dt > 0.0) || !(inventory_bound > 0.0) || !(impact >= 0.0)) {
      throw std::invalid_argument("OU stat-arb parameters must be positive");
    }
    if (steps < 1) throw std::invalid_argument("OU stat-arb needs at least one step");
  }
  double horizon() const { return dt * static_cast<double>(steps); }
};

struct StatArbPath {
  std::vector<double> prices;     ///< S_0..S_N
  std::vector<double> inventory;  ///< q_0..q_N, q_0 = 0
  double wealth = 0.0;            ///< sum_k q_{k+1} (S_{k+1} - S_k)
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

namespace detail {

inline double signed_sqrt(double x) { return x > 0.0 ? std::sqrt(x) : (x < 0.0 ? -std::sqrt(-x) : 0.0); }

}  // namespace detail

inline std::array<double, 3> statarb_features(const OuStatArbSpec& spec, std::size_t k, double price, double q) {
  return {static_cast<double>(k) / static_cast<double>(spec.steps), price, q / spec.inventory_bound};
}

/// Euler path driven by the given standard normal increments (one per step).
inline StatArbPath simulate_statarb_path(const OuStatArbSpec& spec, const Mlp& policy,
                                         std::span<const double> noise) {
  if (noise.size() != spec.steps) throw std::invalid_argument("stat-arb noise must have one draw per step");
  if (policy.input_size() != 3 || policy.output_size() != 1) {
    throw std::invalid_argument("stat-arb policy must map 3 features to 1 inventory");
  }
  StatArbPath path;
  path.prices.resize(spec.steps + 1);
  path.inventory.resize(spec.steps + 1);
  path.prices[0] = spec.s0;
  path.inventory[0] = 0.0;
  const double vol = spec.sigma * std::sqrt(spec.dt);
  Tape tape;
  for (std::size_t k = 0; k < spec.steps; ++k) {
    const double s = path.prices[k];
    const auto f = statarb_features(spec, k, s, path.inventory[k]);
    policy.forward(f, tape);
    const double q_next = tape.output[0];
    if (std::abs(q_next) > spec.inventory_bound) throw SimulationError("inventory bound violated", k);
    const double trade = q_next - path.inventory[k];
    const double s_next =
        s + (spec.kappa * (spec.mean_level - s) + spec.impact * detail::signed_sqrt(trade)) * spec.dt + vol * noise[k];
    if (!std::isfinite(s_next)) throw SimulationError("non-finite price", k + 1);
    path.prices[k + 1] = s_next;
    path.inventory[k + 1] = q_next;
    path.wealth += q_next * (s_next - s);
  }
  return path;
}

inline std::vector<double> statarb_noise(std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> xi(steps);
  for (auto& v : xi) v = z(rng);
  return xi;
}

inline StatArbPath simulate_statarb_path(const OuStatArbSpec& spec, const Mlp& policy, std::uint64_t seed) {
  spec.validate();
  return simulate_statarb_path(spec, policy, statarb_noise(spec.steps, seed));
}

// ---------------------------------------------------------------------------
// Benchmark market: correlated GBM assets and a short rate, traded with
// self-financing proportions pi (fraction of wealth per asset, rest in cash):
//   X_{t+1} = X_t (1 + sum_i pi_i ret_i + (1 - sum_i pi_i) r_t dt).

struct BenchmarkMarketSpec {
  std::size_t assets = 3;
  std::vector<double> s0{1.0, 1.0, 1.0};
  std::vector<double> drift{0.05, 0.07, 0.09};
  std::vector<double> volatility{0.15, 0.20, 0.25};
  std::vector<double> correlation{1.0, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 1.0};  ///< row-major
  /// Short rate: constant when rate_kappa == 0, else Euler-discretised Vasicek.
  double rate0 = 0.02;
  double rate_kappa = 0.5;
  double rate_mean = 0.03;
  double rate_sigma = 0.01;
  std::size_t steps = 60;
  double dt = 1.0 / 12.0;
  std::vector<double> benchmark_weights{0.3, 0.3, 0.4};
  double x0 = 1.0;

  void validate() const {
    const std::size_t d = assets;
    if (d < 1) throw std::invalid_argument("benchmark market needs at least one asset");
    if (s0.size() != d || drift.size() != d || volatility.size() != d || benchmark_weights.size() != d ||
        correlation.size() != d * d) {
      throw std::invalid_argument("benchmark market vectors must match the asset count");
    }
    for (double v : volatility) {
      if (!(v > 0.0)) throw std::invalid_argument("benchmark market volatilities must be positive");
    }
    if (steps < 1 || !(dt > 0.0)) throw std::invalid_argument("benchmark market needs positive steps and dt");
    double wsum = 0.0;
    for (double w : benchmark_weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("benchmark weights must sum to 1");
    Eigen::MatrixXd c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c(i, j) = correlation[i * d + j];
    }
    if (!c.isApprox(c.transpose())) throw std::invalid_argument("correlation matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    if (es.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument("correlation matrix must be positive semidefinite");
    }
  }

  double horizon() const { return dt * static_cast<double>(steps); }
};

/// Simulated market scenarios: per-step simple returns and rates.
struct BenchmarkScenarios {
  std::size_t paths = 0;
  std::size_t steps = 0;
  std::size_t assets = 0;
  std::vector<double> returns;  ///< [path][step][asset]
  std::vector<double> prices;   ///< [path][step 0..steps][asset]
  std::vector<double> rates;    ///< [path][step]

  double ret(std::size_t p, std::size_t t, std::size_t i) const { return returns[(p * steps + t) * assets + i]; }
  double price(std::size_t p, std::size_t t, std::size_t i) const {
    return prices[(p * (steps + 1) + t) * assets + i];
  }
  double rate(std::size_t p, std::size_t t) const { return rates[p * steps + t]; }
};

inline BenchmarkScenarios simulate_benchmark_scenarios(const BenchmarkMarketSpec& spec, std::size_t n,
                                                       std::uint64_t seed) {
  spec.validate();
  const std::size_t d = spec.assets;
  Eigen::MatrixXd c(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) c(i, j) = spec.correlation[i * d + j];
  }
  // Semidefinite matrices (e.g. perfect correlation) need the pivoted LDLT.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  Eigen::MatrixXd chol = ldlt.transpositionsP().transpose() * Eigen::MatrixXd(ldlt.matrixL()) *
                         ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  BenchmarkScenarios sc;
  sc.paths = n;
  sc.steps = spec.steps;
  sc.assets = d;
  sc.returns.resize(n * spec.steps * d);
  sc.prices.resize(n * (spec.steps + 1) * d);
  sc.rates.resize(n * spec.steps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd xi(d);
  const double sdt = std::sqrt(spec.dt);
  for (std::size_t p = 0; p < n; ++p) {
    double r = spec.rate0;
    for (std::size_t i = 0; i < d; ++i) sc.prices[(p * (spec.steps + 1)) * d + i] = spec.s0[i];
    for (std::size_t t = 0; t < spec.steps; ++t) {
      for (std::size_t i = 0; i < d; ++i) xi(i) = z(rng);
      const Eigen::VectorXd corr = chol * xi;
      sc.rates[p * spec.steps + t] = r;
      for (std::size_t i = 0; i < d; ++i) {
        const double sig = spec.volatility[i];
        const double g = std::exp((spec.drift[i] - 0.5 * sig * sig) * spec.dt + sig * sdt * corr(i));
        sc.returns[(p * spec.steps + t) * d + i] = g - 1.0;
        sc.prices[(p * (spec.steps + 1) + t + 1) * d + i] = sc.prices[(p * (spec.steps + 1) + t) * d + i] * g;
      }
      if (spec.rate_kappa > 0.0) {
        r += spec.rate_kappa * (spec.rate_mean - r) * spec.dt + spec.rate_sigma * sdt * z(rng);
      }
    }
  }
  return sc;
}

/// Market state offered to a trading rule at step t of path p.
struct MarketState {
  std::size_t step = 0;
  double time_fraction = 0.0;
  std::span<const double> prices;
  double wealth = 0.0;
};

using TradingRule = std::function<std::vector<double>(const MarketState&)>;

struct BenchmarkPath {
  std::vector<double> wealth;  ///< X_0..X_T
  double terminal = 0.0;
};

/// Self-financing wealth of a trading rule along path p of the scenarios.
inline BenchmarkPath benchmark_wealth_path(const BenchmarkMarketSpec& spec, const BenchmarkScenarios& sc,
                                           std::size_t p, const TradingRule& rule) {
  BenchmarkPath out;
  out.wealth.resize(sc.steps + 1);
  out.wealth[0] = spec.x0;
  for (std::size_t t = 0; t < sc.steps; ++t) {
    const MarketState st{t, static_cast<double>(t) / static_cast<double>(sc.steps),
                         {sc.prices.data() + (p * (sc.steps + 1) + t) * sc.assets, sc.assets}, out.wealth[t]};
    const auto pi = rule(st);
    if (pi.size() != sc.assets) throw std::invalid_argument("trading rule returned the wrong number of weights");
    double growth = 1.0;
    double invested = 0.0;
    for (std::size_t i = 0; i < sc.assets; ++i) {
      growth += pi[i] * sc.ret(p, t, i);
      invested += pi[i];
    }
    growth += (1.0 - invested) * sc.rate(p, t) * spec.dt;
    out.wealth[t + 1] = out.wealth[t] * growth;
    if (!std::isfinite(out.wealth[t + 1])) throw SimulationError("non-finite wealth", t + 1);
  }
  out.terminal = out.wealth.back();
  return out;
}

inline TradingRule constant_proportions(std::vector<double> weights) {
  return [w = std::move(weights)](const MarketState&) { return w; };
}

/// One path of the benchmark market under the given trading rule.
inline BenchmarkPath simulate_benchmark_market(const BenchmarkMarketSpec& spec, const TradingRule& rule,
                                               std::uint64_t seed) {
  const auto sc = simulate_benchmark_scenarios(spec, 1, seed);
  return benchmark_wealth_path(spec, sc, 0, rule);
}

inline BenchmarkPath simulate_benchmark_market(const BenchmarkMarketSpec& spec, std::uint64_t seed) {
  return simulate_benchmark_market(spec, constant_proportions(spec.benchmark_weights), seed);
}

}  // namespace rdro
