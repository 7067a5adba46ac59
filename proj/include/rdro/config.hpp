#pragma once

// Experiment configuration: an INI file with sections [experiment], [risk],
// [wasserstein], [kde], [training] and [market]. Unknown sections and keys
// are rejected. Comma-separated epsilon and p_weight lists define a sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rdro/density.hpp"
#include "rdro/driver.hpp"
#include "rdro/markets.hpp"
#include "rdro/risk.hpp"
#include "rdro/wasserstein.hpp"

namespace rdro {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Portfolio, Benchmark, StatArb, InnerOnly };

inline std::string experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Portfolio: return "portfolio";
    case ExperimentKind::Benchmark: return "benchmark";
    case ExperimentKind::StatArb: return "statarb";
    case ExperimentKind::InnerOnly: return "inner-only";
  }
  return "?";
}

inline ExperimentKind parse_experiment(const std::string& s) {
  if (s == "portfolio") return ExperimentKind::Portfolio;
  if (s == "benchmark") return ExperimentKind::Benchmark;
  if (s == "statarb") return ExperimentKind::StatArb;
  if (s == "inner-only") return ExperimentKind::InnerOnly;
  throw ConfigError("experiment.name: unknown experiment '" + s + "'");
}

struct TrainingConfig {
  std::size_t batch_size = 2048;
  std::size_t evaluation_size = 0;  ///< 0: same as batch_size
  std::uint64_t seed = 1;
  std::vector<std::size_t> adversary_hidden{16, 16};
  std::vector<std::size_t> policy_hidden{16, 16};
  StoppingRule::Kind stopping = StoppingRule::Kind::RelativeChange;
  double inner_learning_rate = 1e-3;
  double outer_learning_rate = 1e-2;
  std::size_t inner_max_iterations = 2000;
  std::size_t inner_min_iterations = 100;
  std::size_t inner_window = 50;
  double inner_tolerance = 0.01;
  std::size_t outer_max_iterations = 200;
  std::size_t outer_min_iterations = 40;
  std::size_t outer_window = 20;
  double outer_tolerance = 0.01;
  LagrangeState lagrange{};
  double feasibility_tol = 0.05;
  double validation_tol = 0.10;
  bool reset_multipliers = false;
  std::size_t max_inner_retries = 2;
  std::size_t trace_every = 50;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Portfolio;
  std::string output = "rdro-out";

  double alpha = 0.1;
  double beta = 0.9;
  std::vector<double> p_weights{0.75};
  Utility utility = Utility::linear();

  double order = 1.0;
  std::vector<double> epsilons{0.01};

  KdeSpec kde{};
  TrainingConfig training{};

  FactorMarketSpec factor{};
  std::vector<double> inner_weights;  ///< inner-only reference portfolio; empty means equal weights
  OuStatArbSpec statarb{};
  double impact_floor = 1e-4;
  BenchmarkMarketSpec benchmark{};

  std::size_t evaluation_size() const {
    return training.evaluation_size ? training.evaluation_size : training.batch_size;
  }

  RiskSpec risk_spec(double p_weight, double epsilon) const {
    RiskSpec s;
    s.distortion = Distortion::alpha_beta(alpha, beta, p_weight);
    s.utility = utility;
    s.wasserstein = WassersteinSpec{order, epsilon};
    s.kde = kde;
    return s;
  }

  /// Re-checks every invariant the modules rely on; throws ConfigError.
  void validate() const {
    auto wrap = [](const std::string& where, auto&& fn) {
      try {
        fn();
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
      }
    };
    if (p_weights.empty()) throw ConfigError("risk.p_weight: empty list");
    for (double p : p_weights) wrap("risk", [&] { (void)Distortion::alpha_beta(alpha, beta, p); });
    if (epsilons.empty()) throw ConfigError("wasserstein.epsilon: empty list");
    for (double e : epsilons) wrap("wasserstein", [&] { WassersteinSpec{order, e}.validate(); });
    if (kde.rule == KdeSpec::Rule::Fixed && !(kde.fixed_bandwidth > 0.0)) {
      throw ConfigError("kde.bandwidth: must be positive");
    }
    const auto& t = training;
    if (t.batch_size < 2) throw ConfigError("training.batch_size: must be at least 2");
    if (t.evaluation_size == 1) throw ConfigError("training.evaluation_size: must be at least 2");
    if (t.inner_window == 0) throw ConfigError("training.inner_window: must be positive");
    if (t.outer_window == 0) throw ConfigError("training.outer_window: must be positive");
    if (t.inner_max_iterations == 0) throw ConfigError("training.inner_max_iterations: must be positive");
    if (t.outer_max_iterations == 0) throw ConfigError("training.outer_max_iterations: must be positive");
    if (!(t.inner_learning_rate > 0.0)) throw ConfigError("training.inner_learning_rate: must be positive");
    if (!(t.outer_learning_rate > 0.0)) throw ConfigError("training.outer_learning_rate: must be positive");
    if (!(t.inner_tolerance > 0.0)) throw ConfigError("training.inner_tolerance: must be positive");
    if (!(t.outer_tolerance > 0.0)) throw ConfigError("training.outer_tolerance: must be positive");
    if (!(t.feasibility_tol >= 0.0)) throw ConfigError("training.feasibility_tol: must be >= 0");
    if (!(t.validation_tol >= 0.0)) throw ConfigError("training.validation_tol: must be >= 0");
    if (t.trace_every == 0) throw ConfigError("training.trace_every: must be positive");
    for (auto h : t.adversary_hidden) {
      if (h == 0) throw ConfigError("training.adversary_hidden: layer widths must be positive");
    }
    for (auto h : t.policy_hidden) {
      if (h == 0) throw ConfigError("training.policy_hidden: layer widths must be positive");
    }
    wrap("training", [&] { t.lagrange.validate(); });
    switch (experiment) {
      case ExperimentKind::Portfolio:
        wrap("market", [&] { factor.validate(); });
        break;
      case ExperimentKind::InnerOnly:
        wrap("market", [&] { factor.validate(); });
        if (!inner_weights.empty()) {
          if (inner_weights.size() != factor.assets) throw ConfigError("market.weights: expected one weight per asset");
          double s = 0.0;
          for (double w : inner_weights) {
            if (!(w > 0.0)) throw ConfigError("market.weights: weights must be positive");
            s += w;
          }
          if (std::abs(s - 1.0) > 1e-9) throw ConfigError("market.weights: weights must sum to 1");
        }
        break;
      case ExperimentKind::StatArb:
        wrap("market", [&] { statarb.validate(); });
        if (!(impact_floor > 0.0)) throw ConfigError("market.impact_floor: must be positive");
        break;
      case ExperimentKind::Benchmark:
        wrap("market", [&] { benchmark.validate(); });
        break;
    }
  }

  /// Full-size settings: large networks, long iteration caps and daily horizons.
  void apply_paper_scale() {
    training.adversary_hidden = {50, 50, 50};
    training.policy_hidden = {50, 50, 50};
    training.inner_max_iterations = 5000;
    training.outer_max_iterations = 500;
    training.inner_window = 100;
    training.outer_window = 100;
    statarb.steps = 252;
    statarb.dt = 1.0 / 252.0;
    benchmark.steps = 5 * 252;
    benchmark.dt = 1.0 / 252.0;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_real(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    if (std::isnan(v)) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a real number, got '" + t + "'");
  }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + t + "'");
  }
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + t + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + t + "'");
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_real(key, item));
  return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split_list(s)) out.push_back(static_cast<std::size_t>(parse_count(key, item)));
  return out;
}

}  // namespace detail

/// Parses an INI stream into a validated configuration. A forced experiment
/// replaces experiment.name and selects which market keys are accepted.
inline ExperimentConfig parse_config(std::istream& is, std::optional<ExperimentKind> force = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  ExperimentConfig cfg;
  // Market keys depend on the experiment, so resolve it first.
  if (auto name = tree.get_optional<std::string>("experiment.name")) cfg.experiment = parse_experiment(detail::trim(*name));
  if (force) cfg.experiment = *force;

  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  std::map<std::string, std::map<std::string, Setter>> schema;
  auto& t = cfg.training;
  using namespace detail;

  schema["experiment"] = {
      {"name", [&](auto&, auto&) {}},
      {"output", [&](auto&, auto& v) { cfg.output = trim(v); }},
  };
  schema["risk"] = {
      {"alpha", [&](auto& k, auto& v) { cfg.alpha = parse_real(k, v); }},
      {"beta", [&](auto& k, auto& v) { cfg.beta = parse_real(k, v); }},
      {"p_weight", [&](auto& k, auto& v) { cfg.p_weights = parse_reals(k, v); }},
      {"utility",
       [&](auto& k, auto& v) {
         const auto u = trim(v);
         if (u == "linear") {
           cfg.utility = Utility::linear();
         } else if (u.rfind("exponential", 0) == 0 || u.rfind("power", 0) == 0) {
           // "exponential:<a>" or "power:<e>"
           const auto colon = u.find(':');
           if (colon == std::string::npos) throw ConfigError(k + ": '" + u + "' needs a parameter, e.g. exponential:1");
           const double arg = parse_real(k, u.substr(colon + 1));
           try {
             cfg.utility = u[0] == 'e' ? Utility::exponential(arg) : Utility::power(arg);
           } catch (const std::exception& e) {
             throw ConfigError(k + ": " + e.what());
           }
         } else {
           throw ConfigError(k + ": unknown utility '" + u + "'");
         }
       }},
  };
  schema["wasserstein"] = {
      {"order", [&](auto& k, auto& v) { cfg.order = parse_real(k, v); }},
      {"epsilon", [&](auto& k, auto& v) { cfg.epsilons = parse_reals(k, v); }},
  };
  schema["kde"] = {
      {"kernel",
       [&](auto& k, auto& v) {
         const auto s = trim(v);
         if (s == "gaussian") {
           cfg.kde.kernel = Kernel{KernelKind::Gaussian};
         } else if (s == "epanechnikov") {
           cfg.kde.kernel = Kernel{KernelKind::Epanechnikov};
         } else {
           throw ConfigError(k + ": unknown kernel '" + s + "'");
         }
       }},
      {"bandwidth",
       [&](auto& k, auto& v) {
         const auto s = trim(v);
         if (s == "silverman") {
           cfg.kde.rule = KdeSpec::Rule::Silverman;
         } else {
           cfg.kde.rule = KdeSpec::Rule::Fixed;
           cfg.kde.fixed_bandwidth = parse_real(k, s);
         }
       }},
  };
  schema["training"] = {
      {"batch_size", [&](auto& k, auto& v) { t.batch_size = parse_count(k, v); }},
      {"evaluation_size", [&](auto& k, auto& v) { t.evaluation_size = parse_count(k, v); }},
      {"seed", [&](auto& k, auto& v) { t.seed = parse_count(k, v); }},
      {"adversary_hidden", [&](auto& k, auto& v) { t.adversary_hidden = parse_counts(k, v); }},
      {"policy_hidden", [&](auto& k, auto& v) { t.policy_hidden = parse_counts(k, v); }},
      {"stopping",
       [&](auto& k, auto& v) {
         const auto s = trim(v);
         if (s == "relative-change") {
           t.stopping = StoppingRule::Kind::RelativeChange;
         } else if (s == "no-improvement") {
           t.stopping = StoppingRule::Kind::NoImprovement;
         } else {
           throw ConfigError(k + ": expected relative-change or no-improvement, got '" + s + "'");
         }
       }},
      {"inner_learning_rate", [&](auto& k, auto& v) { t.inner_learning_rate = parse_real(k, v); }},
      {"outer_learning_rate", [&](auto& k, auto& v) { t.outer_learning_rate = parse_real(k, v); }},
      {"inner_max_iterations", [&](auto& k, auto& v) { t.inner_max_iterations = parse_count(k, v); }},
      {"inner_min_iterations", [&](auto& k, auto& v) { t.inner_min_iterations = parse_count(k, v); }},
      {"inner_window", [&](auto& k, auto& v) { t.inner_window = parse_count(k, v); }},
      {"inner_tolerance", [&](auto& k, auto& v) { t.inner_tolerance = parse_real(k, v); }},
      {"outer_max_iterations", [&](auto& k, auto& v) { t.outer_max_iterations = parse_count(k, v); }},
      {"outer_min_iterations", [&](auto& k, auto& v) { t.outer_min_iterations = parse_count(k, v); }},
      {"outer_window", [&](auto& k, auto& v) { t.outer_window = parse_count(k, v); }},
      {"outer_tolerance", [&](auto& k, auto& v) { t.outer_tolerance = parse_real(k, v); }},
      {"lagrange_period", [&](auto& k, auto& v) { t.lagrange.update_period = parse_count(k, v); }},
      {"lagrange_growth", [&](auto& k, auto& v) { t.lagrange.growth = parse_real(k, v); }},
      {"lambda0", [&](auto& k, auto& v) { t.lagrange.lambda = parse_real(k, v); }},
      {"mu0", [&](auto& k, auto& v) { t.lagrange.mu = parse_real(k, v); }},
      {"mu_max", [&](auto& k, auto& v) { t.lagrange.mu_max = parse_real(k, v); }},
      {"feasibility_tol", [&](auto& k, auto& v) { t.feasibility_tol = parse_real(k, v); }},
      {"validation_tol", [&](auto& k, auto& v) { t.validation_tol = parse_real(k, v); }},
      {"reset_multipliers", [&](auto& k, auto& v) { t.reset_multipliers = parse_bool(k, v); }},
      {"max_inner_retries", [&](auto& k, auto& v) { t.max_inner_retries = parse_count(k, v); }},
      {"trace_every", [&](auto& k, auto& v) { t.trace_every = parse_count(k, v); }},
  };

  auto& m = schema["market"];
  switch (cfg.experiment) {
    case ExperimentKind::InnerOnly:
      m["weights"] = [&](auto& k, auto& v) { cfg.inner_weights = parse_reals(k, v); };
      [[fallthrough]];
    case ExperimentKind::Portfolio:
      m["assets"] = [&](auto& k, auto& v) { cfg.factor.assets = parse_count(k, v); };
      m["systematic_sd"] = [&](auto& k, auto& v) { cfg.factor.systematic_sd = parse_real(k, v); };
      m["drift_step"] = [&](auto& k, auto& v) { cfg.factor.drift_step = parse_real(k, v); };
      m["idiosyncratic_sd_step"] = [&](auto& k, auto& v) { cfg.factor.idiosyncratic_sd_step = parse_real(k, v); };
      break;
    case ExperimentKind::StatArb: {
      auto& s = cfg.statarb;
      m["kappa"] = [&](auto& k, auto& v) { s.kappa = parse_real(k, v); };
      m["mean_level"] = [&](auto& k, auto& v) { s.mean_level = parse_real(k, v); };
      m["sigma"] = [&](auto& k, auto& v) { s.sigma = parse_real(k, v); };
      m["impact"] = [&](auto& k, auto& v) { s.impact = parse_real(k, v); };
      m["steps"] = [&](auto& k, auto& v) { s.steps = parse_count(k, v); };
      m["dt"] = [&](auto& k, auto& v) { s.dt = parse_real(k, v); };
      m["inventory_bound"] = [&](auto& k, auto& v) { s.inventory_bound = parse_real(k, v); };
      m["s0"] = [&](auto& k, auto& v) { s.s0 = parse_real(k, v); };
      m["impact_floor"] = [&](auto& k, auto& v) { cfg.impact_floor = parse_real(k, v); };
      break;
    }
    case ExperimentKind::Benchmark: {
      auto& b = cfg.benchmark;
      m["assets"] = [&](auto& k, auto& v) { b.assets = parse_count(k, v); };
      m["s0"] = [&](auto& k, auto& v) { b.s0 = parse_reals(k, v); };
      m["drift"] = [&](auto& k, auto& v) { b.drift = parse_reals(k, v); };
      m["volatility"] = [&](auto& k, auto& v) { b.volatility = parse_reals(k, v); };
      m["correlation"] = [&](auto& k, auto& v) { b.correlation = parse_reals(k, v); };
      m["rate0"] = [&](auto& k, auto& v) { b.rate0 = parse_real(k, v); };
      m["rate_kappa"] = [&](auto& k, auto& v) { b.rate_kappa = parse_real(k, v); };
      m["rate_mean"] = [&](auto& k, auto& v) { b.rate_mean = parse_real(k, v); };
      m["rate_sigma"] = [&](auto& k, auto& v) { b.rate_sigma = parse_real(k, v); };
      m["steps"] = [&](auto& k, auto& v) { b.steps = parse_count(k, v); };
      m["dt"] = [&](auto& k, auto& v) { b.dt = parse_real(k, v); };
      m["weights"] = [&](auto& k, auto& v) { b.benchmark_weights = parse_reals(k, v); };
      m["x0"] = [&](auto& k, auto& v) { b.x0 = parse_real(k, v); };
      break;
    }
  }

  for (const auto& [section, keys] : tree) {
    const auto sec = schema.find(section);
    if (sec == schema.end()) throw ConfigError(section + ": unknown section");
    if (!keys.data().empty()) throw ConfigError(section + ": keys must live inside a section");
    for (const auto& [key, value] : keys) {
      const auto path = section + "." + key;
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) {
        throw ConfigError(path + ": unknown key for experiment '" + experiment_name(cfg.experiment) + "'");
      }
      setter->second(path, value.data());
    }
  }

  // A single equicorrelation value expands to the full matrix.
  auto& b = cfg.benchmark;
  if (b.correlation.size() == 1 && b.assets > 1) {
    const double rho = b.correlation[0];
    b.correlation.assign(b.assets * b.assets, rho);
    for (std::size_t i = 0; i < b.assets; ++i) b.correlation[i * b.assets + i] = 1.0;
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> force = std::nullopt) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open config file");
  return parse_config(is, force);
}

}  // namespace rdro
