#pragma once

// Experiment runners behind the rdro CLI. Each (epsilon, p_weight) pair of a
// config's sweep is one run point written to its own directory:
//
//   <out>/summary.csv            one row per point (trained distribution)
//   <out>/summary_companion.csv  the other distribution of each pair
//   <out>/metadata.txt           timestamp and effective settings
//   <out>/<point>/trace.csv      training trace
//   <out>/<point>/wealth.csv     evaluation samples of X^phi and X^theta
//   <out>/<point>/weights.csv    portfolio only
//   <out>/<point>/heatmap.csv    statarb only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rdro/config.hpp"
#include "rdro/driver.hpp"
#include "rdro/markets.hpp"
#include "rdro/models.hpp"
#include "rdro/risk.hpp"
#include "rdro/wasserstein.hpp"

namespace rdro {

/// Shortest round-trip representation, independent of locale.
inline std::string fmt_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct HeatCell {
  double inventory = 0.0;
  double price = 0.0;
  double target = 0.0;  ///< policy output q_{t+1}
  double trade = 0.0;   ///< target - inventory
};

struct PointResult {
  double epsilon = 0.0;
  double p_weight = 0.0;
  std::string directory;
  RdeuSummary primary;    ///< trained distribution
  RdeuSummary companion;  ///< reference (benchmark, inner-only) or worst case (portfolio, statarb)
  double distance = 0.0;  ///< d_p between X^theta and X^phi on the evaluation batch
  double theta_rdeu = 0.0;  ///< R[X^theta] under the point's distortion and utility
  double phi_rdeu = 0.0;    ///< R[X^phi]
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t skipped_steps = 0;
  std::vector<double> x_phi;    ///< evaluation batch
  std::vector<double> x_theta;
  std::vector<double> weights;  ///< portfolio weights
  std::vector<HeatCell> heatmap;
  std::vector<TraceRow> trace;
  std::vector<double> window_means;  ///< inner-only and benchmark: training RDEU per stopping window
};

struct RunResult {
  std::vector<PointResult> points;
  bool all_converged() const {
    return std::all_of(points.begin(), points.end(), [](const PointResult& p) { return p.converged; });
  }
};

namespace detail {

inline InnerOptions inner_options(const ExperimentConfig& cfg, Direction dir) {
  const auto& t = cfg.training;
  InnerOptions o;
  o.direction = dir;
  o.stopping = {t.stopping, t.inner_tolerance, t.inner_window, t.inner_max_iterations, t.inner_min_iterations};
  o.adam.learning_rate = t.inner_learning_rate;
  o.feasibility_tol = t.feasibility_tol;
  o.validation_tol = t.validation_tol;
  o.trace_every = t.trace_every;
  return o;
}

inline OuterOptions outer_options(const ExperimentConfig& cfg) {
  const auto& t = cfg.training;
  OuterOptions o;
  o.stopping = {t.stopping, t.outer_tolerance, t.outer_window, t.outer_max_iterations, t.outer_min_iterations};
  o.adam.learning_rate = t.outer_learning_rate;
  o.batch_size = t.batch_size;
  o.seed = t.seed;
  o.reset_multipliers = t.reset_multipliers;
  o.max_inner_retries = t.max_inner_retries;
  return o;
}

inline std::string point_name(std::size_t index, double eps, double p) {
  std::ostringstream os;
  os << "point" << index << "_eps" << fmt_real(eps) << "_p" << fmt_real(p);
  return os.str();
}

inline void finish_point(PointResult& r, const ExperimentConfig& cfg, const RiskSpec& spec, bool theta_primary) {
  const auto phi_stats = rdeu_summary(r.x_phi, cfg.alpha, cfg.beta);
  const auto theta_stats = rdeu_summary(r.x_theta, cfg.alpha, cfg.beta);
  r.primary = theta_primary ? theta_stats : phi_stats;
  r.companion = theta_primary ? phi_stats : theta_stats;
  r.distance = distance(r.x_theta, r.x_phi, spec.wasserstein);
  r.theta_rdeu = rdeu(r.x_theta, spec.distortion, spec.utility);
  r.phi_rdeu = rdeu(r.x_phi, spec.distortion, spec.utility);
}

/// Policy action over an (inventory, price) grid at t = 0.75 T.
inline std::vector<HeatCell> statarb_heatmap(const OuStatArbSpec& spec, const Mlp& policy, std::size_t n_q = 21,
                                             std::size_t n_s = 21) {
  const std::size_t k = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(spec.steps)));
  const double half_width = 3.0 * spec.sigma / std::sqrt(2.0 * spec.kappa);
  std::vector<HeatCell> out;
  out.reserve(n_q * n_s);
  for (std::size_t a = 0; a < n_q; ++a) {
    const double q = -spec.inventory_bound + 2.0 * spec.inventory_bound * static_cast<double>(a) /
                                                 static_cast<double>(n_q - 1);
    for (std::size_t b = 0; b < n_s; ++b) {
      const double s = spec.mean_level - half_width + 2.0 * half_width * static_cast<double>(b) /
                                                          static_cast<double>(n_s - 1);
      const double target = policy.forward(statarb_features(spec, k, s, q))[0];
      out.push_back({q, s, target, target - q});
    }
  }
  return out;
}

}  // namespace detail

/// Trains one sweep point and evaluates it on a fresh batch.
inline PointResult run_point(const ExperimentConfig& cfg, double epsilon, double p_weight) {
  const auto& t = cfg.training;
  const RiskSpec spec = cfg.risk_spec(p_weight, epsilon);
  const std::uint64_t seed = t.seed;
  const std::size_t n_eval = cfg.evaluation_size();

  PointResult r;
  r.epsilon = epsilon;
  r.p_weight = p_weight;

  switch (cfg.experiment) {
    case ExperimentKind::Portfolio:
    case ExperimentKind::StatArb: {
      std::unique_ptr<ReferenceModel> ref;
      StatArbReference* statarb = nullptr;
      PortfolioReference* portfolio = nullptr;
      if (cfg.experiment == ExperimentKind::Portfolio) {
        auto p = std::make_unique<PortfolioReference>(cfg.factor);
        portfolio = p.get();
        ref = std::move(p);
      } else {
        auto p = std::make_unique<StatArbReference>(cfg.statarb, t.policy_hidden, derive_seed(seed, 10),
                                                    cfg.impact_floor);
        statarb = p.get();
        ref = std::move(p);
      }
      PushForwardAdversary adv(t.adversary_hidden, derive_seed(seed, 11));
      InnerSolver inner(adv, spec, t.lagrange, detail::inner_options(cfg, Direction::Maximize));
      const auto res = solve_outer(*ref, inner, detail::outer_options(cfg), &r.trace);
      r.iterations = res.iterations;
      r.converged = res.converged;
      r.skipped_steps = res.skipped_steps;
      r.x_phi = ref->sample(n_eval, derive_seed(seed, 3));
      r.x_theta = adv.push(r.x_phi);
      if (portfolio) r.weights = portfolio->weights();
      if (statarb) r.heatmap = detail::statarb_heatmap(cfg.statarb, statarb->policy());
      detail::finish_point(r, cfg, spec, false);
      break;
    }
    case ExperimentKind::InnerOnly: {
      PortfolioReference ref(cfg.factor);
      if (!cfg.inner_weights.empty()) ref.set_weights(cfg.inner_weights);
      PushForwardAdversary adv(t.adversary_hidden, derive_seed(seed, 11));
      InnerSolver inner(adv, spec, t.lagrange, detail::inner_options(cfg, Direction::Maximize));
      const auto x_phi = ref.sample(t.batch_size, derive_seed(seed, 1));
      const auto res = inner.solve(x_phi, ref, derive_seed(seed, 3), &r.trace);
      r.iterations = res.iterations;
      r.converged = res.converged;
      r.x_phi = res.x_phi;
      r.x_theta = res.x_theta;
      r.weights = ref.weights();
      r.window_means = res.window_means;
      detail::finish_point(r, cfg, spec, true);
      break;
    }
    case ExperimentKind::Benchmark: {
      BenchmarkReference ref(cfg.benchmark);
      BenchmarkStrategyAdversary adv(ref, t.adversary_hidden, derive_seed(seed, 11));
      InnerSolver inner(adv, spec, t.lagrange, detail::inner_options(cfg, Direction::Minimize));
      const auto x_phi = ref.sample(t.batch_size, derive_seed(seed, 1));
      const auto res = inner.solve(x_phi, ref, derive_seed(seed, 3), &r.trace);
      r.iterations = res.iterations;
      r.converged = res.converged;
      r.x_phi = res.x_phi;
      r.x_theta = res.x_theta;
      r.window_means = res.window_means;
      detail::finish_point(r, cfg, spec, true);
      break;
    }
  }
  return r;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error(p.string() + ": cannot write");
  return os;
}

inline void write_summary_header(std::ostream& os) {
  os << "experiment,epsilon,p_weight,cvar_alpha,ute_beta,mean,wasserstein_p,iterations,converged\n";
}

inline void write_summary_row(std::ostream& os, const ExperimentConfig& cfg, const PointResult& r,
                              const RdeuSummary& s) {
  os << experiment_name(cfg.experiment) << ',' << fmt_real(r.epsilon) << ',' << fmt_real(r.p_weight) << ','
     << fmt_real(s.cvar_alpha) << ',' << fmt_real(s.ute_beta) << ',' << fmt_real(s.mean) << ','
     << fmt_real(r.distance) << ',' << r.iterations << ',' << (r.converged ? "true" : "false") << '\n';
}

}  // namespace detail

/// Writes the artifacts of one point into dir.
inline void write_point(const std::filesystem::path& dir, const PointResult& r) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "trace.csv");
    os << "phase,outer,inner,rdeu,reference_rdeu,distance,lambda,mu,constraint_error\n";
    for (const auto& t : r.trace) {
      os << t.phase << ',' << t.outer << ',' << t.inner << ',' << fmt_real(t.rdeu) << ','
         << fmt_real(t.reference_rdeu) << ',' << fmt_real(t.distance) << ',' << fmt_real(t.lambda) << ','
         << fmt_real(t.mu) << ',' << fmt_real(t.constraint_error) << '\n';
    }
  }
  {
    auto os = detail::open_out(dir / "wealth.csv");
    os << "index,x_phi,x_theta\n";
    for (std::size_t i = 0; i < r.x_phi.size(); ++i) {
      os << i << ',' << fmt_real(r.x_phi[i]) << ',' << fmt_real(r.x_theta[i]) << '\n';
    }
  }
  if (!r.weights.empty()) {
    auto os = detail::open_out(dir / "weights.csv");
    os << "asset,weight\n";
    for (std::size_t i = 0; i < r.weights.size(); ++i) os << i + 1 << ',' << fmt_real(r.weights[i]) << '\n';
  }
  if (!r.heatmap.empty()) {
    auto os = detail::open_out(dir / "heatmap.csv");
    os << "inventory,price,target_inventory,trade\n";
    for (const auto& c : r.heatmap) {
      os << fmt_real(c.inventory) << ',' << fmt_real(c.price) << ',' << fmt_real(c.target) << ','
         << fmt_real(c.trade) << '\n';
    }
  }
}

/// Runs every sweep point of cfg and writes all artifacts under cfg.output.
inline RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const std::filesystem::path out(cfg.output);
  std::filesystem::create_directories(out);
  {
    auto os = detail::open_out(out / "metadata.txt");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    os << "started " << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << '\n'
       << "experiment " << experiment_name(cfg.experiment) << '\n'
       << "seed " << cfg.training.seed << '\n'
       << "batch_size " << cfg.training.batch_size << '\n';
  }

  RunResult run;
  std::size_t index = 0;
  for (double p : cfg.p_weights) {
    for (double eps : cfg.epsilons) {
      if (log) *log << "[" << experiment_name(cfg.experiment) << "] epsilon=" << fmt_real(eps) << " p_weight=" << fmt_real(p) << std::endl;
      auto r = run_point(cfg, eps, p);
      r.directory = detail::point_name(index++, eps, p);
      write_point(out / r.directory, r);
      if (log) {
        *log << "  iterations=" << r.iterations << " converged=" << (r.converged ? "yes" : "no")
             << " cvar=" << fmt_real(r.primary.cvar_alpha) << " ute=" << fmt_real(r.primary.ute_beta)
             << " mean=" << fmt_real(r.primary.mean) << std::endl;
      }
      run.points.push_back(std::move(r));
    }
  }

  auto summary = detail::open_out(out / "summary.csv");
  auto companion = detail::open_out(out / "summary_companion.csv");
  detail::write_summary_header(summary);
  detail::write_summary_header(companion);
  for (const auto& r : run.points) {
    detail::write_summary_row(summary, cfg, r, r.primary);
    detail::write_summary_row(companion, cfg, r, r.companion);
  }
  return run;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error(p.string() + ": cannot read");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

/// Prints the summary table of a run directory and writes histogram.csv
/// (bin edges and counts of x_phi and x_theta) next to every wealth.csv.
inline void report(const std::filesystem::path& run_dir, std::ostream& os, std::size_t bins = 50) {
  const auto summary = detail::read_csv(run_dir / "summary.csv");
  if (summary.empty()) throw std::runtime_error("empty summary.csv");
  os << std::left;
  for (const auto& row : summary) {
    for (const auto& cell : row) os << std::setw(14) << cell.substr(0, 13);
    os << '\n';
  }

  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "wealth.csv")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    const auto rows = detail::read_csv(d / "wealth.csv");
    std::vector<double> a;
    std::vector<double> b;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 3) throw std::runtime_error((d / "wealth.csv").string() + ": malformed row");
      a.push_back(std::stod(rows[i][1]));
      b.push_back(std::stod(rows[i][2]));
    }
    if (a.empty()) continue;
    double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
    double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    if (!(hi > lo)) hi = lo + 1.0;
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> ca(bins, 0);
    std::vector<std::size_t> cb(bins, 0);
    auto bin = [&](double v) {
      return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, (v - lo) / width)));
    };
    for (double v : a) ++ca[bin(v)];
    for (double v : b) ++cb[bin(v)];
    auto hs = detail::open_out(d / "histogram.csv");
    hs << "bin_low,bin_high,x_phi_count,x_theta_count\n";
    for (std::size_t k = 0; k < bins; ++k) {
      hs << fmt_real(lo + width * static_cast<double>(k)) << ',' << fmt_real(lo + width * static_cast<double>(k + 1))
         << ',' << ca[k] << ',' << cb[k] << '\n';
    }
    os << (d / "histogram.csv").string() << '\n';
  }
}

}  // namespace rdro
