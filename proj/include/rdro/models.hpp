#pragma once

// Reference models (policies generating X^phi) and adversaries (generating
// X^theta) for the three case studies, with their reverse-mode pullbacks.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rdro/driver.hpp"
#include "rdro/markets.hpp"
#include "rdro/nn.hpp"

namespace rdro {

/// X^theta = x + s * net((x - m) / s): a residual push-forward whose output
/// layer starts at zero, so the adversary starts at the identity map. The
/// standardisation (m, s) is frozen from the first batch it sees.
class PushForwardAdversary final : public Adversary {
 public:
  PushForwardAdversary(const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    std::vector<std::size_t> sizes{1};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    net_ = Mlp::he_uniform(sizes, OutputActivation::identity(), seed);
    net_.zero_output_layer();
  }

  void calibrate(double shift, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("push-forward scale must be positive");
    shift_ = shift;
    scale_ = scale;
    calibrated_ = true;
  }
  bool calibrated() const { return calibrated_; }
  double shift() const { return shift_; }
  double scale() const { return scale_; }
  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }

  double apply(double x) const {
    const double in = (x - shift_) / scale_;
    return x + scale_ * net_.forward(std::span<const double>(&in, 1))[0];
  }

  std::span<double> parameters() override { return net_.parameters(); }

  std::vector<double> push(std::span<const double> x_phi) override {
    if (!calibrated_) {
      const double m = std::accumulate(x_phi.begin(), x_phi.end(), 0.0) / static_cast<double>(x_phi.size());
      double ss = 0.0;
      for (double v : x_phi) ss += (v - m) * (v - m);
      const double sd = std::sqrt(ss / static_cast<double>(x_phi.size()));
      calibrate(m, sd > 0.0 ? sd : 1.0);
    }
    tapes_.resize(x_phi.size());
    std::vector<double> out(x_phi.size());
    for (std::size_t j = 0; j < x_phi.size(); ++j) {
      const double in = (x_phi[j] - shift_) / scale_;
      net_.forward(std::span<const double>(&in, 1), tapes_[j]);
      out[j] = x_phi[j] + scale_ * tapes_[j].output[0];
    }
    return out;
  }

  std::vector<double> pullback_parameters(std::span<const double> cot) override {
    check(cot);
    std::vector<double> g(net_.param_count(), 0.0);
    for (std::size_t j = 0; j < cot.size(); ++j) {
      if (cot[j] == 0.0) continue;
      const double c = scale_ * cot[j];
      net_.backward(tapes_[j], std::span<const double>(&c, 1), g);
    }
    return g;
  }

  std::vector<double> pullback_input(std::span<const double> cot) override {
    check(cot);
    std::vector<double> out(cot.size());
    std::vector<double> scratch(net_.param_count());
    for (std::size_t j = 0; j < cot.size(); ++j) {
      if (cot[j] == 0.0) {
        out[j] = 0.0;
        continue;
      }
      double din = 0.0;
      const double one = 1.0;
      net_.backward(tapes_[j], std::span<const double>(&one, 1), scratch, std::span<double>(&din, 1));
      out[j] = cot[j] * (1.0 + din);
    }
    return out;
  }

 private:
  void check(std::span<const double> cot) const {
    if (cot.size() != tapes_.size()) throw std::invalid_argument("cotangent does not match the last push");
  }

  Mlp net_;
  double shift_ = 0.0;
  double scale_ = 1.0;
  bool calibrated_ = false;
  std::vector<Tape> tapes_;
};

/// Static portfolio X^phi = w(phi)^T R with w = softmax(phi): a bias-only
/// layer on a zero input, so phi is a free vector of logits.
class PortfolioReference final : public ReferenceModel {
 public:
  explicit PortfolioReference(FactorMarketSpec spec)
      : spec_(spec), net_({1, spec.assets}, OutputActivation::softmax()) {
    spec_.validate();
  }

  std::vector<double> weights() const {
    const double zero = 0.0;
    return net_.forward(std::span<const double>(&zero, 1));
  }
  /// Sets the logits so that weights() returns w.
  void set_weights(std::span<const double> w) {
    if (w.size() != spec_.assets) throw std::invalid_argument("expected one weight per asset");
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!(w[i] > 0.0)) throw std::invalid_argument("weights must be positive");
      net_.weight(0, i, 0) = 0.0;
      net_.bias(0, i) = std::log(w[i]);
    }
  }
  const Mlp& network() const { return net_; }
  const SampleMatrix& returns() const { return returns_; }

  std::span<double> parameters() override { return net_.parameters(); }

  std::vector<double> sample(std::size_t n, std::uint64_t seed) override {
    returns_ = simulate_factor_returns(spec_, n, seed);
    const double zero = 0.0;
    net_.forward(std::span<const double>(&zero, 1), tape_);
    std::vector<double> x(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = returns_.row(r);
      for (std::size_t i = 0; i < spec_.assets; ++i) x[r] += tape_.output[i] * row[i];
    }
    return x;
  }

  std::vector<double> pullback(std::span<const double> cot) override {
    if (cot.size() != returns_.rows) throw std::invalid_argument("cotangent does not match the last batch");
    std::vector<double> gw(spec_.assets, 0.0);
    for (std::size_t r = 0; r < returns_.rows; ++r) {
      const auto row = returns_.row(r);
      for (std::size_t i = 0; i < spec_.assets; ++i) gw[i] += cot[r] * row[i];
    }
    return net_.gradient(tape_, gw);
  }

 private:
  FactorMarketSpec spec_;
  Mlp net_;
  SampleMatrix returns_;
  Tape tape_;
};

/// Dynamic stat-arb strategy: terminal wealth of the policy network on OU
/// paths, differentiated by backpropagation through time. The derivative of
/// the square-root impact is evaluated with |trade| floored at
/// impact_floor, since it is unbounded at a zero trade.
class StatArbReference final : public ReferenceModel {
 public:
  StatArbReference(OuStatArbSpec spec, const std::vector<std::size_t>& hidden, std::uint64_t seed,
                   double impact_floor = 1e-4)
      : spec_(spec), impact_floor_(impact_floor) {
    spec_.validate();
    std::vector<std::size_t> sizes{3};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    policy_ = Mlp::he_uniform(sizes, OutputActivation::scaled_tanh(spec_.inventory_bound), seed);
  }

  const OuStatArbSpec& spec() const { return spec_; }
  const Mlp& policy() const { return policy_; }
  Mlp& policy() { return policy_; }

  std::span<double> parameters() override { return policy_.parameters(); }

  std::vector<double> sample(std::size_t n, std::uint64_t seed) override {
    noise_.assign(n, {});
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) {
      noise_[j] = statarb_noise(spec_.steps, derive_seed(seed, 7, j));
      x[j] = simulate_statarb_path(spec_, policy_, noise_[j]).wealth;
    }
    return x;
  }

  /// Paths of the last batch (re-simulated).
  StatArbPath path(std::size_t j) const { return simulate_statarb_path(spec_, policy_, noise_.at(j)); }

  std::vector<double> pullback(std::span<const double> cot) override {
    if (cot.size() != noise_.size()) throw std::invalid_argument("cotangent does not match the last batch");
    std::vector<double> g(policy_.param_count(), 0.0);
    std::vector<Tape> tapes(spec_.steps);
    std::vector<double> s(spec_.steps + 1);
    std::vector<double> q(spec_.steps + 1);
    const double vol = spec_.sigma * std::sqrt(spec_.dt);
    const double decay = 1.0 - spec_.kappa * spec_.dt;
    for (std::size_t j = 0; j < cot.size(); ++j) {
      const double a = cot[j];
      if (a == 0.0) continue;
      s[0] = spec_.s0;
      q[0] = 0.0;
      for (std::size_t k = 0; k < spec_.steps; ++k) {
        policy_.forward(statarb_features(spec_, k, s[k], q[k]), tapes[k]);
        q[k + 1] = tapes[k].output[0];
        const double trade = q[k + 1] - q[k];
        s[k + 1] = s[k] +
                   (spec_.kappa * (spec_.mean_level - s[k]) + spec_.impact * detail::signed_sqrt(trade)) * spec_.dt +
                   vol * noise_[j][k];
      }
      double s_bar_next = 0.0;
      double q_bar_next = 0.0;
      for (std::size_t k = spec_.steps; k-- > 0;) {
        const double s1_bar = s_bar_next + a * q[k + 1];
        double q1_bar = q_bar_next + a * (s[k + 1] - s[k]);
        double s_bar = -a * q[k + 1] + s1_bar * decay;
        const double trade = q[k + 1] - q[k];
        const double trade_bar =
            s1_bar * spec_.impact * spec_.dt * 0.5 / std::sqrt(std::max(std::abs(trade), impact_floor_));
        q1_bar += trade_bar;
        double q_bar = -trade_bar;
        std::array<double, 3> in_bar{};
        policy_.backward(tapes[k], std::span<const double>(&q1_bar, 1), g, in_bar);
        s_bar += in_bar[1];
        q_bar += in_bar[2] / spec_.inventory_bound;
        s_bar_next = s_bar;
        q_bar_next = q_bar;
      }
    }
    return g;
  }

 private:
  OuStatArbSpec spec_;
  double impact_floor_;
  Mlp policy_;
  std::vector<std::vector<double>> noise_;
};

/// Constant-proportion benchmark in the GBM market; phi is fixed.
class BenchmarkReference final : public ReferenceModel {
 public:
  explicit BenchmarkReference(BenchmarkMarketSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const BenchmarkMarketSpec& spec() const { return spec_; }
  const BenchmarkScenarios& scenarios() const { return sc_; }
  /// Benchmark wealth X^phi_t along path p.
  double wealth(std::size_t p, std::size_t t) const { return wealth_[p * (spec_.steps + 1) + t]; }

  std::span<double> parameters() override { return {}; }

  std::vector<double> sample(std::size_t n, std::uint64_t seed) override {
    sc_ = simulate_benchmark_scenarios(spec_, n, seed);
    wealth_.resize(n * (spec_.steps + 1));
    const auto rule = constant_proportions(spec_.benchmark_weights);
    std::vector<double> x(n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto path = benchmark_wealth_path(spec_, sc_, p, rule);
      std::copy(path.wealth.begin(), path.wealth.end(),
                wealth_.begin() + static_cast<std::ptrdiff_t>(p * (spec_.steps + 1)));
      x[p] = path.terminal;
    }
    return x;
  }

  std::vector<double> pullback(std::span<const double>) override { return {}; }

 private:
  BenchmarkMarketSpec spec_;
  BenchmarkScenarios sc_;
  std::vector<double> wealth_;
};

/// Dynamic self-financing strategy pi_theta(t/T, S_t / S_0, X^phi_t) trading
/// on the benchmark's scenarios; starts as the benchmark itself.
class BenchmarkStrategyAdversary final : public Adversary {
 public:
  BenchmarkStrategyAdversary(const BenchmarkReference& reference, const std::vector<std::size_t>& hidden,
                             std::uint64_t seed)
      : ref_(reference) {
    const std::size_t d = reference.spec().assets;
    std::vector<std::size_t> sizes{d + 2};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(d);
    net_ = Mlp::he_uniform(sizes, OutputActivation::identity(), seed);
    net_.zero_output_layer();
    for (std::size_t i = 0; i < d; ++i) net_.bias(net_.layers() - 1, i) = reference.spec().benchmark_weights[i];
  }

  const Mlp& network() const { return net_; }

  std::vector<double> features(std::size_t p, std::size_t t) const {
    const auto& spec = ref_.spec();
    const auto& sc = ref_.scenarios();
    std::vector<double> f(spec.assets + 2);
    f[0] = static_cast<double>(t) / static_cast<double>(spec.steps);
    for (std::size_t i = 0; i < spec.assets; ++i) f[1 + i] = sc.price(p, t, i) / spec.s0[i];
    f[spec.assets + 1] = ref_.wealth(p, t);
    return f;
  }

  /// Proportions held over [t, t+1) on path p.
  std::vector<double> proportions(std::size_t p, std::size_t t) const { return net_.forward(features(p, t)); }

  std::span<double> parameters() override { return net_.parameters(); }

  std::vector<double> push(std::span<const double> x_phi) override {
    const auto& sc = ref_.scenarios();
    if (x_phi.size() != sc.paths) throw std::invalid_argument("x_phi does not match the benchmark scenarios");
    std::vector<double> out(sc.paths);
    Tape tape;
    for (std::size_t p = 0; p < sc.paths; ++p) {
      double x = ref_.spec().x0;
      for (std::size_t t = 0; t < sc.steps; ++t) {
        net_.forward(features(p, t), tape);
        x *= growth(p, t, tape.output);
      }
      out[p] = x;
    }
    pushed_ = sc.paths;
    return out;
  }

  std::vector<double> pullback_parameters(std::span<const double> cot) override {
    const auto& sc = ref_.scenarios();
    const auto& spec = ref_.spec();
    if (cot.size() != pushed_) throw std::invalid_argument("cotangent does not match the last push");
    std::vector<double> g(net_.param_count(), 0.0);
    std::vector<Tape> tapes(sc.steps);
    std::vector<double> x(sc.steps + 1);
    std::vector<double> pi_bar(spec.assets);
    for (std::size_t p = 0; p < cot.size(); ++p) {
      if (cot[p] == 0.0) continue;
      x[0] = spec.x0;
      for (std::size_t t = 0; t < sc.steps; ++t) {
        net_.forward(features(p, t), tapes[t]);
        x[t + 1] = x[t] * growth(p, t, tapes[t].output);
      }
      double x_bar = cot[p];
      for (std::size_t t = sc.steps; t-- > 0;) {
        const double carry = sc.rate(p, t) * spec.dt;
        for (std::size_t i = 0; i < spec.assets; ++i) pi_bar[i] = x_bar * x[t] * (sc.ret(p, t, i) - carry);
        net_.backward(tapes[t], pi_bar, g);
        x_bar *= growth(p, t, tapes[t].output);
      }
    }
    return g;
  }

  std::vector<double> pullback_input(std::span<const double>) override {
    throw std::logic_error("the benchmark strategy does not depend on the benchmark's parameters");
  }

 private:
  double growth(std::size_t p, std::size_t t, const std::vector<double>& pi) const {
    const auto& sc = ref_.scenarios();
    double g = 1.0;
    double invested = 0.0;
    for (std::size_t i = 0; i < sc.assets; ++i) {
      g += pi[i] * sc.ret(p, t, i);
      invested += pi[i];
    }
    return g + (1.0 - invested) * sc.rate(p, t) * ref_.spec().dt;
  }

  const BenchmarkReference& ref_;
  Mlp net_;
  std::size_t pushed_ = 0;
};

}  // namespace rdro
