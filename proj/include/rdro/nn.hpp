#pragma once

// Feed-forward network with ReLU hidden layers and reverse-mode gradients.
//
// Parameters are stored in one flat vector, layer by layer: the weight matrix
// (rows = outputs, row-major) followed by the bias vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdro {

struct OutputActivation {
  enum class Kind { Identity, Softmax, ScaledTanh, Sigmoid };
  Kind kind = Kind::Identity;
  double scale = 1.0;  ///< ScaledTanh bound

  static OutputActivation identity() { return {Kind::Identity, 1.0}; }
  static OutputActivation softmax() { return {Kind::Softmax, 1.0}; }
  static OutputActivation scaled_tanh(double s) {
    if (!(s > 0.0)) throw std::invalid_argument("tanh scale must be positive");
    return {Kind::ScaledTanh, s};
  }
  static OutputActivation sigmoid() { return {Kind::Sigmoid, 1.0}; }

  std::string name() const {
    switch (kind) {
      case Kind::Identity: return "identity";
      case Kind::Softmax: return "softmax";
      case Kind::ScaledTanh: return "scaled_tanh";
      case Kind::Sigmoid: return "sigmoid";
    }
    return "identity";
  }

  static OutputActivation parse(const std::string& name, double s) {
    if (name == "identity") return identity();
    if (name == "softmax") return softmax();
    if (name == "scaled_tanh") return scaled_tanh(s);
    if (name == "sigmoid") return sigmoid();
    throw std::invalid_argument("unknown output activation '" + name + "'");
  }
};

/// Forward intermediates of one evaluation, consumed by Mlp::backward.
struct Tape {
  std::vector<std::vector<double>> inputs;  ///< input of each layer
  std::vector<std::vector<double>> pre;     ///< pre-activation of each layer
  std::vector<double> output;
};

class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> layer_sizes, OutputActivation out)
      : sizes_(std::move(layer_sizes)), out_(out) {
    if (sizes_.size() < 2) throw std::invalid_argument("network needs at least an input and an output layer");
    for (auto s : sizes_) {
      if (s == 0) throw std::invalid_argument("layer sizes must be positive");
    }
    if (out_.kind == OutputActivation::Kind::Softmax && sizes_.back() < 1) {
      throw std::invalid_argument("softmax head needs at least one output");
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
  }

  /// He-uniform weights in +-sqrt(6 / fan_in), zero biases.
  static Mlp he_uniform(std::vector<std::size_t> layer_sizes, OutputActivation out, std::uint64_t seed) {
    Mlp net(std::move(layer_sizes), out);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.layers(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(net.sizes_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const std::size_t count = net.sizes_[l] * net.sizes_[l + 1];
      for (std::size_t k = 0; k < count; ++k) net.params_[net.w_off_[l] + k] = u(rng);
    }
    return net;
  }

  std::size_t layers() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }
  const OutputActivation& output_activation() const { return out_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return params_[w_off_.at(layer) + row * sizes_[layer] + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return params_[b_off_.at(layer) + row]; }

  /// Zero the last layer, so the network starts as the constant activation(0).
  void zero_output_layer() {
    const std::size_t l = layers() - 1;
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(w_off_[l]), params_.end(), 0.0);
  }

  std::vector<double> forward(std::span<const double> input) const {
    Tape tape;
    forward(input, tape);
    return tape.output;
  }

  void forward(std::span<const double> input, Tape& tape) const {
    if (input.size() != input_size()) throw std::invalid_argument("network input has the wrong length");
    tape.inputs.resize(layers());
    tape.pre.resize(layers());
    tape.inputs[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params_.data() + w_off_[l];
      const double* b = params_.data() + b_off_[l];
      const auto& a = tape.inputs[l];
      auto& z = tape.pre[l];
      z.resize(out);
      for (std::size_t r = 0; r < out; ++r) {
        double acc = b[r];
        const double* wr = w + r * in;
        for (std::size_t c = 0; c < in; ++c) acc += wr[c] * a[c];
        z[r] = acc;
      }
      if (l + 1 < layers()) {
        auto& next = tape.inputs[l + 1];
        next.resize(out);
        for (std::size_t r = 0; r < out; ++r) next[r] = z[r] > 0.0 ? z[r] : 0.0;
      }
    }
    apply_output(tape.pre.back(), tape.output);
  }

  /// Accumulates d(cotangent . output)/d(params) into grad; optionally writes
  /// d(cotangent . output)/d(input) into input_cotangent. ReLU'(0) = 0.
  void backward(const Tape& tape, std::span<const double> cotangent, std::span<double> grad,
                std::span<double> input_cotangent = {}) const {
    if (tape.pre.size() != layers() || tape.output.size() != output_size() ||
        tape.inputs.front().size() != input_size()) {
      throw std::invalid_argument("tape does not belong to this network");
    }
    if (cotangent.size() != output_size()) throw std::invalid_argument("cotangent has the wrong length");
    if (grad.size() != param_count()) throw std::invalid_argument("gradient buffer has the wrong length");
    if (!input_cotangent.empty() && input_cotangent.size() != input_size()) {
      throw std::invalid_argument("input cotangent buffer has the wrong length");
    }

    std::vector<double> delta(output_size());
    output_vjp(tape, cotangent, delta);

    std::vector<double> prev;
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params_.data() + w_off_[l];
      double* gw = grad.data() + w_off_[l];
      double* gb = grad.data() + b_off_[l];
      const auto& a = tape.inputs[l];
      for (std::size_t r = 0; r < out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        gb[r] += d;
        double* gwr = gw + r * in;
        for (std::size_t c = 0; c < in; ++c) gwr[c] += d * a[c];
      }
      if (l == 0 && input_cotangent.empty()) break;
      prev.assign(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* wr = w + r * in;
        for (std::size_t c = 0; c < in; ++c) prev[c] += wr[c] * d;
      }
      if (l == 0) {
        std::copy(prev.begin(), prev.end(), input_cotangent.begin());
        break;
      }
      const auto& zprev = tape.pre[l - 1];
      for (std::size_t c = 0; c < in; ++c) {
        if (!(zprev[c] > 0.0)) prev[c] = 0.0;
      }
      delta.swap(prev);
    }
  }

  std::vector<double> gradient(const Tape& tape, std::span<const double> cotangent) const {
    std::vector<double> g(param_count(), 0.0);
    backward(tape, cotangent, g);
    return g;
  }

  /// Text layout:
  ///   rdro-mlp 1
  ///   layers <n0> <n1> ... <nL>
  ///   output <identity|softmax|scaled_tanh|sigmoid> <scale>
  ///   params <count>
  ///   one parameter per line, %.17g
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write network file " + path);
    write(os);
  }

  void write(std::ostream& os) const {
    os << "rdro-mlp 1\nlayers";
    for (auto s : sizes_) os << ' ' << s;
    os << "\noutput " << out_.name() << ' ' << std::setprecision(17) << out_.scale << "\nparams "
       << params_.size() << '\n';
    for (double p : params_) os << std::setprecision(17) << p << '\n';
  }

  static Mlp load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read network file " + path);
    return read(is);
  }

  static Mlp read(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "rdro-mlp" || version != 1) {
      throw std::runtime_error("not an rdro-mlp v1 network file");
    }
    std::string line;
    std::getline(is, line);
    std::getline(is, line);
    std::istringstream ls(line);
    ls >> tag;
    if (tag != "layers") throw std::runtime_error("network file: expected 'layers'");
    std::vector<std::size_t> sizes;
    for (std::size_t s; ls >> s;) sizes.push_back(s);
    std::string act;
    double scale = 1.0;
    if (!(is >> tag >> act >> scale) || tag != "output") throw std::runtime_error("network file: expected 'output'");
    std::size_t count = 0;
    if (!(is >> tag >> count) || tag != "params") throw std::runtime_error("network file: expected 'params'");
    Mlp net(sizes, OutputActivation::parse(act, scale));
    if (count != net.param_count()) throw std::runtime_error("network file: parameter count does not match shape");
    for (auto& p : net.params_) {
      if (!(is >> p)) throw std::runtime_error("network file: truncated parameter list");
    }
    return net;
  }

 private:
  void apply_output(const std::vector<double>& z, std::vector<double>& y) const {
    y.resize(z.size());
    switch (out_.kind) {
      case OutputActivation::Kind::Identity: y = z; break;
      case OutputActivation::Kind::Softmax: {
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) s += (y[k] = std::exp(z[k] - m));
        for (auto& v : y) v /= s;
        break;
      }
      case OutputActivation::Kind::ScaledTanh:
        for (std::size_t k = 0; k < z.size(); ++k) y[k] = out_.scale * std::tanh(z[k]);
        break;
      case OutputActivation::Kind::Sigmoid:
        for (std::size_t k = 0; k < z.size(); ++k) y[k] = 1.0 / (1.0 + std::exp(-z[k]));
        break;
    }
  }

  void output_vjp(const Tape& tape, std::span<const double> cot, std::vector<double>& delta) const {
    const auto& y = tape.output;
    switch (out_.kind) {
      case OutputActivation::Kind::Identity: std::copy(cot.begin(), cot.end(), delta.begin()); break;
      case OutputActivation::Kind::Softmax: {
        double dot = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) dot += y[k] * cot[k];
        for (std::size_t k = 0; k < y.size(); ++k) delta[k] = y[k] * (cot[k] - dot);
        break;
      }
      case OutputActivation::Kind::ScaledTanh:
        for (std::size_t k = 0; k < y.size(); ++k) {
          const double t = std::tanh(tape.pre.back()[k]);
          delta[k] = cot[k] * out_.scale * (1.0 - t * t);
        }
        break;
      case OutputActivation::Kind::Sigmoid:
        for (std::size_t k = 0; k < y.size(); ++k) delta[k] = cot[k] * y[k] * (1.0 - y[k]);
        break;
    }
  }

  std::vector<std::size_t> sizes_;
  OutputActivation out_;
  std::vector<std::size_t> w_off_;
  std::vector<std::size_t> b_off_;
  std::vector<double> params_;
};

}  // namespace rdro
