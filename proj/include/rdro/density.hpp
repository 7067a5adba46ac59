#pragma once

// Kernel density estimation of a one-dimensional sample: the smoothed
// distribution function F(x) = (1/N) sum_i K((x - x_i)/h) and the normalised
// kernel weights w_ij = k((x_i - x_j)/h) / sum_l k((x_i - x_l)/h), where K is
// the standardised kernel CDF and k its density.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rdro {

enum class KernelKind { Gaussian, Epanechnikov };

/// Zero-centred kernel with unit variance.
struct Kernel {
  KernelKind kind = KernelKind::Gaussian;

  /// Beyond this standardised distance the density is zero or below 1e-21 of its peak.
  double radius() const { return kind == KernelKind::Gaussian ? 10.0 : std::sqrt(5.0); }

  double pdf(double u) const {
    if (kind == KernelKind::Gaussian) {
      return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    }
    const double t = u * u / 5.0;
    return t >= 1.0 ? 0.0 : 0.75 / std::sqrt(5.0) * (1.0 - t);
  }

  double cdf(double u) const {
    if (kind == KernelKind::Gaussian) return 0.5 * std::erfc(-u / std::numbers::sqrt2);
    const double r = std::sqrt(5.0);
    if (u <= -r) return 0.0;
    if (u >= r) return 1.0;
    const double v = u / r;
    return 0.5 + 0.75 * (v - v * v * v / 3.0);
  }
};

struct KdeSpec {
  enum class Rule { Silverman, Fixed };

  Kernel kernel{};
  Rule rule = Rule::Silverman;
  double fixed_bandwidth = 0.0;

  static KdeSpec silverman(KernelKind k = KernelKind::Gaussian) { return {Kernel{k}, Rule::Silverman, 0.0}; }
  static KdeSpec fixed(double h, KernelKind k = KernelKind::Gaussian) {
    if (!(h > 0.0)) throw std::invalid_argument("fixed bandwidth must be positive");
    return {Kernel{k}, Rule::Fixed, h};
  }
};

class DegenerateBandwidth : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Silverman: 1.06 * sd * N^(-1/5) with the (N-1)-denominator sample sd.
inline double bandwidth(std::span<const double> points, const KdeSpec& spec) {
  if (spec.rule == KdeSpec::Rule::Fixed) return spec.fixed_bandwidth;
  const std::size_t n = points.size();
  if (n < 2) throw DegenerateBandwidth("Silverman bandwidth needs at least two points; use a fixed bandwidth");
  const double mean = std::accumulate(points.begin(), points.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : points) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) {
    throw DegenerateBandwidth("Silverman bandwidth is zero for a constant sample; use a fixed bandwidth");
  }
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

/// KDE bound to a sample with a resolved bandwidth.
///
/// Gaussian sums are evaluated over a sorted window of radius 10h. The
/// Epanechnikov kernel is a polynomial on its support, so window sums reduce
/// to differences of prefix sums of powers of the standardised points and
/// every operation costs O(N log N).
class Kde {
 public:
  Kde(std::span<const double> points, const KdeSpec& spec)
      : kernel_(spec.kernel), h_(rdro::bandwidth(points, spec)), points_(points.begin(), points.end()) {
    if (points_.empty()) throw std::invalid_argument("KDE needs at least one point");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [this](std::size_t a, std::size_t b) { return points_[a] < points_[b]; });
    sorted_.reserve(points_.size());
    for (auto i : order_) sorted_.push_back(points_[i]);
    if (polynomial()) {
      // Centre before taking powers to limit cancellation.
      centre_ = sorted_[sorted_.size() / 2];
      y_.resize(size());
      for (std::size_t k = 0; k < size(); ++k) y_[k] = (sorted_[k] - centre_) / h_;
      for (auto& p : pow_) p.assign(size() + 1, 0.0L);
      for (std::size_t k = 0; k < size(); ++k) {
        const long double y = y_[k];
        long double t = 1.0L;
        for (std::size_t e = 0; e < pow_.size(); ++e) {
          pow_[e][k + 1] = pow_[e][k] + t;
          t *= y;
        }
      }
    }
  }

  std::size_t size() const { return points_.size(); }
  double bandwidth() const { return h_; }
  const Kernel& kernel() const { return kernel_; }
  const std::vector<double>& points() const { return points_; }
  /// Rows whose kernel mass vanished and fell back to a unit self-weight.
  std::size_t fallback_rows() const { return fallback_rows_; }

  double cdf(double x) const {
    if (polynomial()) return poly_cdf((x - centre_) / h_);
    const auto [lo, hi] = window(x);
    double acc = static_cast<double>(lo);
    for (std::size_t k = lo; k < hi; ++k) acc += kernel_.cdf((x - sorted_[k]) / h_);
    return acc / static_cast<double>(size());
  }

  double pdf(double x) const {
    double acc = 0.0;
    if (polynomial()) {
      acc = poly_density_sum((x - centre_) / h_);
    } else {
      const auto [lo, hi] = window(x);
      for (std::size_t k = lo; k < hi; ++k) acc += kernel_.pdf((x - sorted_[k]) / h_);
    }
    return acc / (static_cast<double>(size()) * h_);
  }

  std::vector<double> cdf_at_points() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = cdf(points_[i]);
    return out;
  }

  /// Dense row w_i. of the normalised kernel weights.
  std::vector<double> weight_row(std::size_t i) const {
    std::vector<double> row(size(), 0.0);
    double z = 0.0;
    for (std::size_t j = 0; j < size(); ++j) {
      row[j] = kernel_.pdf((points_[i] - points_[j]) / h_);
      z += row[j];
    }
    if (!(z > 0.0)) {
      ++fallback_rows_;
      std::fill(row.begin(), row.end(), 0.0);
      row[i] = 1.0;
      return row;
    }
    for (auto& w : row) w /= z;
    return row;
  }

  /// a_j = sum_i coef_i w_ij. Rows with a zero coefficient are skipped.
  std::vector<double> pullback(std::span<const double> coef) const {
    std::vector<std::vector<double>> out(1);
    pullback_many({&coef, 1}, out);
    return std::move(out[0]);
  }

  /// Two pullbacks sharing one pass over the kernel rows.
  std::pair<std::vector<double>, std::vector<double>> pullback(std::span<const double> c1,
                                                               std::span<const double> c2) const {
    const std::span<const double> coefs[2] = {c1, c2};
    std::vector<std::vector<double>> out(2);
    pullback_many(coefs, out);
    return {std::move(out[0]), std::move(out[1])};
  }

 private:
  bool polynomial() const { return kernel_.kind == KernelKind::Epanechnikov; }

  /// Sorted index range [lo, hi) of points within the kernel radius of x.
  std::pair<std::size_t, std::size_t> window(double x) const {
    const double reach = kernel_.radius() * h_;
    const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x - reach);
    const auto hi = std::upper_bound(lo, sorted_.end(), x + reach);
    return {static_cast<std::size_t>(lo - sorted_.begin()), static_cast<std::size_t>(hi - sorted_.begin())};
  }

  /// Window in standardised units, open at both ends.
  std::pair<std::size_t, std::size_t> poly_window(long double y) const {
    const long double r = kernel_.radius();
    const auto lo = std::upper_bound(y_.begin(), y_.end(), static_cast<double>(y - r));
    const auto hi = std::lower_bound(lo, y_.end(), static_cast<double>(y + r));
    return {static_cast<std::size_t>(lo - y_.begin()), static_cast<std::size_t>(hi - y_.begin())};
  }

  long double prefix(std::size_t e, std::size_t lo, std::size_t hi) const { return pow_[e][hi] - pow_[e][lo]; }

  /// sum_k k(y - y_k), k(u) = 0.75/sqrt5 (1 - u^2/5).
  double poly_density_sum(long double y) const {
    const auto [lo, hi] = poly_window(y);
    const long double s0 = prefix(0, lo, hi);
    const long double s1 = prefix(1, lo, hi);
    const long double s2 = prefix(2, lo, hi);
    const long double a = 0.75L / std::sqrt(5.0L);
    return static_cast<double>(a * (s0 - (y * y * s0 - 2.0L * y * s1 + s2) / 5.0L));
  }

  /// (1/N) sum_k K(y - y_k), K(u) = 1/2 + 3/4 (v - v^3/3), v = u/sqrt5.
  double poly_cdf(long double y) const {
    const auto [lo, hi] = poly_window(y);
    const long double s0 = prefix(0, lo, hi);
    const long double s1 = prefix(1, lo, hi);
    const long double s2 = prefix(2, lo, hi);
    const long double s3 = prefix(3, lo, hi);
    const long double r = std::sqrt(5.0L);
    // sum (y - y_k) and sum (y - y_k)^3 over the window
    const long double m1 = y * s0 - s1;
    const long double m3 = y * y * y * s0 - 3.0L * y * y * s1 + 3.0L * y * s2 - s3;
    const long double acc = static_cast<long double>(lo) + 0.5L * s0 + 0.75L * (m1 / r - m3 / (3.0L * r * r * r));
    return static_cast<double>(std::clamp(acc / static_cast<long double>(size()), 0.0L, 1.0L));
  }

  void pullback_many(std::span<const std::span<const double>> coefs, std::vector<std::vector<double>>& out) const {
    for (const auto& c : coefs) {
      if (c.size() != size()) throw std::invalid_argument("coefficient length does not match KDE sample");
    }
    const std::size_t m = coefs.size();
    for (auto& o : out) o.assign(size(), 0.0);
    if (polynomial()) {
      poly_pullback(coefs, out);
      return;
    }
    std::vector<double> buf;
    for (std::size_t i = 0; i < size(); ++i) {
      bool any = false;
      for (std::size_t c = 0; c < m; ++c) any = any || coefs[c][i] != 0.0;
      if (!any) continue;
      const double xi = points_[i];
      const auto [lo, hi] = window(xi);
      buf.resize(hi - lo);
      double z = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        buf[k - lo] = kernel_.pdf((xi - sorted_[k]) / h_);
        z += buf[k - lo];
      }
      if (!(z > 0.0)) {
        ++fallback_rows_;
        for (std::size_t c = 0; c < m; ++c) out[c][i] += coefs[c][i];
        continue;
      }
      for (std::size_t c = 0; c < m; ++c) {
        if (coefs[c][i] == 0.0) continue;
        const double scale = coefs[c][i] / z;
        auto& o = out[c];
        for (std::size_t k = lo; k < hi; ++k) o[order_[k]] += scale * buf[k - lo];
      }
    }
  }

  /// a_j = sum_i b_i k(y_i - y_j) with b_i = coef_i / z_i, expanded in powers
  /// of y_i so that each a_j is a difference of prefix sums.
  void poly_pullback(std::span<const std::span<const double>> coefs, std::vector<std::vector<double>>& out) const {
    const std::size_t n = size();
    const long double a = 0.75L / std::sqrt(5.0L);
    std::vector<long double> z(n);
    for (std::size_t k = 0; k < n; ++k) z[k] = poly_density_sum(y_[k]);
    std::array<std::vector<long double>, 3> b;
    for (std::size_t c = 0; c < coefs.size(); ++c) {
      for (auto& v : b) v.assign(n + 1, 0.0L);
      for (std::size_t k = 0; k < n; ++k) {
        const long double w = coefs[c][order_[k]] / z[k];
        const long double y = y_[k];
        b[0][k + 1] = b[0][k] + w;
        b[1][k + 1] = b[1][k] + w * y;
        b[2][k + 1] = b[2][k] + w * y * y;
      }
      for (std::size_t k = 0; k < n; ++k) {
        const long double y = y_[k];
        const auto [lo, hi] = poly_window(y);
        const long double s0 = b[0][hi] - b[0][lo];
        const long double s1 = b[1][hi] - b[1][lo];
        const long double s2 = b[2][hi] - b[2][lo];
        out[c][order_[k]] = static_cast<double>(a * (s0 - (y * y * s0 - 2.0L * y * s1 + s2) / 5.0L));
      }
    }
  }

  Kernel kernel_;
  double h_;
  std::vector<double> points_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
  double centre_ = 0.0;
  std::vector<double> y_;  ///< standardised sorted points (polynomial kernel)
  std::array<std::vector<long double>, 4> pow_;
  mutable std::size_t fallback_rows_ = 0;
};

inline double cdf_hat(std::span<const double> points, double x, const KdeSpec& spec) {
  return Kde(points, spec).cdf(x);
}

inline std::vector<double> kernel_weights(std::span<const double> points, std::size_t i,
                                          const KdeSpec& spec) {
  if (i >= points.size()) throw std::out_of_range("kernel weight row index out of range");
  // A single point has no spread; its only weight is itself.
  if (points.size() == 1) return {1.0};
  return Kde(points, spec).weight_row(i);
}

}  // namespace rdro
