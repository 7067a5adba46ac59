#pragma once

// Empirical p-Wasserstein distance between one-dimensional samples. In one
// dimension the optimal coupling is the comonotonic (rank-matched) one, so the
// distance is the L^p distance between the sorted samples.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace rdro {

struct WassersteinSpec {
  double order = 1.0;    ///< p >= 1
  double epsilon = 0.0;  ///< ball radius, same units as the samples

  void validate() const {
    if (!(order >= 1.0) || !std::isfinite(order)) throw std::invalid_argument("wasserstein order must be >= 1");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("wasserstein radius must be >= 0");
  }

  /// |x|^p with exact special cases for p = 1 and p = 2.
  double power(double x) const {
    const double a = std::abs(x);
    if (order == 1.0) return a;
    if (order == 2.0) return a * a;
    return std::pow(a, order);
  }

  double epsilon_power() const { return power(epsilon); }
};

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sample sets must have equal length");
  if (a.empty()) throw std::invalid_argument("sample sets must be non-empty");
}

}  // namespace detail

/// Stable ascending order of a: result[k] is the index of the k-th smallest value.
inline std::vector<std::size_t> ascending_order(std::span<const double> a) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&a](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  return idx;
}

/// Permutation perm such that b[perm[i]] has the same rank within b as a[i]
/// has within a. Ties are broken by original index.
inline std::vector<std::size_t> comonotonic_permutation(std::span<const double> a,
                                                        std::span<const double> b) {
  detail::check_pair(a, b);
  const auto oa = ascending_order(a);
  const auto ob = ascending_order(b);
  std::vector<std::size_t> perm(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) perm[oa[k]] = ob[k];
  return perm;
}

/// b reordered so that (a, b') is comonotonic.
inline std::vector<double> comonotonic_pair(std::span<const double> a, std::span<const double> b) {
  const auto perm = comonotonic_permutation(a, b);
  std::vector<double> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) out[i] = b[perm[i]];
  return out;
}

/// (1/N) sum |a_(k) - b_(k)|^p over sorted samples, i.e. distance^p.
inline double distance_power(std::span<const double> a, std::span<const double> b,
                             const WassersteinSpec& spec) {
  detail::check_pair(a, b);
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  for (std::size_t k = 0; k < sa.size(); ++k) acc += spec.power(sa[k] - sb[k]);
  return acc / static_cast<double>(sa.size());
}

inline double distance(std::span<const double> a, std::span<const double> b,
                       const WassersteinSpec& spec) {
  const double dp = distance_power(a, b, spec);
  if (spec.order == 1.0) return dp;
  if (spec.order == 2.0) return std::sqrt(dp);
  return std::pow(dp, 1.0 / spec.order);
}

/// (d_p^p - eps^p)_+
inline double constraint_error(std::span<const double> a, std::span<const double> b,
                               const WassersteinSpec& spec) {
  return std::max(distance_power(a, b, spec) - spec.epsilon_power(), 0.0);
}

}  // namespace rdro
