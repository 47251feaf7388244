#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>
#include <stdexcept>

#include "fracperc/params.hpp"

// Closed-form constants and probability bounds for the concentration and
// convergence estimates. The constants that are only shown to exist
// (C1..C6, b) default to 1 and are reported symbolically by callers.

namespace fracperc::bounds {

/// exp(-a^2 / (2 upsilon)).
inline double hoeffding_bound(double a, double upsilon) {
  if (!(a > 0.0) || !(upsilon > 0.0)) {
    throw std::invalid_argument("hoeffding_bound: a and upsilon must be positive");
  }
  return std::exp(-a * a / (2.0 * upsilon));
}

/// gamma = exp(-(1/(2 sqrt 2)) p^2 / max(p, 1 - p)).
inline double gamma_const(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("gamma_const: p must lie in (0,1)");
  return std::exp(-(1.0 / (2.0 * std::numbers::sqrt2)) * p * p / std::max(p, 1.0 - p));
}

/// 1 + (pk)^(-n/3) < (pk)^(1/8)
inline bool n0_condition(const PercolationParams& params, int n) {
  const double pk = params.pk();
  return 1.0 + std::pow(pk, -n / 3.0) < std::pow(pk, 1.0 / 8.0);
}

/// 1 + (pk)^(-5n/12) < (pk)^(1/4)
inline bool n0_consequence(const PercolationParams& params, int n) {
  const double pk = params.pk();
  return 1.0 + std::pow(pk, -5.0 * n / 12.0) < std::pow(pk, 1.0 / 4.0);
}

/// Smallest positive integer N0 with 1 + (pk)^(-N0/3) < (pk)^(1/8).
inline int n0_const(const PercolationParams& params) {
  params.require_projection_regime("n0_const");
  for (int n = 1; n < std::numeric_limits<int>::max(); ++n) {
    if (n0_condition(params, n)) {
      if (!n0_consequence(params, n)) {
        throw std::logic_error("N0 found but its consequence inequality fails");
      }
      return n;
    }
  }
  throw std::overflow_error("n0_const: no admissible N0 found");
}

/// (pk)^(L N0 / 4) > (pk)^((L-1) N0 / 8) p^(-N0), compared in logarithms.
inline bool l_consequence(const PercolationParams& params, int l, int n0) {
  const double lpk = std::log(params.pk());
  return l * n0 / 4.0 * lpk > (l - 1) * n0 / 8.0 * lpk - n0 * std::log(params.p());
}

/// L = ceil(-8 log_{pk} p) + 1.
inline int l_const(const PercolationParams& params) {
  params.require_projection_regime("l_const");
  const int l = static_cast<int>(std::ceil(-8.0 * std::log(params.p()) / std::log(params.pk()))) + 1;
  if (!l_consequence(params, l, n0_const(params))) {
    throw std::logic_error("L computed but its consequence inequality fails");
  }
  return l;
}

struct IncrementThresholds {
  double i_threshold = 0.0;       // p^-n k^-n (p^n k^n y)^(2/3)
  double ii_threshold = 0.0;      // (pk)^(-n/6)
  double failure_exponent = 0.0;  // gamma^((pk)^(n/3)), multiplied by C1
};

inline IncrementThresholds increment_thresholds(const PercolationParams& params, int n, double y) {
  params.require_projection_regime("increment_thresholds");
  const double pkn = std::pow(params.pk(), n);
  IncrementThresholds t;
  t.i_threshold = std::pow(pkn * y, 2.0 / 3.0) / pkn;
  t.ii_threshold = std::pow(params.pk(), -n / 6.0);
  t.failure_exponent = std::pow(gamma_const(params.p()), std::pow(params.pk(), n / 3.0));
  return t;
}

struct TailSum {
  double value = 0.0;
  int terms = 0;
  /// m* such that term(m+1) < term(m) / 2 for every summed m >= m*; -1 if none.
  int ratio_index = -1;
};

/// sum_{m >= N} k^(m-N) gamma^((pk)^(m/3)) with C1 = 1. Terms are summed
/// while they grow; once they decrease monotonically the sum stops at the
/// first term below epsilon times the partial sum.
inline TailSum increment_tail_sum(const PercolationParams& params, int big_n, double epsilon) {
  params.require_projection_regime("increment_tail_sum");
  if (!(epsilon > 0.0)) throw std::invalid_argument("increment_tail_sum: epsilon must be positive");
  const double log_gamma = std::log(gamma_const(params.p()));
  const double log_k = std::log(static_cast<double>(params.k()));
  const auto log_term = [&](int m) {
    return (m - big_n) * log_k + std::pow(params.pk(), m / 3.0) * log_gamma;
  };
  TailSum out;
  long double sum = 0;
  double prev = log_term(big_n);
  sum += std::exp(static_cast<long double>(prev));
  out.terms = 1;
  bool decreasing = false;
  for (int m = big_n + 1; m < big_n + 100000; ++m) {
    const double lt = log_term(m);
    const long double term = std::exp(static_cast<long double>(lt));
    if (lt < prev) decreasing = true;
    if (lt - prev < -std::numbers::ln2) {
      if (out.ratio_index < 0) out.ratio_index = m - 1;
    } else {
      out.ratio_index = -1;
    }
    sum += term;
    ++out.terms;
    if (decreasing && term < epsilon * sum) break;
    prev = lt;
  }
  out.value = static_cast<double>(sum);
  return out;
}

struct ProbabilityBound {
  double value = 0.0;    // raw lower bound, possibly negative
  bool vacuous = false;  // value <= 0
  double clamped() const noexcept { return std::max(0.0, value); }
};

/// 1 - sum_{m = ceil(n/L)}^{n} gamma^((pk)^(m/3)), with C1 = 1.
inline ProbabilityBound window_probability(const PercolationParams& params, int n) {
  const int l = l_const(params);
  const double gamma = gamma_const(params.p());
  const int first = (n + l - 1) / l;
  long double s = 0;
  for (int m = first; m <= n; ++m) s += std::pow(static_cast<long double>(gamma), std::pow(params.pk(), m / 3.0));
  ProbabilityBound b;
  b.value = static_cast<double>(1.0L - s);
  b.vacuous = b.value <= 0.0;
  return b;
}

namespace detail {

/// log of sum_{m = ceil(N/L)}^{N} gamma^((pk)^(m/3)) + sum_{m >= N} k^(m-N) gamma^((pk)^(m/3)).
inline double log_interval_failure(const PercolationParams& params, int big_n, double epsilon) {
  const int l = l_const(params);
  const double lg = std::log(gamma_const(params.p()));
  const double lk = std::log(static_cast<double>(params.k()));
  std::vector<double> logs;
  for (int m = (big_n + l - 1) / l; m <= big_n; ++m) logs.push_back(std::pow(params.pk(), m / 3.0) * lg);
  double prev = -std::numeric_limits<double>::infinity();
  for (int m = big_n;; ++m) {
    const double lt = (m - big_n) * lk + std::pow(params.pk(), m / 3.0) * lg;
    logs.push_back(lt);
    const double top = *std::max_element(logs.begin(), logs.end());
    if (lt < prev && lt < top + std::log(epsilon)) break;
    prev = lt;
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  long double acc = 0;
  for (double v : logs) acc += std::exp(static_cast<long double>(v - top));
  return top + static_cast<double>(std::log(acc));
}

}  // namespace detail

/// 1 - p_N = sum_{m = ceil(N/L)}^{N} gamma^((pk)^(m/3)) + sum_{m >= N} k^(m-N) gamma^((pk)^(m/3)),
/// with C1 = 1: the failure probability attached to one level-N interval.
inline double interval_failure(const PercolationParams& params, int big_n, double epsilon = 1e-15) {
  return std::exp(detail::log_interval_failure(params, big_n, epsilon));
}

struct SeriesSum {
  double value = 0.0;
  int first = 0;  // first summation index
  int last = 0;   // last summed index
};

/// Partial sums of sum_{N >= N0} k^N (1 - p_N), computed in logarithms and
/// stopped once the terms decrease and fall below epsilon times the sum.
inline SeriesSum interval_failure_series(const PercolationParams& params, double epsilon = 1e-12,
                               int max_terms = 100000) {
  const int n0 = n0_const(params);
  const double lk = std::log(static_cast<double>(params.k()));
  SeriesSum out;
  out.first = n0;
  long double sum = 0;
  double prev = -std::numeric_limits<double>::infinity();
  bool decreasing = false;
  for (int big_n = n0; big_n < n0 + max_terms; ++big_n) {
    const double lt = big_n * lk + detail::log_interval_failure(params, big_n, 1e-15);
    const long double term = std::exp(static_cast<long double>(lt));
    sum += term;
    out.last = big_n;
    if (lt < prev) decreasing = true;
    if (decreasing && term < epsilon * sum) break;
    prev = lt;
  }
  out.value = static_cast<double>(sum);
  return out;
}

struct GridMesh {
  double mesh = 0.0;         // delta C4^-1 p^(5n/6) k^(-7n/6)
  double cardinality = 0.0;  // C5 delta^-1 p^(-5n/6) k^(7n/6)
};

inline GridMesh grid_mesh(const PercolationParams& params, int n, double delta, double c4 = 1.0,
                          double c5 = 1.0) {
  if (!(delta > 0.0)) throw std::invalid_argument("grid_mesh: delta must be positive");
  const double growth = std::pow(params.p(), 5.0 * n / 6.0) * std::pow(params.k(), -7.0 * n / 6.0);
  return {delta / c4 * growth, c5 / delta / growth};
}

/// N > 7n/6 + (5n/6) log_k(1/p) + log_k(C4/delta)
inline bool depth_condition(const PercolationParams& params, int big_n, int n, double delta,
                            double c4 = 1.0) {
  const double lk = std::log(static_cast<double>(params.k()));
  return big_n > 7.0 * n / 6.0 + 5.0 * n / 6.0 * std::log(1.0 / params.p()) / lk +
                     std::log(c4 / delta) / lk;
}

struct DepthRelation {
  std::optional<int> n;  // largest admissible n, if any
  double l_prime = 0.0;  // n <= L' N - L''
  double l_double_prime = 0.0;
};

/// Largest n compatible with an interval of length k^-N, with L' and L''
/// from rearranging the defining inequality.
inline DepthRelation depth_relation(const PercolationParams& params, int big_n, double delta,
                                    double c4 = 1.0) {
  if (!(delta > 0.0)) throw std::invalid_argument("depth_relation: delta must be positive");
  const double lk = std::log(static_cast<double>(params.k()));
  DepthRelation r;
  const double rate = 7.0 / 6.0 + 5.0 / 6.0 * std::log(1.0 / params.p()) / lk;
  r.l_prime = 1.0 / rate;
  r.l_double_prime = std::log(c4 / delta) / lk / rate;
  if (!depth_condition(params, big_n, 0, delta, c4)) return r;
  int n = 0;
  while (depth_condition(params, big_n, n + 1, delta, c4)) ++n;
  r.n = n;
  return r;
}

/// 1 - C1 C5^2 delta^-2 p^(-5n/3) k^(7n/3) sum_{m >= n} gamma^((pk)^(m/3)),
/// the uniform-in-angle bound. Reported only; vacuous at small n.
inline ProbabilityBound uniform_probability(const PercolationParams& params, int n, double delta,
                                            double c5 = 1.0, double epsilon = 1e-15) {
  params.require_projection_regime("uniform_probability");
  if (!(delta > 0.0)) throw std::invalid_argument("uniform_probability: delta must be positive");
  const double lg = std::log(gamma_const(params.p()));
  long double tail = 0;
  for (int m = n;; ++m) {
    const long double term = std::exp(static_cast<long double>(std::pow(params.pk(), m / 3.0) * lg));
    tail += term;
    if (term < epsilon * tail || term == 0) break;
  }
  const double prefactor = c5 * c5 / (delta * delta) * std::pow(params.p(), -5.0 * n / 3.0) *
                           std::pow(params.k(), 7.0 * n / 3.0);
  ProbabilityBound b;
  b.value = static_cast<double>(1.0L - prefactor * tail);
  b.vacuous = b.value <= 0.0;
  return b;
}

}  // namespace fracperc::bounds
