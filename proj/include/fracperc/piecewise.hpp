#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracperc/addressing.hpp"
#include "fracperc/direction.hpp"
#include "fracperc/params.hpp"

namespace fracperc {

/// Continuous piecewise-linear function given by its values at sorted
/// breakpoints, zero outside [front, back].
struct PiecewiseLinear {
  std::vector<double> breakpoints;
  std::vector<double> values;

  double operator()(double x) const {
    if (breakpoints.empty() || x < breakpoints.front() || x > breakpoints.back()) return 0.0;
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    if (it == breakpoints.end()) return values.back();
    const auto i = static_cast<std::size_t>(it - breakpoints.begin());
    if (i == 0) return values.front();
    const double x0 = breakpoints[i - 1], x1 = breakpoints[i];
    const double t = (x - x0) / (x1 - x0);
    return values[i - 1] + t * (values[i] - values[i - 1]);
  }

  double integral() const {
    long double acc = 0;
    for (std::size_t i = 1; i < breakpoints.size(); ++i) {
      acc += 0.5L * (static_cast<long double>(values[i]) + values[i - 1]) *
             (static_cast<long double>(breakpoints[i]) - breakpoints[i - 1]);
    }
    return static_cast<double>(acc);
  }

  double max_abs_slope() const {
    double m = 0;
    for (std::size_t i = 1; i < breakpoints.size(); ++i) {
      const double w = breakpoints[i] - breakpoints[i - 1];
      if (w > 0) m = std::max(m, std::fabs(values[i] - values[i - 1]) / w);
    }
    return m;
  }
};

enum class DensityKind { linear, kadic };

/// Coordinates of the density's domain: the raw projection line, or the
/// common parameterization of length sqrt(2) shared by all oblique directions.
enum class DensityFrame { raw, delta };

/// Exact projected density x -> y_n(x).
///
/// kind == linear: `values[i]` is the value at `breakpoints[i]`, linear in
/// between, zero outside the breakpoint span.
/// kind == kadic: `values[i]` is the constant value on the open interval
/// (breakpoints[i], breakpoints[i+1]); breakpoints are the level-n k-adic points.
struct PiecewiseDensity {
  DensityKind kind = DensityKind::linear;
  DensityFrame frame = DensityFrame::raw;
  int level = 0;
  Direction direction = Direction::axial(Axis::vertical);
  PercolationParams params{2, 0.5};
  std::uint64_t seed = 0;
  std::vector<double> breakpoints;
  std::vector<double> values;

  std::size_t pieces() const noexcept {
    return breakpoints.size() < 2 ? 0 : breakpoints.size() - 1;
  }
};

enum class Side { left, right };

namespace detail {

/// Index of the k-adic piece containing x (x in [0,1]), snapping x that is
/// within one ulp of a k-adic point to the piece it opens.
inline std::size_t kadic_piece(const PiecewiseDensity& d, double x) {
  const std::size_t n = d.pieces();
  const auto pos = scale_exact(x, static_cast<std::uint64_t>(n));
  std::size_t i = pos.near_point ? pos.nearest : pos.floor;
  return std::min(i, n - 1);
}

/// Value, inside the piece containing `mid`, of that piece's formula at `at`.
inline double piece_formula(const PiecewiseDensity& d, double mid, double at) {
  if (d.pieces() == 0 || mid < d.breakpoints.front() || mid > d.breakpoints.back()) return 0.0;
  auto it = std::upper_bound(d.breakpoints.begin(), d.breakpoints.end(), mid);
  std::size_t i = static_cast<std::size_t>(it - d.breakpoints.begin());
  i = std::clamp<std::size_t>(i, 1, d.breakpoints.size() - 1) - 1;
  if (d.kind == DensityKind::kadic) return d.values[i];
  const double x0 = d.breakpoints[i], x1 = d.breakpoints[i + 1];
  const double t = (at - x0) / (x1 - x0);
  return d.values[i] + t * (d.values[i + 1] - d.values[i]);
}

/// Cut points of both functions inside (lo, hi), plus lo and hi.
inline std::vector<double> merged_cuts(const PiecewiseDensity& a, const PiecewiseDensity* b,
                                       double lo, double hi) {
  std::vector<double> cuts{lo, hi};
  auto add = [&](const PiecewiseDensity& d) {
    auto first = std::upper_bound(d.breakpoints.begin(), d.breakpoints.end(), lo);
    auto last = std::lower_bound(d.breakpoints.begin(), d.breakpoints.end(), hi);
    cuts.insert(cuts.end(), first, last);
  };
  add(a);
  if (b) add(*b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

}  // namespace detail

/// Pointwise value. Piecewise-constant axial densities are undefined at the
/// k-adic points of their level; strict mode refuses them.
inline double evaluate(const PiecewiseDensity& d, double x, KadicMode mode = KadicMode::strict) {
  if (d.pieces() == 0) return 0.0;
  if (d.kind == DensityKind::linear) {
    return PiecewiseLinear{d.breakpoints, d.values}(x);
  }
  if (x < d.breakpoints.front() || x > d.breakpoints.back()) return 0.0;
  if (mode == KadicMode::strict && d.level > 0 && is_kadic_point(x, d.params.k(), d.level)) {
    throw KadicPointError("x = " + format_double(x) + " is a k-adic point of level <= " +
                          std::to_string(d.level));
  }
  return d.values[detail::kadic_piece(d, x)];
}

/// One-sided limit at x; defined everywhere, including k-adic points.
inline double evaluate_one_sided(const PiecewiseDensity& d, double x, Side side) {
  const double width = d.pieces() ? (d.breakpoints.back() - d.breakpoints.front()) : 1.0;
  const double probe = std::max(std::fabs(x), width) * 1e-13;
  const double mid = side == Side::left ? x - probe : x + probe;
  if (d.kind == DensityKind::linear) return evaluate(d, x);
  return detail::piece_formula(d, mid, x);
}

/// Total integral.
inline double mass(const PiecewiseDensity& d) {
  if (d.pieces() == 0) return 0.0;
  if (d.kind == DensityKind::linear) return PiecewiseLinear{d.breakpoints, d.values}.integral();
  long double acc = 0;
  for (std::size_t i = 0; i < d.pieces(); ++i) {
    acc += static_cast<long double>(d.values[i]) * (d.breakpoints[i + 1] - d.breakpoints[i]);
  }
  return static_cast<double>(acc);
}

/// Integral of the density over (-inf, x].
inline double cumulative(const PiecewiseDensity& d, double x) {
  long double acc = 0;
  for (std::size_t i = 0; i < d.pieces(); ++i) {
    const double a = d.breakpoints[i], b = d.breakpoints[i + 1];
    if (x <= a) break;
    const double e = std::min(x, b);
    if (d.kind == DensityKind::kadic) {
      acc += static_cast<long double>(d.values[i]) * (e - a);
    } else {
      const double slope = (d.values[i + 1] - d.values[i]) / (b - a);
      const double ve = d.values[i] + slope * (e - a);
      acc += 0.5L * (static_cast<long double>(d.values[i]) + ve) * (e - a);
    }
  }
  return static_cast<double>(acc);
}

/// sup - inf of the density over [lo, hi] (open pieces for k-adic densities).
inline double variation(const PiecewiseDensity& d, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("variation: empty interval");
  if (lo == hi) return 0.0;
  const auto cuts = detail::merged_cuts(d, nullptr, lo, hi);
  double mx = -INFINITY, mn = INFINITY;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const double a = cuts[i - 1], b = cuts[i], mid = 0.5 * (a + b);
    for (double at : {a, b}) {
      const double v = detail::piece_formula(d, mid, at);
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
  }
  return mx - mn;
}

/// sup |d1 - d2| over [lo, hi], attained at one-sided limits of merged pieces.
inline double sup_distance(const PiecewiseDensity& d1, const PiecewiseDensity& d2, double lo,
                           double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("sup_distance: empty interval");
  if (lo == hi) {
    return std::fabs(evaluate(d1, lo, KadicMode::left_closed) -
                     evaluate(d2, lo, KadicMode::left_closed));
  }
  const auto cuts = detail::merged_cuts(d1, &d2, lo, hi);
  double best = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const double a = cuts[i - 1], b = cuts[i], mid = 0.5 * (a + b);
    for (double at : {a, b}) {
      best = std::max(best, std::fabs(detail::piece_formula(d1, mid, at) -
                                      detail::piece_formula(d2, mid, at)));
    }
  }
  return best;
}

}  // namespace fracperc
