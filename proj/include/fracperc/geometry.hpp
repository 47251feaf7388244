#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fracperc/addressing.hpp"
#include "fracperc/direction.hpp"
#include "fracperc/piecewise.hpp"

namespace fracperc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Projected span [lo, hi] of the unit square.
struct ProjectionRange {
  double lo = 0.0;
  double hi = 1.0;

  double length() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
};

/// Length of the common parameter interval used after normalization:
/// the diagonal of the unit square.
inline constexpr double kDeltaLength = std::numbers::sqrt2;

/// x cos(theta) + y sin(theta).
inline double project(const Direction& dir, Point pt) {
  return pt.x * dir.cos() + pt.y * dir.sin();
}

inline ProjectionRange range(const Direction& dir) {
  const double c = dir.cos(), s = dir.sin();
  return {std::min(0.0, c) + std::min(0.0, s), std::max(0.0, c) + std::max(0.0, s)};
}

namespace detail {

/// Sorted projections of the four corners of an axis-aligned rectangle.
inline std::array<double, 4> projected_corners(const Square& sq, const Direction& dir) {
  std::array<double, 4> c{project(dir, {sq.x0, sq.y0}), project(dir, {sq.x1, sq.y0}),
                          project(dir, {sq.x0, sq.y1}), project(dir, {sq.x1, sq.y1})};
  std::sort(c.begin(), c.end());
  return c;
}

}  // namespace detail

/// Euclidean length of the fiber {p : project(dir, p) = x} inside the closed
/// square. For oblique directions the graph in x is a trapezoid: linear rise
/// of slope 1/|sin cos| from the lowest projected corner, a plateau, and a
/// symmetric fall.
inline double chord_length(const Square& sq, const Direction& dir, double x) {
  const double w = sq.x1 - sq.x0, h = sq.y1 - sq.y0;
  if (dir.is_axial()) {
    if (dir.axis() == Axis::vertical) return (x >= sq.y0 && x <= sq.y1) ? w : 0.0;
    return (x >= sq.x0 && x <= sq.x1) ? h : 0.0;
  }
  const double ac = std::fabs(dir.cos()), as = std::fabs(dir.sin());
  const auto c = detail::projected_corners(sq, dir);
  if (x <= c[0] || x >= c[3]) return 0.0;
  const double plateau = std::min(w / as, h / ac);
  const double slope = 1.0 / (ac * as);
  return std::max(0.0, std::min({plateau, slope * (x - c[0]), slope * (c[3] - x)}));
}

/// x -> chord_length(sq, dir, x) as breakpoints and values. The two middle
/// corners merge into an apex when they coincide to relative 1e-12.
inline PiecewiseLinear cell_trapezoid(const Square& sq, const Direction& dir) {
  if (dir.is_axial()) {
    throw std::invalid_argument("cell_trapezoid is defined for oblique directions only");
  }
  const double w = sq.x1 - sq.x0, h = sq.y1 - sq.y0;
  const double plateau = std::min(w / std::fabs(dir.sin()), h / std::fabs(dir.cos()));
  const auto c = detail::projected_corners(sq, dir);
  if (c[2] - c[1] <= 1e-12 * (c[3] - c[0])) {
    return {{c[0], 0.5 * (c[1] + c[2]), c[3]}, {0.0, plateau, 0.0}};
  }
  return {{c[0], c[1], c[2], c[3]}, {0.0, plateau, plateau, 0.0}};
}

namespace detail {

inline void require_normalizable(const PiecewiseDensity& d) {
  if (d.direction.is_axial() || !(d.direction.theta() < std::numbers::pi / 2)) {
    throw std::invalid_argument("normalization needs an oblique direction in (0, pi/2)");
  }
  if (d.kind != DensityKind::linear) {
    throw std::invalid_argument("normalization applies to piecewise-linear densities");
  }
}

}  // namespace detail

/// Push the density forward along its fibers onto the common interval
/// [0, sqrt 2] (the diagonal of the unit square, which every fiber of an
/// angle in (0, pi/2) crosses once). The map is affine, so mass is preserved.
inline PiecewiseDensity normalize_to_delta(const PiecewiseDensity& d) {
  detail::require_normalizable(d);
  if (d.frame != DensityFrame::raw) throw std::invalid_argument("density is already normalized");
  const ProjectionRange r = range(d.direction);
  const double scale = kDeltaLength / r.length();
  PiecewiseDensity out = d;
  out.frame = DensityFrame::delta;
  for (auto& b : out.breakpoints) b = (b - r.lo) * scale;
  for (auto& v : out.values) v /= scale;
  return out;
}

inline PiecewiseDensity denormalize_from_delta(const PiecewiseDensity& d) {
  detail::require_normalizable(d);
  if (d.frame != DensityFrame::delta) throw std::invalid_argument("density is not normalized");
  const ProjectionRange r = range(d.direction);
  const double scale = kDeltaLength / r.length();
  PiecewiseDensity out = d;
  out.frame = DensityFrame::raw;
  for (auto& b : out.breakpoints) b = b / scale + r.lo;
  for (auto& v : out.values) v *= scale;
  return out;
}

/// Raw projection coordinate of a point t of the normalized interval.
inline double delta_to_raw(const Direction& dir, double t) {
  const ProjectionRange r = range(dir);
  return r.lo + t * r.length() / kDeltaLength;
}

}  // namespace fracperc
