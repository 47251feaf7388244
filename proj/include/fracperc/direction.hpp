#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fracperc/text.hpp"

namespace fracperc {

enum class Axis { horizontal, vertical };

/// Projection direction. The two axial directions are a separate mode rather
/// than float values of theta: their fibers run along cell edges and their
/// densities are piecewise constant on k-adic intervals.
class Direction {
 public:
  static Direction oblique(double theta) {
    if (!(theta > 0.0 && theta < std::numbers::pi)) {
      throw std::invalid_argument("oblique angle must lie in (0, pi), got " + format_double(theta));
    }
    if (theta == std::numbers::pi / 2) {
      throw std::invalid_argument("theta = pi/2 is axial; request the 'vertical' mode instead");
    }
    return Direction(false, Axis::horizontal, theta, std::cos(theta), std::sin(theta));
  }

  static Direction axial(Axis axis) {
    return axis == Axis::horizontal ? Direction(true, axis, 0.0, 1.0, 0.0)
                                    : Direction(true, axis, std::numbers::pi / 2, 0.0, 1.0);
  }

  bool is_axial() const noexcept { return axial_; }
  Axis axis() const {
    if (!axial_) throw std::logic_error("oblique direction has no axis");
    return axis_;
  }
  double theta() const noexcept { return theta_; }
  double cos() const noexcept { return cos_; }
  double sin() const noexcept { return sin_; }

  /// Distance to the nearest axial direction, min(theta, |pi/2 - theta|, pi - theta).
  double axial_margin() const noexcept {
    if (axial_) return 0.0;
    const double h = std::numbers::pi / 2;
    return std::min({theta_, std::fabs(h - theta_), std::numbers::pi - theta_});
  }

  std::string token() const {
    if (axial_) return axis_ == Axis::horizontal ? "horizontal" : "vertical";
    return format_double(theta_);
  }

  friend bool operator==(const Direction& a, const Direction& b) noexcept {
    return a.axial_ == b.axial_ && (a.axial_ ? a.axis_ == b.axis_ : a.theta_ == b.theta_);
  }

 private:
  Direction(bool axial, Axis axis, double theta, double c, double s)
      : axial_(axial), axis_(axis), theta_(theta), cos_(c), sin_(s) {}

  bool axial_;
  Axis axis_;
  double theta_;
  double cos_;
  double sin_;
};

namespace detail {

inline double parse_number(std::string_view s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Accepts "horizontal", "vertical", radians ("1.0"), or multiples of pi
/// ("pi/4", "3pi/8", "3*pi/8", "pi").
inline Direction parse_direction(std::string_view token) {
  if (token == "horizontal") return Direction::axial(Axis::horizontal);
  if (token == "vertical") return Direction::axial(Axis::vertical);
  const auto pi_pos = token.find("pi");
  if (pi_pos == std::string_view::npos) return Direction::oblique(detail::parse_number(token));
  std::string_view coef = token.substr(0, pi_pos);
  if (!coef.empty() && coef.back() == '*') coef.remove_suffix(1);
  const double numerator = coef.empty() ? 1.0 : detail::parse_number(coef);
  std::string_view rest = token.substr(pi_pos + 2);
  double denominator = 1.0;
  if (!rest.empty()) {
    if (rest.front() != '/') throw std::invalid_argument("bad angle '" + std::string(token) + "'");
    denominator = detail::parse_number(rest.substr(1));
  }
  return Direction::oblique(numerator * std::numbers::pi / denominator);
}

}  // namespace fracperc
