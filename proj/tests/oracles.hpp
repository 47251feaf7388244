#pragma once

// Reference computations used only by the tests. None of them go through
// the library's trapezoid, merging or traversal code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace oracle {

struct Box {
  double x0, x1, y0, y1;
};

/// Liang-Barsky: clip the infinite line {x (cos, sin) + t (-sin, cos)} to the
/// box and return the length of the surviving parameter range.
inline double clipped_chord(const Box& b, double theta, double x) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double px = x * c, py = x * s;
  const double dx = -s, dy = c;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {px - b.x0, b.x1 - px, py - b.y0, b.y1 - py};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return 0.0;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
  }
  return t1 > t0 ? t1 - t0 : 0.0;
}

/// Stratified Monte Carlo: one jittered sample per stratum along the line,
/// counting the fraction that lands inside the box.
template <typename Rng>
double sampled_chord(const Box& b, double theta, double x, int samples, Rng& rng) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double px = x * c, py = x * s;
  // the box lies within distance `reach` of the foot point along the line
  const double cx = 0.5 * (b.x0 + b.x1), cy = 0.5 * (b.y0 + b.y1);
  const double half_diag = 0.5 * std::hypot(b.x1 - b.x0, b.y1 - b.y0);
  const double tc = -s * (cx - px) + c * (cy - py);
  const double lo = tc - half_diag, hi = tc + half_diag;
  const double width = (hi - lo) / samples;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long inside = 0;
  for (int i = 0; i < samples; ++i) {
    const double t = lo + (i + u(rng)) * width;
    const double qx = px - s * t, qy = py + c * t;
    if (qx >= b.x0 && qx <= b.x1 && qy >= b.y0 && qy <= b.y1) ++inside;
  }
  return static_cast<double>(inside) * width;
}

/// Smallest root of q = (1 - p + p q)^m by fixed-point iteration from 0.
inline double gw_extinction(int m, double p, int depth = 1 << 20) {
  double q = 0.0;
  for (int i = 0; i < depth; ++i) {
    const double next = std::pow(1.0 - p + p * q, m);
    if (next == q) break;
    q = next;
  }
  return q;
}

/// Extinction probability by generation `depth`: the depth-fold iterate.
inline double gw_extinction_by(int m, double p, int depth) {
  double q = 0.0;
  for (int i = 0; i < depth; ++i) q = std::pow(1.0 - p + p * q, m);
  return q;
}

}  // namespace oracle
