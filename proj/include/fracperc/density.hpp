#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fracperc/addressing.hpp"
#include "fracperc/direction.hpp"
#include "fracperc/geometry.hpp"
#include "fracperc/percolation.hpp"
#include "fracperc/piecewise.hpp"

namespace fracperc {

/// y_n(x) = p^-n |fiber(x) ∩ E_n| for an oblique direction, as one merged
/// piecewise-linear function.
///
/// Every cell contributes a trapezoid whose slope changes by ±1/|sin cos| at
/// its four projected corners, so the sum is assembled from integer slope
/// counts at corner projections and integrated once. Corner projections are
/// computed per lattice point, so corners shared by neighbouring cells agree
/// bit for bit; distinct points closer than 1e-12 of the range are merged.
inline PiecewiseDensity density(const PercolationTree& tree, int n, const Direction& dir) {
  if (dir.is_axial()) {
    throw std::invalid_argument("density: axial directions are handled by density_axial");
  }
  const auto cells = tree.cells(n);
  PiecewiseDensity d;
  d.kind = DensityKind::linear;
  d.level = n;
  d.direction = dir;
  d.params = tree.params();
  d.seed = tree.master_seed();
  if (cells.empty()) return d;

  const double lattice = static_cast<double>(checked_pow(tree.params().k(), n));
  const double c = dir.cos(), s = dir.sin();
  const auto corner = [&](std::uint64_t a, std::uint64_t b) {
    return (static_cast<double>(a) * c + static_cast<double>(b) * s) / lattice;
  };
  struct Event {
    double pos;
    int delta;
  };
  std::vector<Event> events;
  events.reserve(cells.size() * 4);
  for (const auto& cell : cells) {
    std::array<double, 4> p{corner(cell.ix, cell.iy), corner(cell.ix + 1, cell.iy),
                            corner(cell.ix, cell.iy + 1), corner(cell.ix + 1, cell.iy + 1)};
    std::sort(p.begin(), p.end());
    events.push_back({p[0], +1});
    events.push_back({p[1], -1});
    events.push_back({p[2], -1});
    events.push_back({p[3], +1});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.pos < b.pos; });

  const double tol = 1e-12 * range(dir).length();
  std::vector<double> pos;
  std::vector<long> net;
  for (std::size_t i = 0; i < events.size();) {
    const double start = events[i].pos;
    long sum = 0;
    while (i < events.size() && events[i].pos - start <= tol) sum += events[i++].delta;
    if (sum != 0 || pos.empty()) {
      pos.push_back(start);
      net.push_back(sum);
    }
  }
  const long double slope_unit = 1.0L / (std::fabs(static_cast<long double>(c)) *
                                         std::fabs(static_cast<long double>(s)));
  const long double scale = std::pow(static_cast<long double>(tree.params().p()), -n);
  d.breakpoints.reserve(pos.size());
  d.values.reserve(pos.size());
  long double value = 0;
  long count = 0;
  const double last = events.back().pos;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (i > 0) value += slope_unit * static_cast<long double>(count) * (pos[i] - pos[i - 1]);
    count += net[i];
    d.breakpoints.push_back(pos[i]);
    d.values.push_back(static_cast<double>(std::max(0.0L, value * scale)));
  }
  if (d.breakpoints.back() < last) {
    d.breakpoints.push_back(last);
    d.values.push_back(0.0);
  }
  d.values.back() = 0.0;
  return d;
}

/// Axial density: constant on the open level-n k-adic intervals. For the
/// vertical direction the value on the interval with digits j is
/// p^-n k^-n #{i : (i, j) in E_n}; horizontal swaps the roles of i and j.
inline PiecewiseDensity density_axial(const PercolationTree& tree, int n, Axis axis) {
  const std::uint64_t lattice = checked_pow(tree.params().k(), n);
  if (lattice > (std::uint64_t{1} << 26)) {
    throw std::invalid_argument("density_axial: k^n too large for a dense k-adic table");
  }
  PiecewiseDensity d;
  d.kind = DensityKind::kadic;
  d.level = n;
  d.direction = Direction::axial(axis);
  d.params = tree.params();
  d.seed = tree.master_seed();
  std::vector<std::size_t> counts(lattice, 0);
  for (const auto& c : tree.cells(n)) ++counts[axis == Axis::vertical ? c.iy : c.ix];
  const double unit = std::pow(tree.params().p(), -n) / static_cast<double>(lattice);
  d.breakpoints.resize(lattice + 1);
  d.values.resize(lattice);
  for (std::uint64_t j = 0; j <= lattice; ++j) {
    d.breakpoints[j] = static_cast<double>(j) / static_cast<double>(lattice);
  }
  for (std::uint64_t j = 0; j < lattice; ++j) d.values[j] = unit * static_cast<double>(counts[j]);
  return d;
}

/// Dispatches on the direction's mode.
inline PiecewiseDensity projected_density(const PercolationTree& tree, int n,
                                          const Direction& dir) {
  return dir.is_axial() ? density_axial(tree, n, dir.axis()) : density(tree, n, dir);
}

/// Expected mass of mu_n: p^-n k^-2n #E_n.
inline double expected_mass(const PercolationTree& tree, int n) {
  const double side = 1.0 / static_cast<double>(checked_pow(tree.params().k(), n));
  return std::pow(tree.params().p(), -n) * side * side * static_cast<double>(tree.count(n));
}

namespace detail {

inline void require_fiber_defined(const PercolationParams& params, const Direction& dir, double x,
                                  int depth) {
  if (dir.is_axial() && depth > 0 && is_kadic_point(x, params.k(), depth)) {
    throw KadicPointError("axial fiber at a k-adic point of level <= " + std::to_string(depth));
  }
}

inline std::vector<long double> lattice_sides(int k, int depth) {
  std::vector<long double> side(static_cast<std::size_t>(depth) + 1);
  for (int m = 0; m <= depth; ++m) {
    side[static_cast<std::size_t>(m)] = static_cast<long double>(checked_pow(k, m));
  }
  return side;
}

inline std::vector<double> scale_lengths(const std::vector<long double>& lengths, double p) {
  std::vector<double> y(lengths.size());
  for (std::size_t m = 0; m < lengths.size(); ++m) {
    y[m] = static_cast<double>(lengths[m] * std::pow(static_cast<long double>(p),
                                                      -static_cast<long double>(m)));
  }
  return y;
}

}  // namespace detail

/// y_0(x), ..., y_depth(x) along a single fiber of a materialized tree, by
/// descending only into cells the fiber meets.
inline std::vector<double> fiber_profile(const PercolationTree& tree, const Direction& dir,
                                         double x, int depth) {
  if (depth > tree.max_depth()) throw std::out_of_range("fiber_profile: depth beyond tree");
  detail::require_fiber_defined(tree.params(), dir, x, depth);
  const auto side = detail::lattice_sides(tree.params().k(), depth);
  std::vector<long double> lengths(static_cast<std::size_t>(depth) + 1, 0.0L);
  struct Item {
    int level;
    std::size_t index;
  };
  const double root = chord_length(Square{}, dir, x);
  if (root <= 0.0) return std::vector<double>(lengths.size(), 0.0);
  lengths[0] = root;
  std::vector<Item> stack{{0, 0}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (it.level == depth) continue;
    const int m = it.level + 1;
    const auto kids = tree.children(it.level, it.index);
    const auto all = tree.cells(m);
    const std::size_t base = static_cast<std::size_t>(kids.data() - all.data());
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const double len = chord_length(
          lattice_square(kids[i], static_cast<std::uint64_t>(side[static_cast<std::size_t>(m)])),
          dir, x);
      if (len <= 0.0) continue;
      lengths[static_cast<std::size_t>(m)] += len;
      stack.push_back({m, base + i});
    }
  }
  return detail::scale_lengths(lengths, tree.params().p());
}

/// Same as above on a lazy realization: only cells met by the fiber are drawn.
inline std::vector<double> fiber_profile(const Realization& r, const Direction& dir, double x,
                                         int depth) {
  detail::require_fiber_defined(r.params(), dir, x, depth);
  const int k = r.params().k();
  const auto uk = static_cast<std::uint64_t>(k);
  const auto side = detail::lattice_sides(k, depth);
  std::vector<long double> lengths(static_cast<std::size_t>(depth) + 1, 0.0L);
  const double root = chord_length(Square{}, dir, x);
  if (root <= 0.0) return std::vector<double>(lengths.size(), 0.0);
  lengths[0] = root;
  struct Item {
    int level;
    CellCoord c;
  };
  std::vector<Item> stack{{0, {}}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (it.level == depth) continue;
    const int m = it.level + 1;
    const auto lat = static_cast<std::uint64_t>(side[static_cast<std::size_t>(m)]);
    for (std::uint64_t a = 0; a < uk; ++a) {
      for (std::uint64_t b = 0; b < uk; ++b) {
        const CellCoord child{it.c.ix * uk + a, it.c.iy * uk + b};
        const double len = chord_length(lattice_square(child, lat), dir, x);
        if (len <= 0.0 || !r.draw(m, child)) continue;
        lengths[static_cast<std::size_t>(m)] += len;
        stack.push_back({m, child});
      }
    }
  }
  return detail::scale_lengths(lengths, r.params().p());
}

/// Surviving level-n cells met by the fiber, and y_n(x).
struct FiberCells {
  std::vector<CellCoord> cells;
  double value = 0.0;
};

inline FiberCells fiber_cells(const Realization& r, const Direction& dir, double x, int n) {
  detail::require_fiber_defined(r.params(), dir, x, n);
  const auto uk = static_cast<std::uint64_t>(r.params().k());
  std::vector<CellCoord> frontier;
  if (chord_length(Square{}, dir, x) > 0.0) frontier.push_back({});
  for (int m = 1; m <= n; ++m) {
    const std::uint64_t lat = checked_pow(r.params().k(), m);
    std::vector<CellCoord> next;
    for (const auto& c : frontier) {
      for (std::uint64_t a = 0; a < uk; ++a) {
        for (std::uint64_t b = 0; b < uk; ++b) {
          const CellCoord child{c.ix * uk + a, c.iy * uk + b};
          if (chord_length(lattice_square(child, lat), dir, x) > 0.0 && r.draw(m, child)) {
            next.push_back(child);
          }
        }
      }
    }
    frontier = std::move(next);
  }
  FiberCells out;
  const std::uint64_t lat = checked_pow(r.params().k(), n);
  long double len = 0;
  for (const auto& c : frontier) len += chord_length(lattice_square(c, lat), dir, x);
  out.value = static_cast<double>(len * std::pow(static_cast<long double>(r.params().p()), -n));
  out.cells = std::move(frontier);
  return out;
}

/// y_{n+1}(x) given the level-n cells met by the fiber, with the children
/// drawn from `r` (typically a realization resampled below level n).
inline double next_level_value(const Realization& r, std::span<const CellCoord> parents, int n,
                               const Direction& dir, double x) {
  const auto uk = static_cast<std::uint64_t>(r.params().k());
  const std::uint64_t lat = checked_pow(r.params().k(), n + 1);
  long double len = 0;
  for (const auto& c : parents) {
    for (std::uint64_t a = 0; a < uk; ++a) {
      for (std::uint64_t b = 0; b < uk; ++b) {
        const CellCoord child{c.ix * uk + a, c.iy * uk + b};
        const double l = chord_length(lattice_square(child, lat), dir, x);
        if (l > 0.0 && r.draw(n + 1, child)) len += l;
      }
    }
  }
  return static_cast<double>(len * std::pow(static_cast<long double>(r.params().p()), -(n + 1)));
}

/// p^-n * sum of chord lengths over every cell of E_n, without pruning or
/// merging; the reference against which merged densities are checked.
inline double direct_density_value(const PercolationTree& tree, int n, const Direction& dir,
                                   double x) {
  detail::require_fiber_defined(tree.params(), dir, x, n);
  const std::uint64_t lat = checked_pow(tree.params().k(), n);
  long double acc = 0;
  for (const auto& c : tree.cells(n)) acc += chord_length(lattice_square(c, lat), dir, x);
  return static_cast<double>(acc * std::pow(static_cast<long double>(tree.params().p()), -n));
}

struct IncrementSample {
  double x = 0.0;
  Direction direction = Direction::axial(Axis::vertical);
  int level = 0;
  double value = 0.0;  // |y_{n+1}(x) - y_n(x)|
};

/// |y_{n+1}(x) - y_n(x)| on one realization (the tree must reach level n + 1).
inline IncrementSample increment(const PercolationTree& tree, int n, const Direction& dir,
                                 double x) {
  if (n < 0 || n + 1 > tree.max_depth()) {
    throw std::out_of_range("increment: tree must contain levels n and n + 1");
  }
  const auto y = fiber_profile(tree, dir, x, n + 1);
  return {x, dir, n, std::fabs(y[static_cast<std::size_t>(n) + 1] - y[static_cast<std::size_t>(n)])};
}

enum class HolderMetric { euclidean, rho };

struct PointPair {
  double x = 0.0;
  double y = 0.0;
};

/// max |f(x) - f(y)| / d(x, y)^alpha over the given pairs; pairs at distance
/// zero are skipped.
inline double holder_modulus_from_values(std::span<const double> fx, std::span<const double> fy,
                                         std::span<const double> dist, double alpha) {
  if (fx.size() != fy.size() || fx.size() != dist.size()) {
    throw std::invalid_argument("holder_modulus: size mismatch");
  }
  double best = 0.0;
  for (std::size_t i = 0; i < fx.size(); ++i) {
    if (!(dist[i] > 0.0)) continue;
    best = std::max(best, std::fabs(fx[i] - fy[i]) / std::pow(dist[i], alpha));
  }
  return best;
}

inline double pair_distance(const PercolationParams& params, HolderMetric metric, PointPair pr) {
  return metric == HolderMetric::euclidean ? std::fabs(pr.x - pr.y)
                                           : rho_metric(params, pr.x, pr.y);
}

template <typename F>
double holder_modulus(F&& f, const PercolationParams& params, HolderMetric metric, double alpha,
                      std::span<const PointPair> pairs) {
  if (!(alpha > 0.0)) throw std::invalid_argument("holder_modulus: alpha must be positive");
  std::vector<double> fx, fy, dist;
  for (const auto& pr : pairs) {
    const double d = pair_distance(params, metric, pr);
    if (!(d > 0.0)) continue;
    fx.push_back(f(pr.x));
    fy.push_back(f(pr.y));
    dist.push_back(d);
  }
  return holder_modulus_from_values(fx, fy, dist, alpha);
}

/// Hölder modulus of a computed density. The rho metric applies to axial
/// densities only, whose values are taken in strict mode.
inline double holder_modulus(const PiecewiseDensity& d, HolderMetric metric, double alpha,
                             std::span<const PointPair> pairs) {
  if (metric == HolderMetric::rho && d.kind != DensityKind::kadic) {
    throw std::invalid_argument("the rho metric applies to axial densities only");
  }
  return holder_modulus([&](double x) { return evaluate(d, x); }, d.params, metric, alpha, pairs);
}

}  // namespace fracperc
