#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fracperc/addressing.hpp"
#include "fracperc/params.hpp"
#include "fracperc/random.hpp"
#include "fracperc/stats.hpp"
#include "fracperc/text.hpp"

namespace fracperc {

/// Which seed drives the survival draws of each level. A fresh realization
/// uses one seed everywhere; resampling below level m appends a segment.
class SeedSchedule {
 public:
  struct Segment {
    int first_level;
    std::uint64_t seed;
    friend bool operator==(const Segment&, const Segment&) = default;
  };

  explicit SeedSchedule(std::uint64_t master_seed) : segments_{{1, master_seed}} {}

  explicit SeedSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
    if (segments_.empty() || segments_.front().first_level != 1) {
      throw std::invalid_argument("seed schedule must start at level 1");
    }
    for (std::size_t i = 1; i < segments_.size(); ++i) {
      if (segments_[i].first_level <= segments_[i - 1].first_level) {
        throw std::invalid_argument("seed schedule levels must increase");
      }
    }
  }

  std::uint64_t master_seed() const noexcept { return segments_.front().seed; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  std::uint64_t seed_for(int level) const noexcept {
    std::uint64_t s = segments_.front().seed;
    for (const auto& seg : segments_) {
      if (seg.first_level > level) break;
      s = seg.seed;
    }
    return s;
  }

  /// Same draws through `level`, fresh independent draws below it.
  SeedSchedule split_below(int level, std::uint64_t sub_seed) const {
    std::vector<Segment> out;
    for (const auto& seg : segments_) {
      if (seg.first_level <= level) out.push_back(seg);
    }
    const std::uint64_t fresh =
        derive_seed(hash_combine(seed_for(level + 1), static_cast<std::uint64_t>(level)),
                    "resample", sub_seed);
    out.push_back({level + 1, fresh});
    return SeedSchedule(std::move(out));
  }

  friend bool operator==(const SeedSchedule&, const SeedSchedule&) = default;

 private:
  std::vector<Segment> segments_;
};

/// A realization of the construction as a lazy object: survival of any cell
/// can be queried without materializing the tree.
class Realization {
 public:
  Realization(PercolationParams params, std::uint64_t master_seed)
      : Realization(params, SeedSchedule(master_seed)) {}
  Realization(PercolationParams params, SeedSchedule schedule)
      : params_(params), schedule_(std::move(schedule)) {
    for (int level = 0; level < kCachedLevels; ++level) {
      prefix_[static_cast<std::size_t>(level)] =
          RandomStreamKey::level_prefix(schedule_.seed_for(level), level);
    }
  }

  const PercolationParams& params() const noexcept { return params_; }
  const SeedSchedule& schedule() const noexcept { return schedule_; }

  /// The Bernoulli(p) draw for a cell at `level`, given that its parent survives.
  bool draw(int level, CellCoord c) const noexcept {
    const std::uint64_t prefix =
        level >= 0 && level < kCachedLevels
            ? prefix_[static_cast<std::size_t>(level)]
            : RandomStreamKey::level_prefix(schedule_.seed_for(level), level);
    return to_unit(RandomStreamKey::finish(prefix, c.ix, c.iy)) < params_.p();
  }

  Realization resampled_below(int level, std::uint64_t sub_seed) const {
    return {params_, schedule_.split_below(level, sub_seed)};
  }

 private:
  static constexpr int kCachedLevels = 64;

  PercolationParams params_;
  SeedSchedule schedule_;
  std::array<std::uint64_t, kCachedLevels> prefix_{};
};

/// Depth-n quadtree of surviving cells. Level m is stored in breadth-first
/// order (parent order, then child index a*k + b), with per-parent offsets
/// into the next level giving each cell's set of surviving children.
class PercolationTree {
 public:
  PercolationTree(PercolationParams params, SeedSchedule schedule)
      : params_(params), schedule_(std::move(schedule)), levels_{{CellCoord{}}} {}

  const PercolationParams& params() const noexcept { return params_; }
  const SeedSchedule& schedule() const noexcept { return schedule_; }
  std::uint64_t master_seed() const noexcept { return schedule_.master_seed(); }
  Realization realization() const { return {params_, schedule_}; }
  int max_depth() const noexcept { return static_cast<int>(levels_.size()) - 1; }

  std::span<const CellCoord> cells(int m) const {
    check_level(m);
    return levels_[static_cast<std::size_t>(m)];
  }

  std::size_t count(int m) const { return cells(m).size(); }

  bool extinct() const noexcept { return levels_.back().empty(); }

  /// Surviving children (at level m + 1) of the cell with index `parent` at level m.
  std::span<const CellCoord> children(int m, std::size_t parent) const {
    if (m < 0 || m >= max_depth()) throw std::out_of_range("children: level out of range");
    const auto& off = offsets_[static_cast<std::size_t>(m)];
    const auto& next = levels_[static_cast<std::size_t>(m) + 1];
    return std::span<const CellCoord>(next).subspan(off.at(parent), off.at(parent + 1) - off[parent]);
  }

  /// Draw levels max_depth()+1 .. depth from the tree's own realization.
  void extend_to(int depth) {
    const Realization r = realization();
    const auto k = static_cast<std::uint64_t>(params_.k());
    while (max_depth() < depth) {
      const int m = max_depth();
      checked_pow(params_.k(), m + 1);
      const auto& parents = levels_.back();
      std::vector<CellCoord> next;
      std::vector<std::size_t> off;
      off.reserve(parents.size() + 1);
      next.reserve(static_cast<std::size_t>(static_cast<double>(parents.size()) *
                                            params_.mean_offspring() * 1.1) + 4);
      for (const auto& c : parents) {
        off.push_back(next.size());
        for (std::uint64_t a = 0; a < k; ++a) {
          for (std::uint64_t b = 0; b < k; ++b) {
            const CellCoord child{c.ix * k + a, c.iy * k + b};
            if (r.draw(m + 1, child)) next.push_back(child);
          }
        }
      }
      off.push_back(next.size());
      offsets_.push_back(std::move(off));
      levels_.push_back(std::move(next));
    }
  }

  /// Keep levels 0..depth only.
  void truncate(int depth) {
    if (depth < 0 || depth > max_depth()) throw std::out_of_range("truncate: bad depth");
    levels_.resize(static_cast<std::size_t>(depth) + 1);
    offsets_.resize(static_cast<std::size_t>(depth));
  }

  void set_schedule(SeedSchedule s) { schedule_ = std::move(s); }

  /// Build from explicit per-level cell lists (levels[0] must be the root).
  /// Cells are reordered canonically; orphans and duplicates are rejected.
  static PercolationTree from_levels(PercolationParams params, SeedSchedule schedule,
                                     std::vector<std::vector<CellCoord>> levels);

  friend bool operator==(const PercolationTree& a, const PercolationTree& b) {
    return a.params_ == b.params_ && a.schedule_ == b.schedule_ && a.levels_ == b.levels_;
  }

 private:
  void check_level(int m) const {
    if (m < 0 || m > max_depth()) {
      throw std::out_of_range("level " + std::to_string(m) + " outside [0, " +
                              std::to_string(max_depth()) + "]");
    }
  }

  PercolationParams params_;
  SeedSchedule schedule_;
  std::vector<std::vector<CellCoord>> levels_;
  std::vector<std::vector<std::size_t>> offsets_;
};

inline PercolationTree PercolationTree::from_levels(PercolationParams params,
                                                    SeedSchedule schedule,
                                                    std::vector<std::vector<CellCoord>> levels) {
  if (levels.empty() || levels[0].size() != 1 || !(levels[0][0] == CellCoord{})) {
    throw std::invalid_argument("level 0 must contain exactly the root");
  }
  const int k = params.k();
  const auto uk = static_cast<std::uint64_t>(k);
  PercolationTree t(params, std::move(schedule));
  for (std::size_t m = 1; m < levels.size(); ++m) {
    const std::uint64_t side = checked_pow(k, static_cast<int>(m));
    const auto& parents = t.levels_.back();
    std::vector<std::pair<CellCoord, std::size_t>> parent_index;
    parent_index.reserve(parents.size());
    for (std::size_t i = 0; i < parents.size(); ++i) parent_index.emplace_back(parents[i], i);
    std::sort(parent_index.begin(), parent_index.end());

    struct Keyed {
      std::size_t parent;
      std::uint64_t child;
      CellCoord c;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(levels[m].size());
    for (const auto& c : levels[m]) {
      const auto address = [&] {
        return format_address(CellAddress::from_coord(c, k, static_cast<int>(m)));
      };
      if (c.ix >= side || c.iy >= side) {
        throw InvalidAddress("cell outside the level-" + std::to_string(m) + " lattice");
      }
      const CellCoord parent{c.ix / uk, c.iy / uk};
      auto it = std::lower_bound(parent_index.begin(), parent_index.end(),
                                 std::pair<CellCoord, std::size_t>{parent, 0});
      if (it == parent_index.end() || !(it->first == parent)) {
        throw std::invalid_argument("orphan cell " + address() + " at depth " +
                                    std::to_string(m) + ": parent not present");
      }
      keyed.push_back({it->second, (c.ix % uk) * uk + (c.iy % uk), c});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
      return a.parent != b.parent ? a.parent < b.parent : a.child < b.child;
    });
    std::vector<CellCoord> next;
    std::vector<std::size_t> off(parents.size() + 1, 0);
    next.reserve(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      if (i > 0 && keyed[i].parent == keyed[i - 1].parent && keyed[i].child == keyed[i - 1].child) {
        throw std::invalid_argument(
            "duplicate cell " +
            format_address(CellAddress::from_coord(keyed[i].c, k, static_cast<int>(m))));
      }
      next.push_back(keyed[i].c);
      ++off[keyed[i].parent + 1];
    }
    for (std::size_t i = 1; i < off.size(); ++i) off[i] += off[i - 1];
    t.offsets_.push_back(std::move(off));
    t.levels_.push_back(std::move(next));
  }
  return t;
}

inline PercolationTree generate(const PercolationParams& params, std::uint64_t master_seed,
                                int depth) {
  if (depth < 0) throw std::invalid_argument("generate: depth must be >= 0");
  PercolationTree t(params, SeedSchedule(master_seed));
  t.extend_to(depth);
  return t;
}

/// Extend the same realization to a larger depth; existing levels are kept.
inline PercolationTree refine(PercolationTree tree, int new_depth) {
  if (new_depth < tree.max_depth()) {
    throw std::invalid_argument("refine: new depth " + std::to_string(new_depth) +
                                " is below the current depth " + std::to_string(tree.max_depth()));
  }
  tree.extend_to(new_depth);
  return tree;
}

inline std::size_t count_cells(const PercolationTree& tree, int m) { return tree.count(m); }

/// (k^2 p)^-m * #E_m, the normalized count whose limit is Z(E).
inline double z_estimate(const PercolationTree& tree, int m) {
  return static_cast<double>(tree.count(m)) * std::pow(tree.params().mean_offspring(), -m);
}

/// A tree identical through level m whose levels below m are redrawn
/// independently, conditionally on E_m.
inline PercolationTree resample_children(const PercolationTree& tree, int m,
                                         std::uint64_t sub_seed) {
  if (m < 0 || m >= tree.max_depth()) {
    throw std::invalid_argument("resample_children: need 0 <= m < max_depth");
  }
  PercolationTree out = tree;
  out.truncate(m);
  out.set_schedule(tree.schedule().split_below(m, sub_seed));
  out.extend_to(tree.max_depth());
  return out;
}

/// log(k^2 p) / log k.
inline double dim_theory(const PercolationParams& params) {
  if (!params.supercritical_branching()) {
    throw RegimeError("dim_theory requires k^2 p > 1");
  }
  const double k = params.k();
  return std::log(k * k * params.p()) / std::log(k);
}

class NoEstimate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Slope of log #E_m against m log k over m in [depth/2, depth].
inline double dim_estimate_from_counts(std::span<const std::size_t> counts, int k) {
  const int depth = static_cast<int>(counts.size()) - 1;
  if (depth < 1) throw NoEstimate("dimension estimate needs depth >= 1");
  if (counts.back() == 0) throw NoEstimate("realization is extinct; no dimension estimate");
  std::vector<double> xs, ys;
  for (int m = depth / 2; m <= depth; ++m) {
    xs.push_back(m * std::log(static_cast<double>(k)));
    ys.push_back(std::log(static_cast<double>(counts[static_cast<std::size_t>(m)])));
  }
  return fit_line(xs, ys).slope;
}

inline std::vector<std::size_t> level_counts(const PercolationTree& tree) {
  std::vector<std::size_t> c;
  for (int m = 0; m <= tree.max_depth(); ++m) c.push_back(tree.count(m));
  return c;
}

inline double dim_estimate(const PercolationTree& tree) {
  const auto counts = level_counts(tree);
  return dim_estimate_from_counts(counts, tree.params().k());
}

/// #E_m for m = 0..depth by depth-first traversal, without storing the tree.
inline std::vector<std::size_t> level_counts(const Realization& r, int depth) {
  checked_pow(r.params().k(), depth);
  std::vector<std::size_t> counts(static_cast<std::size_t>(depth) + 1, 0);
  counts[0] = 1;
  if (depth == 0) return counts;
  const auto k = static_cast<std::uint64_t>(r.params().k());
  struct Item {
    int level;
    CellCoord c;
  };
  std::vector<Item> stack{{0, {}}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const int child_level = it.level + 1;
    for (std::uint64_t a = 0; a < k; ++a) {
      for (std::uint64_t b = 0; b < k; ++b) {
        const CellCoord child{it.c.ix * k + a, it.c.iy * k + b};
        if (!r.draw(child_level, child)) continue;
        ++counts[static_cast<std::size_t>(child_level)];
        if (child_level < depth) stack.push_back({child_level, child});
      }
    }
  }
  return counts;
}

/// Whether E_depth is nonempty; stops at the first surviving deep cell.
inline bool survives_to(const Realization& r, int depth) {
  if (depth <= 0) return true;
  const auto k = static_cast<std::uint64_t>(r.params().k());
  struct Item {
    int level;
    CellCoord c;
  };
  std::vector<Item> stack{{0, {}}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    for (std::uint64_t a = 0; a < k; ++a) {
      for (std::uint64_t b = 0; b < k; ++b) {
        const CellCoord child{it.c.ix * k + a, it.c.iy * k + b};
        if (!r.draw(it.level + 1, child)) continue;
        if (it.level + 1 == depth) return true;
        stack.push_back({it.level + 1, child});
      }
    }
  }
  return false;
}

/// Extinction probability of the Binomial(k^2, p) Galton-Watson process:
/// smallest fixed point of q = (1 - p + p q)^(k^2), by iteration from 0.
inline double extinction_probability(const PercolationParams& params) {
  const double kk = static_cast<double>(params.k()) * params.k();
  const double p = params.p();
  double q = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double next = std::pow(1.0 - p + p * q, kk);
    if (std::fabs(next - q) < 1e-16) return next;
    q = next;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   fracperc-tree 1
//   k <k>
//   p <p, shortest round-trip decimal>
//   seed <master seed>
//   max_depth <n>
//   schedule <level>:<seed> ...      (only for resampled trees)
//   cells
//   <depth> <i digits> <j digits>    (one line per surviving cell, depth >= 1)

struct TreeRecord {
  int depth = 0;
  std::string i_digits;
  std::string j_digits;
  std::size_t line = 0;
};

struct TreeFile {
  int k = 2;
  double p = 0.5;
  std::uint64_t seed = 0;
  int max_depth = 0;
  std::vector<SeedSchedule::Segment> schedule;
  std::vector<TreeRecord> records;
};

class TreeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_tree(std::ostream& os, const PercolationTree& tree) {
  const auto& prm = tree.params();
  os << "fracperc-tree 1\n";
  os << "k " << prm.k() << "\n";
  os << "p " << format_double(prm.p()) << "\n";
  os << "seed " << tree.master_seed() << "\n";
  os << "max_depth " << tree.max_depth() << "\n";
  if (tree.schedule().segments().size() > 1) {
    os << "schedule";
    for (const auto& s : tree.schedule().segments()) os << ' ' << s.first_level << ':' << s.seed;
    os << "\n";
  }
  os << "cells\n";
  for (int m = 1; m <= tree.max_depth(); ++m) {
    for (const auto& c : tree.cells(m)) {
      const auto a = CellAddress::from_coord(c, prm.k(), m);
      os << m << ' ' << format_digits(a.i_digits) << ' ' << format_digits(a.j_digits) << '\n';
    }
  }
}

inline TreeFile read_tree_file(std::istream& is) {
  TreeFile f;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw TreeFormatError("line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line) || (++lineno, line != "fracperc-tree 1")) {
    fail("missing 'fracperc-tree 1' header");
  }
  bool have_k = false, have_p = false, have_seed = false, have_depth = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line == "cells") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "k") {
      have_k = static_cast<bool>(ls >> f.k);
    } else if (key == "p") {
      std::string v;
      ls >> v;
      auto res = std::from_chars(v.data(), v.data() + v.size(), f.p);
      have_p = res.ec == std::errc{} && res.ptr == v.data() + v.size();
    } else if (key == "seed") {
      have_seed = static_cast<bool>(ls >> f.seed);
    } else if (key == "max_depth") {
      have_depth = static_cast<bool>(ls >> f.max_depth);
    } else if (key == "schedule") {
      std::string item;
      while (ls >> item) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail("bad schedule entry '" + item + "'");
        f.schedule.push_back({std::stoi(item.substr(0, colon)),
                              std::stoull(item.substr(colon + 1))});
      }
    } else {
      fail("unknown header key '" + key + "'");
    }
  }
  if (!have_k || !have_p || !have_seed || !have_depth) fail("incomplete header");
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TreeRecord r;
    r.line = lineno;
    if (!(ls >> r.depth)) fail("expected '<depth> <i digits> <j digits>'");
    ls >> r.i_digits >> r.j_digits;
    if (r.depth < 1) fail("record depth must be >= 1");
    f.records.push_back(std::move(r));
  }
  return f;
}

/// Structural problems of a parsed tree file, one message per offending record.
inline std::vector<std::string> validate_tree_file(const TreeFile& f) {
  std::vector<std::string> issues;
  if (f.k < 2 || !(f.p > 0 && f.p < 1)) {
    issues.push_back("invalid parameters");
    return issues;
  }
  std::vector<std::vector<CellCoord>> levels(static_cast<std::size_t>(std::max(f.max_depth, 0)) + 1);
  levels[0].push_back({});
  for (const auto& r : f.records) {
    const std::string where = "line " + std::to_string(r.line) + ": ";
    if (r.depth > f.max_depth) {
      issues.push_back(where + "depth " + std::to_string(r.depth) + " exceeds max_depth");
      continue;
    }
    try {
      CellAddress a{r.depth, parse_digits(r.i_digits, f.k), parse_digits(r.j_digits, f.k)};
      levels[static_cast<std::size_t>(r.depth)].push_back(a.coord(f.k));
    } catch (const std::exception& e) {
      issues.push_back(where + e.what());
    }
  }
  const auto uk = static_cast<std::uint64_t>(f.k);
  for (std::size_t m = 1; m < levels.size(); ++m) {
    auto parents = levels[m - 1];
    std::sort(parents.begin(), parents.end());
    auto cells = levels[m];
    std::sort(cells.begin(), cells.end());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto addr = format_address(CellAddress::from_coord(cells[i], f.k, static_cast<int>(m)));
      if (i > 0 && cells[i] == cells[i - 1]) issues.push_back("duplicate cell " + addr);
      const CellCoord parent{cells[i].ix / uk, cells[i].iy / uk};
      if (!std::binary_search(parents.begin(), parents.end(), parent)) {
        issues.push_back("orphan cell " + addr + " at depth " + std::to_string(m));
      }
    }
  }
  return issues;
}

inline PercolationTree tree_from_file(const TreeFile& f) {
  const auto issues = validate_tree_file(f);
  if (!issues.empty()) throw TreeFormatError("invalid tree: " + issues.front());
  PercolationParams params(f.k, f.p);
  SeedSchedule schedule = f.schedule.empty() ? SeedSchedule(f.seed) : SeedSchedule(f.schedule);
  if (schedule.master_seed() != f.seed) throw TreeFormatError("schedule does not start with seed");
  std::vector<std::vector<CellCoord>> levels(static_cast<std::size_t>(f.max_depth) + 1);
  levels[0].push_back({});
  for (const auto& r : f.records) {
    CellAddress a{r.depth, parse_digits(r.i_digits, f.k), parse_digits(r.j_digits, f.k)};
    levels[static_cast<std::size_t>(r.depth)].push_back(a.coord(f.k));
  }
  return PercolationTree::from_levels(params, std::move(schedule), std::move(levels));
}

inline PercolationTree read_tree(std::istream& is) { return tree_from_file(read_tree_file(is)); }

}  // namespace fracperc
