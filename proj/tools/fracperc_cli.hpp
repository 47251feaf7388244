#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fracperc/bounds.hpp"
#include "fracperc/density.hpp"
#include "fracperc/experiments.hpp"
#include "fracperc/geometry.hpp"
#include "fracperc/percolation.hpp"
#include "fracperc/piecewise.hpp"
#include "fracperc/text.hpp"

namespace fracperc::cli {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TreeSource {
  std::string tree_path;
  int k = 3;
  double p = 0.7;
  int depth = 4;
  std::uint64_t seed = 1;
  double cell_budget = 5e7;
};

inline void add_generate_flags(CLI::App* sub, TreeSource& s) {
  sub->add_option("--k", s.k, "subdivision factor (>= 2)")->capture_default_str();
  sub->add_option("--p", s.p, "survival probability in (0, 1)")->capture_default_str();
  sub->add_option("--depth", s.depth, "number of levels")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", s.seed, "master seed")->capture_default_str();
  sub->add_option("--cell-budget", s.cell_budget, "refuse depths whose expected cell count (k^2 p)^depth exceeds this")
      ->capture_default_str();
}

inline void warn_regime(const PercolationParams& prm, std::ostream& err) {
  if (!prm.supercritical_branching()) {
    err << "warning: k^2 p = " << format_double(prm.mean_offspring())
        << " <= 1, the set is empty almost surely\n";
  } else if (!prm.projection_regime()) {
    err << "warning: kp = " << format_double(prm.pk())
        << " <= 1, projections are not expected to carry continuous densities\n";
  }
}

inline PercolationParams make_params(int k, double p) {
  try {
    return PercolationParams(k, p);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

inline void check_budget(const PercolationParams& prm, int depth, double budget) {
  const double estimate = std::pow(prm.mean_offspring(), depth);
  if (estimate > budget) {
    throw UsageError("infeasible depth " + std::to_string(depth) + ": about " +
                     format_double(std::round(estimate)) + " cells expected, budget " +
                     format_double(budget));
  }
}

inline PercolationTree load_or_generate(const TreeSource& s, std::ostream& err) {
  if (!s.tree_path.empty()) {
    std::ifstream in(s.tree_path);
    if (!in) throw UsageError("cannot open tree file '" + s.tree_path + "'");
    return read_tree(in);
  }
  const auto prm = make_params(s.k, s.p);
  warn_regime(prm, err);
  check_budget(prm, s.depth, s.cell_budget);
  return generate(prm, s.seed, s.depth);
}

/// Writes to the named file, or to `fallback` for "-" / empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw UsageError("cannot write '" + path + "'");
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }
  bool is_file() const { return file_.is_open(); }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

// ---------------------------------------------------------------------------

inline int cmd_generate(const TreeSource& src, const std::string& out_path, std::ostream& out,
                        std::ostream& err) {
  const auto tree = load_or_generate(src, err);
  Sink sink(out_path, out);
  write_tree(sink.stream(), tree);
  std::ostream& summary = sink.is_file() ? out : err;
  summary << "# level cells z_estimate\n";
  for (int m = 0; m <= tree.max_depth(); ++m) {
    summary << m << ' ' << tree.count(m) << ' ' << format_double(z_estimate(tree, m)) << '\n';
  }
  return kOk;
}

struct DensityFlags {
  int level = -1;
  std::string theta;
  std::optional<double> x;
  std::string mode = "strict";
  std::string frame = "raw";
  int samples = 0;
  std::string format = "json";
  std::string out = "-";
};

inline int cmd_density(const TreeSource& src, const DensityFlags& f, std::ostream& out,
                       std::ostream& err) {
  const Direction dir = [&] {
    try {
      return parse_direction(f.theta);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--theta: ") + e.what());
    }
  }();
  const auto tree = load_or_generate(src, err);
  const int n = f.level < 0 ? tree.max_depth() : f.level;
  if (n > tree.max_depth()) {
    throw UsageError("--level " + std::to_string(n) + " exceeds the tree depth " +
                     std::to_string(tree.max_depth()));
  }
  const KadicMode mode = f.mode == "strict" ? KadicMode::strict : KadicMode::left_closed;
  PiecewiseDensity d = projected_density(tree, n, dir);
  if (f.frame == "delta") d = normalize_to_delta(d);

  json j{{"kind", d.kind == DensityKind::linear ? "linear" : "kadic"},
         {"frame", f.frame},
         {"level", n},
         {"theta", dir.token()},
         {"params", {{"k", tree.params().k()}, {"p", tree.params().p()}}},
         {"seed", tree.master_seed()},
         {"cells", tree.count(n)},
         {"mass", mass(d)},
         {"expected_mass", expected_mass(tree, n)}};
  if (f.x) {
    j["x"] = *f.x;
    j["value"] = evaluate(d, *f.x, mode);
  }
  std::vector<std::pair<double, double>> rows;
  if (f.samples > 0) {
    const double lo = d.pieces() ? d.breakpoints.front() : 0.0;
    const double hi = d.pieces() ? d.breakpoints.back() : 1.0;
    for (int i = 0; i < f.samples; ++i) {
      const double x = lo + (hi - lo) * (i + 0.5) / f.samples;
      rows.emplace_back(x, evaluate(d, x, KadicMode::left_closed));
    }
  } else if (d.kind == DensityKind::linear) {
    for (std::size_t i = 0; i < d.breakpoints.size(); ++i) rows.emplace_back(d.breakpoints[i], d.values[i]);
  } else {
    for (std::size_t i = 0; i < d.pieces(); ++i) {
      rows.emplace_back(0.5 * (d.breakpoints[i] + d.breakpoints[i + 1]), d.values[i]);
    }
  }

  Sink sink(f.out, out);
  auto& os = sink.stream();
  if (f.format == "csv") {
    os << "# " << j.dump() << '\n' << "x,value\n";
    for (const auto& [x, v] : rows) os << format_double(x) << ',' << format_double(v) << '\n';
  } else {
    j["breakpoints"] = d.breakpoints;
    j["values"] = d.values;
    if (f.samples > 0) j["samples"] = rows;
    os << j.dump(2) << '\n';
  }
  return kOk;
}

struct ConstantsFlags {
  int k = 3;
  double p = 0.7;
  double delta = 0.1;
  int level = 6;
  int big_n = 20;
  double epsilon = 1e-12;
};

/// Everything the bounds module evaluates for (k, p, delta). Values that need
/// kp > 1 are null outside that regime.
inline json constants_json(const ConstantsFlags& f) {
  const auto prm = make_params(f.k, f.p);
  if (!(f.delta > 0.0)) throw UsageError("--delta must be positive");
  json j{{"k", f.k},
         {"p", f.p},
         {"delta", f.delta},
         {"level", f.level},
         {"N", f.big_n},
         {"pk", prm.pk()},
         {"k2p", prm.mean_offspring()},
         {"gamma", bounds::gamma_const(f.p)},
         {"extinction_probability", extinction_probability(prm)},
         {"unspecified_constants", {{"C1", 1}, {"C2", 1}, {"C3", 1}, {"C4", 1}, {"C5", 1}, {"C6", 1}}}};
  j["dim_theory"] = prm.supercritical_branching() ? json(dim_theory(prm)) : json(nullptr);
  const auto mesh = bounds::grid_mesh(prm, f.level, f.delta);
  j["mesh"] = {{"mesh", mesh.mesh}, {"cardinality", mesh.cardinality}};
  const auto rel = bounds::depth_relation(prm, f.big_n, f.delta);
  j["depth_relation"] = {{"n", rel.n ? json(*rel.n) : json(nullptr)},
                         {"L_prime", rel.l_prime},
                         {"L_double_prime", rel.l_double_prime}};
  if (!prm.projection_regime()) {
    for (const char* key : {"N0", "L", "increment_thresholds", "increment_tail_sum", "window_probability",
                            "interval_failure", "interval_failure_series", "uniform_probability"}) {
      j[key] = nullptr;
    }
    j["regime"] = "kp <= 1";
    return j;
  }
  j["regime"] = "kp > 1";
  const int n0 = bounds::n0_const(prm);
  j["N0"] = n0;
  j["L"] = bounds::l_const(prm);
  const auto t = bounds::increment_thresholds(prm, f.level, 1.0);
  j["increment_thresholds"] = {{"i_threshold_at_y1", t.i_threshold},
                  {"ii_threshold", t.ii_threshold},
                  {"failure_exponent", t.failure_exponent}};
  const auto tail = bounds::increment_tail_sum(prm, f.big_n, f.epsilon);
  j["increment_tail_sum"] = {{"value", tail.value}, {"terms", tail.terms}, {"ratio_index", tail.ratio_index}};
  const auto c42 = bounds::window_probability(prm, f.big_n);
  j["window_probability"] = {{"value", c42.value}, {"vacuous", c42.vacuous}};
  j["interval_failure"] = bounds::interval_failure(prm, f.big_n);
  const auto series = bounds::interval_failure_series(prm, f.epsilon);
  j["interval_failure_series"] = {{"value", series.value}, {"first", series.first}, {"last", series.last}};
  const auto uni = bounds::uniform_probability(prm, f.level, f.delta);
  j["uniform_probability"] = {{"value", uni.value}, {"vacuous", uni.vacuous}};
  return j;
}

inline int cmd_constants(const ConstantsFlags& f, std::ostream& out, std::ostream& err) {
  warn_regime(make_params(f.k, f.p), err);
  out << constants_json(f).dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct CheckLog {
  std::ostream& out;
  bool ok = true;

  void report(bool passed, const std::string& name, const std::string& detail = "") {
    out << (passed ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) out << ": " << detail;
    out << '\n';
    ok = ok && passed;
  }
};

inline void structural_checks(const PercolationTree& tree, CheckLog& log) {
  bool counts_ok = true;
  std::string detail;
  for (int m = 0; m < tree.max_depth(); ++m) {
    std::size_t kids = 0;
    for (std::size_t i = 0; i < tree.count(m); ++i) kids += tree.children(m, i).size();
    if (kids != tree.count(m + 1)) {
      counts_ok = false;
      detail = "level " + std::to_string(m + 1) + " has cells outside the children lists";
    }
    const std::size_t cap = tree.count(m) * static_cast<std::size_t>(tree.params().k()) *
                            static_cast<std::size_t>(tree.params().k());
    if (tree.count(m + 1) > cap) {
      counts_ok = false;
      detail = "level " + std::to_string(m + 1) + " exceeds k^2 times its parent count";
    }
  }
  log.report(counts_ok, "children", detail);
  if (tree.schedule().segments().size() == 1) {
    const bool same = generate(tree.params(), tree.master_seed(), tree.max_depth()) == tree;
    log.report(same, "regenerates from seed",
               same ? "" : "cells differ from the realization of seed " + std::to_string(tree.master_seed()));
  }
}

/// Deepest level with at most `cap` cells, so oracle checks stay fast.
inline int oracle_level(const PercolationTree& tree, std::size_t cap) {
  int n = 0;
  for (int m = 0; m <= tree.max_depth(); ++m) {
    if (tree.count(m) <= cap) n = m;
  }
  return n;
}

inline void oracle_checks(const PercolationTree& tree, int samples, std::uint64_t seed,
                          CheckLog& log) {
  SplitMix64 rng(seed);
  const int top = oracle_level(tree, 200000);
  double worst_mass = 0, worst_point = 0, worst_axial = 0;
  for (int i = 0; i < samples; ++i) {
    const int n = static_cast<int>(rng() % static_cast<std::uint64_t>(top + 1));
    const Direction dir = Direction::oblique(rng.uniform(1e-3, std::numbers::pi - 1e-3));
    if (dir.theta() == std::numbers::pi / 2) continue;
    const auto d = density(tree, n, dir);
    const double em = expected_mass(tree, n);
    worst_mass = std::max(worst_mass, std::fabs(mass(d) - em) / std::max(1.0, em));
    const ProjectionRange r = range(dir);
    const double x = rng.uniform(r.lo, r.hi);
    const double direct = direct_density_value(tree, n, dir, x);
    worst_point = std::max(worst_point, std::fabs(evaluate(d, x) - direct) / std::max(1.0, direct));
    const Axis axis = rng() % 2 ? Axis::vertical : Axis::horizontal;
    double u = rng.uniform();
    while (n > 0 && experiments::detail::near_kadic(u, tree.params().k(), n, 1e-9)) u = rng.uniform();
    const auto ad = density_axial(tree, n, axis);
    const double fiber = fiber_profile(tree, Direction::axial(axis), u, n)[static_cast<std::size_t>(n)];
    worst_axial = std::max(worst_axial, std::fabs(evaluate(ad, u) - fiber) / std::max(1.0, fiber));
  }
  const auto detail = [&](double v) {
    return "max relative error " + format_double(v) + " over " + std::to_string(samples) + " samples";
  };
  log.report(worst_mass <= 1e-9, "mass equals p^-n k^-2n #E_n", detail(worst_mass));
  log.report(worst_point <= 1e-9, "merged density matches direct chord sum", detail(worst_point));
  log.report(worst_axial <= 1e-9, "axial table matches fiber traversal", detail(worst_axial));
}

inline int cmd_verify(const TreeSource& src, int samples, std::uint64_t check_seed,
                      std::ostream& out, std::ostream& err) {
  CheckLog log{out};
  PercolationTree tree(PercolationParams(2, 0.5), SeedSchedule(0));
  if (!src.tree_path.empty()) {
    std::ifstream in(src.tree_path);
    if (!in) throw UsageError("cannot open tree file '" + src.tree_path + "'");
    const TreeFile file = read_tree_file(in);
    const auto issues = validate_tree_file(file);
    for (const auto& issue : issues) log.report(false, "structure", issue);
    if (!issues.empty()) return kFailure;
    log.report(true, "structure", std::to_string(file.records.size()) + " records");
    tree = tree_from_file(file);
  } else {
    tree = load_or_generate(src, err);
    log.report(true, "structure", "generated in process");
  }
  structural_checks(tree, log);
  if (samples > 0) oracle_checks(tree, samples, check_seed, log);
  return log.ok ? kOk : kFailure;
}

// ---------------------------------------------------------------------------
// experiment

inline int cmd_experiment(const std::string& config_path, bool dry_run, int workers,
                          const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto cfg = experiments::load_config(config_path);
  const auto feas = experiments::feasibility(cfg);
  if (dry_run) {
    out << feas.dump(2) << '\n';
    return feas.at("feasible").get<bool>() ? kOk : kUsage;
  }
  const auto result = experiments::run_suite(cfg, workers);
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  if (!dir.empty()) {
    experiments::write_outputs(result, dir);
    err << "wrote " << (std::filesystem::path(dir) / "report.json").string() << '\n';
  } else {
    out << experiments::report_text(result);
  }
  for (const auto& name : cfg.sections) {
    const bool ok = result.report.at("sections").at(name).at("passed").get<bool>();
    err << name << ": " << (ok ? "PASS" : "FAIL") << '\n';
  }
  return result.passed ? kOk : kFailure;
}

// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fractal percolation: realizations, projected densities, constants, experiments",
               "fracperc"};
  app.require_subcommand(1);

  TreeSource gen_src;
  std::string gen_out = "-";
  auto* gen = app.add_subcommand("generate", "generate a realization and write its tree file");
  add_generate_flags(gen, gen_src);
  gen->add_option("--out,-o", gen_out, "tree file ('-' for stdout)")->capture_default_str();

  TreeSource den_src;
  DensityFlags den;
  auto* dens = app.add_subcommand("density", "projected density of a tree at one level");
  add_generate_flags(dens, den_src);
  dens->add_option("--tree", den_src.tree_path, "read the tree from this file instead of generating");
  dens->add_option("--level", den.level, "level n (default: the tree depth)");
  dens->add_option("--theta", den.theta, "angle in radians, a multiple of pi ('pi/4'), or horizontal/vertical")
      ->required();
  dens->add_option("--x", den.x, "evaluate the density at this point");
  dens->add_option("--mode", den.mode, "k-adic point handling for --x")
      ->check(CLI::IsMember({"strict", "left_closed"}))
      ->capture_default_str();
  dens->add_option("--frame", den.frame, "raw projection coordinate or the common diagonal frame")
      ->check(CLI::IsMember({"raw", "delta"}))
      ->capture_default_str();
  dens->add_option("--samples", den.samples, "evaluate at this many evenly spaced points")
      ->check(CLI::NonNegativeNumber);
  dens->add_option("--format", den.format, "output format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  dens->add_option("--out,-o", den.out, "output file ('-' for stdout)")->capture_default_str();

  ConstantsFlags con;
  auto* cons = app.add_subcommand("constants", "closed-form constants and bounds as JSON");
  cons->add_option("--k", con.k)->capture_default_str();
  cons->add_option("--p", con.p)->capture_default_str();
  cons->add_option("--delta", con.delta, "angular margin")->capture_default_str();
  cons->add_option("--level", con.level, "level n for the mesh, thresholds and uniform bound")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cons->add_option("--N", con.big_n, "depth N for tail sums and the depth relation")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cons->add_option("--epsilon", con.epsilon, "relative truncation of series")->capture_default_str();

  TreeSource ver_src;
  int ver_samples = 100;
  std::uint64_t ver_seed = 1;
  auto* ver = app.add_subcommand("verify", "structural and oracle checks on a tree");
  add_generate_flags(ver, ver_src);
  ver->add_option("--tree", ver_src.tree_path, "check this tree file instead of generating");
  ver->add_option("--samples", ver_samples, "oracle samples (0: structural checks only)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ver->add_option("--check-seed", ver_seed, "seed for the oracle samples")->capture_default_str();

  std::string config_path, exp_out;
  bool dry_run = false;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* exp = app.add_subcommand("experiment", "run the experiment suite of a config file");
  exp->add_option("--config,-c", config_path, "JSON config")->required();
  exp->add_flag("--dry-run", dry_run, "print the feasibility estimate and exit");
  exp->add_option("--workers,-j", workers, "worker threads")->check(CLI::PositiveNumber);
  exp->add_option("--out,-o", exp_out, "output directory (overrides the config)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_src, gen_out, out, err);
    if (*dens) return cmd_density(den_src, den, out, err);
    if (*cons) return cmd_constants(con, out, err);
    if (*ver) return cmd_verify(ver_src, ver_samples, ver_seed, out, err);
    if (*exp) return cmd_experiment(config_path, dry_run, workers, exp_out, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace fracperc::cli
