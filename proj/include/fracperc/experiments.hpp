#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "fracperc/bounds.hpp"
#include "fracperc/density.hpp"
#include "fracperc/direction.hpp"
#include "fracperc/geometry.hpp"
#include "fracperc/percolation.hpp"
#include "fracperc/random.hpp"
#include "fracperc/stats.hpp"
#include "fracperc/text.hpp"

// Monte Carlo harness. Every section is a pure function of (config, seed):
// work items are independent, seeded by hashing (master seed, tag, index),
// and reduced in index order, so reports do not depend on the worker count.

namespace fracperc::experiments {

using json = nlohmann::json;

/// Malformed or missing configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration that is well formed but exceeds a budget or a regime
/// assumption.
class InfeasibleConfig : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// f(0), ..., f(n-1) on up to `workers` threads, returned in index order.
template <typename F>
auto parallel_map(std::size_t n, int workers, F&& f)
    -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < 2) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline const std::vector<std::string>& section_names() {
  static const std::vector<std::string> names{"martingale",  "concentration", "convergence",
                                              "holder",      "dimension",     "uniformity"};
  return names;
}

struct ExperimentConfig {
  PercolationParams params{3, 0.7};
  std::uint64_t seed = 0;
  int realizations = 1;
  double cell_budget = 2e8;
  std::string output_dir;
  std::vector<std::string> sections;
  json raw = json::object();

  /// Section object, or an empty object when the config has none.
  const json& section(const std::string& name) const {
    static const json empty = json::object();
    const auto it = raw.find(name);
    return it == raw.end() ? empty : *it;
  }

  static ExperimentConfig from_json(const json& j);
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline PercolationParams params_from(const json& j) {
  if (!j.is_object() || !j.contains("k") || !j.contains("p")) {
    throw ConfigError("params must be an object with k and p");
  }
  try {
    return PercolationParams(j.at("k").get<int>(), j.at("p").get<double>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

inline Direction direction_from(const json& j) {
  try {
    if (j.is_number()) return Direction::oblique(j.get<double>());
    if (j.is_string()) return parse_direction(j.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("direction: ") + e.what());
  }
  throw ConfigError("direction must be a number or a string");
}

inline std::vector<Direction> directions_from(const json& s, const char* key,
                                              const std::vector<std::string>& fallback) {
  std::vector<Direction> out;
  const auto it = s.find(key);
  if (it == s.end()) {
    for (const auto& t : fallback) out.push_back(parse_direction(t));
    return out;
  }
  if (!it->is_array()) throw ConfigError(std::string("config key '") + key + "' must be a list");
  for (const auto& d : *it) out.push_back(direction_from(d));
  return out;
}

inline std::vector<int> int_list(const json& s, const char* key, std::vector<int> fallback) {
  return get_or<std::vector<int>>(s, key, std::move(fallback));
}

inline const json& gates_of(const json& s) {
  static const json empty = json::object();
  const auto it = s.find("gates");
  return it == s.end() ? empty : *it;
}

/// Fixed directions taken in turn, or angles drawn uniformly from
/// [delta, pi/2 - delta] when the list is empty.
struct DirectionSpec {
  std::vector<Direction> fixed;
  double delta = 0.1;

  Direction pick(std::size_t i, SplitMix64& rng) const {
    if (!fixed.empty()) return fixed[i % fixed.size()];
    return Direction::oblique(rng.uniform(delta, std::numbers::pi / 2 - delta));
  }

  json describe() const {
    if (fixed.empty()) return {{"sampled", {delta, std::numbers::pi / 2 - delta}}};
    json list = json::array();
    for (const auto& d : fixed) list.push_back(d.token());
    return list;
  }
};

inline DirectionSpec direction_spec(const json& s, const std::vector<std::string>& fallback) {
  DirectionSpec spec;
  spec.delta = get_or(s, "delta", 0.1);
  if (!(spec.delta > 0.0 && spec.delta < std::numbers::pi / 4)) {
    throw ConfigError("delta must lie in (0, pi/4)");
  }
  if (s.contains("directions") && s.at("directions").is_string() &&
      s.at("directions").get<std::string>() == "sampled") {
    return spec;
  }
  spec.fixed = directions_from(s, "directions", fallback);
  return spec;
}

/// True when x lies within eps of a k-adic point of level <= depth.
inline bool near_kadic(double x, int k, int depth, double eps) {
  const double scale = static_cast<double>(checked_pow(k, depth));
  const double v = x * scale;
  return std::fabs(v - std::round(v)) < eps * scale;
}

/// Uniform point of the projection range; axial directions avoid
/// 1e-9-neighbourhoods of k-adic points of level <= depth.
inline double sample_x(SplitMix64& rng, const Direction& dir, int k, int depth) {
  const ProjectionRange r = range(dir);
  for (;;) {
    const double x = rng.uniform(r.lo, r.hi);
    if (!dir.is_axial() || !near_kadic(x, k, depth, 1e-9)) return x;
  }
}

inline json gate(double statistic, const std::string& op, double threshold) {
  bool ok = false;
  if (op == "<") ok = statistic < threshold;
  else if (op == "<=") ok = statistic <= threshold;
  else if (op == ">") ok = statistic > threshold;
  else if (op == ">=") ok = statistic >= threshold;
  else throw std::logic_error("unknown gate operator " + op);
  return {{"statistic", statistic}, {"op", op}, {"threshold", threshold}, {"passed", ok}};
}

inline bool all_gates_pass(const json& gates) {
  for (const auto& [name, g] : gates.items()) {
    if (!g.at("passed").get<bool>()) return false;
  }
  return true;
}

inline std::string fmt(double v) { return format_double(v); }

struct RealizationDraw {
  std::vector<std::size_t> surviving;
  std::size_t drawn = 0;
};

/// Indices of the realizations (tag "realization") surviving to `depth`.
inline RealizationDraw surviving_realizations(const PercolationParams& params, std::uint64_t seed,
                                              int count, int depth, bool condition,
                                              int workers) {
  RealizationDraw out;
  out.drawn = static_cast<std::size_t>(count);
  const auto alive = parallel_map(out.drawn, workers, [&](std::size_t i) {
    return !condition || survives_to(Realization(params, derive_seed(seed, "realization", i)), depth);
  });
  for (std::size_t i = 0; i < alive.size(); ++i) {
    if (alive[i]) out.surviving.push_back(i);
  }
  return out;
}

inline json survival_summary(const PercolationParams& params, const RealizationDraw& d,
                             bool condition) {
  json s{{"conditioned_on_survival", condition},
         {"drawn", d.drawn},
         {"surviving", d.surviving.size()},
         {"survival_fraction",
          d.drawn ? static_cast<double>(d.surviving.size()) / static_cast<double>(d.drawn) : 0.0},
         {"survival_probability_limit", 1.0 - extinction_probability(params)}};
  return s;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  if (!j.contains("params")) throw ConfigError("config needs params {k, p}");
  c.params = detail::params_from(j.at("params"));
  c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  c.realizations = detail::get_or(j, "realizations", 1);
  if (c.realizations < 1) throw ConfigError("realizations must be >= 1");
  c.cell_budget = detail::get_or(j, "cell_budget", 2e8);
  c.output_dir = detail::get_or<std::string>(j, "output_dir", "");
  c.sections = detail::get_or<std::vector<std::string>>(j, "sections", {});
  for (const auto& s : c.sections) {
    const auto& known = section_names();
    if (std::find(known.begin(), known.end(), s) == known.end()) {
      throw ConfigError("unknown section '" + s + "'");
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

struct SectionResult {
  json report;
  std::string csv;
  bool passed = true;
};

namespace detail {

inline PercolationParams section_params(const ExperimentConfig& cfg, const json& s) {
  return s.contains("params") ? params_from(s.at("params")) : cfg.params;
}

inline int section_realizations(const ExperimentConfig& cfg, const json& s) {
  const int r = get_or(s, "realizations", cfg.realizations);
  if (r < 1) throw ConfigError("realizations must be >= 1");
  return r;
}

inline SectionResult finish(json stats, json gates, std::string csv) {
  SectionResult r;
  r.passed = all_gates_pass(gates);
  r.report = {{"statistics", std::move(stats)}, {"gates", std::move(gates)}, {"passed", r.passed}};
  r.csv = std::move(csv);
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Martingale: E(y_{n+1}(x) | E_n) = y_n(x), by resampling everything below n.

inline SectionResult run_martingale_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("martingale");
  const auto params = section_params(cfg, s);
  const int n = get_or(s, "level", 5);
  const int pairs = get_or(s, "pairs", 100);
  const int resamples = get_or(s, "resamples", 10000);
  const int x_tries = get_or(s, "x_tries", 64);
  const bool condition = get_or(s, "condition_on_survival", false);
  if (resamples < 1000) throw ConfigError("martingale: resamples must be >= 1000");
  if (n < 0 || pairs < 1) throw ConfigError("martingale: need level >= 0 and pairs >= 1");
  const auto dirs = direction_spec(s, {"1.0"});
  const json& g = gates_of(s);
  const double z_max = get_or(g, "z_max", 4.0);
  const double min_pass_rate = get_or(g, "min_pass_rate", 0.95);

  struct Row {
    std::string status = "tested";
    std::string direction;
    double x = 0, y_n = 0, mean = 0, se = 0, z = 0;
    int redraws = 0;
    bool pass = false;
  };
  const auto rows = parallel_map(static_cast<std::size_t>(pairs), workers, [&](std::size_t i) {
    Row row;
    const Realization r(params, derive_seed(cfg.seed, "martingale", i));
    SplitMix64 rng(derive_seed(cfg.seed, "martingale/sample", i));
    const Direction dir = dirs.pick(i, rng);
    row.direction = dir.token();
    if (!survives_to(r, condition ? n + 1 : n)) {
      row.status = "extinct";
      return row;
    }
    FiberCells fc;
    for (int t = 0; t < x_tries; ++t) {
      row.x = sample_x(rng, dir, params.k(), n + 1);
      fc = fiber_cells(r, dir, row.x, n);
      if (!fc.cells.empty()) break;
      ++row.redraws;
    }
    if (fc.cells.empty()) {
      row.status = "fiber_misses_set";
      return row;
    }
    row.y_n = fc.value;
    RunningStats st;
    for (int j = 0; j < resamples; ++j) {
      st.add(next_level_value(r.resampled_below(n, static_cast<std::uint64_t>(j)), fc.cells, n, dir,
                              row.x));
    }
    row.mean = st.mean();
    row.se = st.standard_error();
    if (row.se > 0) {
      row.z = (row.mean - row.y_n) / row.se;
      row.pass = std::fabs(row.z) <= z_max;
    } else {
      row.pass = row.mean == row.y_n;
    }
    return row;
  });

  std::size_t tested = 0, passed = 0, extinct = 0, missed = 0;
  double max_abs_z = 0;
  std::ostringstream csv;
  csv << "index,direction,x,status,y_n,mean,se,z,pass\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << i << ',' << r.direction << ',' << fmt(r.x) << ',' << r.status << ',' << fmt(r.y_n) << ','
        << fmt(r.mean) << ',' << fmt(r.se) << ',' << fmt(r.z) << ',' << (r.pass ? 1 : 0) << '\n';
    if (r.status == "extinct") ++extinct;
    else if (r.status == "fiber_misses_set") ++missed;
    else {
      ++tested;
      if (r.pass) ++passed;
      max_abs_z = std::max(max_abs_z, std::fabs(r.z));
    }
  }
  const double rate = tested ? static_cast<double>(passed) / static_cast<double>(tested) : 0.0;
  json stats{{"level", n},
             {"resamples", resamples},
             {"directions", dirs.describe()},
             {"conditioned_on_survival", condition},
             {"triples", pairs},
             {"tested", tested},
             {"skipped_extinct", extinct},
             {"skipped_fiber_misses_set", missed},
             {"within_z", passed},
             {"pass_rate", rate},
             {"max_abs_z", max_abs_z}};
  json gates{{"pass_rate", gate(rate, ">=", min_pass_rate)},
             {"tested", gate(static_cast<double>(tested), ">=", 1.0)}};
  gates["pass_rate"]["z_max"] = z_max;
  gates["pass_rate"]["n"] = tested;
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Concentration: tail frequencies of the one-step increment.

namespace detail {

struct InversionCheck {
  int inversions = 0;
  double worst_se = 0.0;  // largest increase, in combined standard errors
  bool within_allowance = true;
};

/// Increases of a sequence that should not increase, each measured against
/// the combined standard error of its two neighbours.
inline InversionCheck check_inversions(std::span<const double> freq, std::span<const double> se,
                                       double allowance_se) {
  InversionCheck out;
  for (std::size_t i = 1; i < freq.size(); ++i) {
    const double diff = freq[i] - freq[i - 1];
    if (diff <= 0) continue;
    ++out.inversions;
    const double combined = std::hypot(se[i], se[i - 1]);
    const double in_se = combined > 0 ? diff / combined : std::numeric_limits<double>::infinity();
    out.worst_se = std::max(out.worst_se, in_se);
    if (in_se > allowance_se) out.within_allowance = false;
  }
  return out;
}

}  // namespace detail

inline SectionResult run_concentration_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("concentration");
  const auto params = section_params(cfg, s);
  params.require_projection_regime("concentration test");
  const int first = get_or(s, "first_level", 3);
  const int last = get_or(s, "last_level", 8);
  const int samples = get_or(s, "samples_per_level", 1000);
  const bool condition = get_or(s, "condition_on_survival", false);
  if (first < 0 || last < first || samples < 2) {
    throw ConfigError("concentration: need 0 <= first_level <= last_level and samples >= 2");
  }
  const auto dirs = direction_spec(s, {});
  const json& g = gates_of(s);
  const int max_inversions = get_or(g, "max_inversions", 1);
  const double inversion_se = get_or(g, "inversion_se", 2.0);
  const double final_max = get_or(g, "final_max_frequency", 0.05);

  struct Sample {
    bool used = false;
    bool exceed_ii = false;
    bool precondition_ii = false;
    bool precondition_i = false;
    bool exceed_i = false;
    double increment = 0;
  };
  struct Level {
    int n = 0;
    std::size_t used = 0, exceed_ii = 0, pre_ii = 0, exceed_ii_pre = 0, pre_i = 0, exceed_i = 0;
    std::size_t batch_used[2] = {0, 0}, batch_exceed[2] = {0, 0};
    double freq = 0, se = 0, exponent = 0, max_increment = 0;
    RunningStats increment;
  };
  std::vector<Level> levels;
  for (int n = first; n <= last; ++n) {
    const auto t = bounds::increment_thresholds(params, n, 1.0);
    const double upper_ii = std::pow(params.pk(), n / 3.0);
    const std::string tag = "concentration/" + std::to_string(n);
    const auto res = parallel_map(static_cast<std::size_t>(samples), workers, [&](std::size_t i) {
      Sample out;
      const Realization r(params, derive_seed(cfg.seed, tag, i));
      if (condition && !survives_to(r, n + 1)) return out;
      SplitMix64 rng(derive_seed(cfg.seed, tag + "/sample", i));
      const Direction dir = dirs.pick(i, rng);
      const double x = sample_x(rng, dir, params.k(), n + 1);
      const auto y = fiber_profile(r, dir, x, n + 1);
      const double yn = y[static_cast<std::size_t>(n)], yn1 = y[static_cast<std::size_t>(n) + 1];
      out.used = true;
      out.increment = std::fabs(yn1 - yn);
      out.exceed_ii = std::fabs(yn1 - yn) >= t.ii_threshold;
      out.precondition_ii = yn < upper_ii;
      out.precondition_i = yn > 1.0;
      if (out.precondition_i) {
        out.exceed_i = yn1 >= yn + bounds::increment_thresholds(params, n, yn).i_threshold;
      }
      return out;
    });
    Level lv;
    lv.n = n;
    lv.exponent = t.failure_exponent;
    for (std::size_t i = 0; i < res.size(); ++i) {
      const auto& r = res[i];
      if (!r.used) continue;
      ++lv.used;
      ++lv.batch_used[i % 2];
      lv.increment.add(r.increment);
      lv.max_increment = std::max(lv.max_increment, r.increment);
      if (r.exceed_ii) {
        ++lv.exceed_ii;
        ++lv.batch_exceed[i % 2];
      }
      if (r.precondition_ii) {
        ++lv.pre_ii;
        if (r.exceed_ii) ++lv.exceed_ii_pre;
      }
      if (r.precondition_i) {
        ++lv.pre_i;
        if (r.exceed_i) ++lv.exceed_i;
      }
    }
    const double m = static_cast<double>(lv.used);
    lv.freq = lv.used ? static_cast<double>(lv.exceed_ii) / m : 0.0;
    lv.se = lv.used ? std::sqrt(lv.freq * (1 - lv.freq) / m) : 0.0;
    levels.push_back(lv);
  }

  std::vector<double> freqs, ses;
  for (const auto& lv : levels) {
    freqs.push_back(lv.freq);
    ses.push_back(lv.se);
  }
  const auto inv = check_inversions(freqs, ses, inversion_se);
  const int inversions = inv.inversions;
  const bool inversions_small = inv.within_allowance;
  const double worst_inversion_se = inv.worst_se;
  double c1[2] = {0, 0};
  for (const auto& lv : levels) {
    for (int b = 0; b < 2; ++b) {
      if (lv.batch_used[b] == 0) continue;
      const double f = static_cast<double>(lv.batch_exceed[b]) / static_cast<double>(lv.batch_used[b]);
      c1[b] = std::max(c1[b], f / lv.exponent);
    }
  }
  const double c1_spread =
      std::max(c1[0], c1[1]) > 0 ? std::fabs(c1[0] - c1[1]) / std::max(c1[0], c1[1]) : 0.0;

  json per_level = json::array();
  std::ostringstream csv;
  csv << "level,samples,exceed_ii,frequency_ii,se_ii,precondition_ii,frequency_ii_precondition,"
         "precondition_i,exceed_i,frequency_i,exponent,mean_increment,max_increment\n";
  for (const auto& lv : levels) {
    const double fpre = lv.pre_ii ? static_cast<double>(lv.exceed_ii_pre) / static_cast<double>(lv.pre_ii) : 0.0;
    const double fi = lv.pre_i ? static_cast<double>(lv.exceed_i) / static_cast<double>(lv.pre_i) : 0.0;
    per_level.push_back({{"level", lv.n},
                         {"n", lv.used},
                         {"exceedances_ii", lv.exceed_ii},
                         {"frequency_ii", lv.freq},
                         {"se_ii", lv.se},
                         {"n_precondition_ii", lv.pre_ii},
                         {"frequency_ii_precondition", fpre},
                         {"n_precondition_i", lv.pre_i},
                         {"exceedances_i", lv.exceed_i},
                         {"frequency_i", fi},
                         {"exponent", lv.exponent},
                         {"mean_increment", lv.increment.mean()},
                         {"max_increment", lv.max_increment},
                         {"threshold_ii", bounds::increment_thresholds(params, lv.n, 1.0).ii_threshold}});
    csv << lv.n << ',' << lv.used << ',' << lv.exceed_ii << ',' << fmt(lv.freq) << ',' << fmt(lv.se)
        << ',' << lv.pre_ii << ',' << fmt(fpre) << ',' << lv.pre_i << ',' << lv.exceed_i << ','
        << fmt(fi) << ',' << fmt(lv.exponent) << ',' << fmt(lv.increment.mean()) << ','
        << fmt(lv.max_increment) << '\n';
  }
  json stats{{"params", {{"k", params.k()}, {"p", params.p()}}},
             {"directions", dirs.describe()},
             {"conditioned_on_survival", condition},
             {"levels", per_level},
             {"inversions", inversions},
             {"worst_inversion_se", worst_inversion_se},
             {"c1_fit", std::max(c1[0], c1[1])},
             {"c1_batches", {c1[0], c1[1]}},
             {"c1_batch_relative_spread", c1_spread},
             {"gamma", bounds::gamma_const(params.p())}};
  json gates;
  gates["nonincreasing"] = gate(static_cast<double>(inversions), "<=", max_inversions);
  gates["nonincreasing"]["inversions_within_se"] = inversions_small;
  gates["nonincreasing"]["inversion_se"] = inversion_se;
  gates["nonincreasing"]["passed"] = inversions <= max_inversions && inversions_small;
  gates["final_frequency"] = gate(levels.back().freq, "<", final_max);
  gates["final_frequency"]["n"] = levels.back().used;
  if (g.contains("c1_max_relative_spread")) {
    gates["c1_stability"] = gate(c1_spread, "<=", g.at("c1_max_relative_spread").get<double>());
  }
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Convergence rate: log-linear decay of sup_x |y_{n+1} - y_n|.

inline SectionResult run_convergence_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("convergence");
  const auto params = section_params(cfg, s);
  params.require_projection_regime("convergence test");
  const int first = get_or(s, "first_level", 4);
  const int last = get_or(s, "last_level", 9);
  const int x_samples = get_or(s, "x_samples", 64);
  const bool condition = get_or(s, "condition_on_survival", true);
  const int count = section_realizations(cfg, s);
  if (first < 0 || last <= first || x_samples < 1) {
    throw ConfigError("convergence: need 0 <= first_level < last_level and x_samples >= 1");
  }
  const auto dirs = directions_from(s, "directions", {"horizontal", "1.0"});
  const json& g = gates_of(s);
  const double min_r2 = get_or(g, "min_r2", 0.9);
  const double min_fraction = get_or(g, "min_fraction", 0.8);

  const auto draw = surviving_realizations(params, cfg.seed, count, last + 1, condition, workers);
  struct Fit {
    std::vector<double> sup;
    LineFit line;
    bool fitted = false;
    bool pass = false;
  };
  json per_dir = json::object();
  json gates = json::object();
  std::ostringstream csv;
  csv << "direction,realization,slope,intercept,r2,pass";
  for (int n = first; n <= last; ++n) csv << ",sup_" << n;
  csv << '\n';
  for (const auto& dir : dirs) {
    const std::string tag = "convergence/x/" + dir.token();
    const auto fits = parallel_map(draw.surviving.size(), workers, [&](std::size_t idx) {
      const std::size_t i = draw.surviving[idx];
      const Realization r(params, derive_seed(cfg.seed, "realization", i));
      SplitMix64 rng(derive_seed(cfg.seed, tag, i));
      Fit f;
      f.sup.assign(static_cast<std::size_t>(last - first + 1), 0.0);
      for (int j = 0; j < x_samples; ++j) {
        const double x = sample_x(rng, dir, params.k(), last + 1);
        const auto y = fiber_profile(r, dir, x, last + 1);
        for (int n = first; n <= last; ++n) {
          const auto u = static_cast<std::size_t>(n);
          auto& m = f.sup[static_cast<std::size_t>(n - first)];
          m = std::max(m, std::fabs(y[u + 1] - y[u]));
        }
      }
      if (std::all_of(f.sup.begin(), f.sup.end(), [](double v) { return v > 0.0; })) {
        std::vector<double> xs, ys;
        for (int n = first; n <= last; ++n) {
          xs.push_back(n);
          ys.push_back(std::log(f.sup[static_cast<std::size_t>(n - first)]));
        }
        f.line = fit_line(xs, ys);
        f.fitted = true;
        f.pass = f.line.slope < 0 && f.line.r2 > min_r2;
      }
      return f;
    });
    std::size_t passed = 0, fitted = 0;
    RunningStats slope, rate;
    for (std::size_t idx = 0; idx < fits.size(); ++idx) {
      const auto& f = fits[idx];
      csv << dir.token() << ',' << draw.surviving[idx] << ',' << fmt(f.line.slope) << ','
          << fmt(f.line.intercept) << ',' << fmt(f.line.r2) << ',' << (f.pass ? 1 : 0);
      for (double v : f.sup) csv << ',' << fmt(v);
      csv << '\n';
      if (f.pass) ++passed;
      if (f.fitted) {
        ++fitted;
        slope.add(f.line.slope);
        rate.add(std::exp(f.line.slope));
      }
    }
    const double frac =
        fits.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(fits.size());
    per_dir[dir.token()] = {{"n", fits.size()},
                            {"fitted", fitted},
                            {"passed", passed},
                            {"pass_fraction", frac},
                            {"mean_slope", slope.mean()},
                            {"se_slope", slope.standard_error()},
                            {"mean_rate", rate.mean()},
                            {"benchmark_rate", std::pow(params.pk(), -1.0 / 6.0)}};
    gates["pass_fraction/" + dir.token()] = gate(frac, ">=", min_fraction);
    gates["pass_fraction/" + dir.token()]["n"] = fits.size();
  }
  json stats{{"levels", {first, last}},
             {"x_samples", x_samples},
             {"min_r2", min_r2},
             {"survival", survival_summary(params, draw, condition)},
             {"directions", per_dir}};
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Hölder regularity: stabilization of the modulus across proxy depths.

namespace detail {

/// Pairs at log-uniform separations in [min_sep, max_sep] (default
/// [1e-4, len/4]) inside the range; with `avoid_kadic`, both points stay 1e-9
/// away from k-adic points of level <= depth.
inline std::vector<PointPair> sample_pairs(SplitMix64& rng, const Direction& dir, int count, int k,
                                           int depth, bool avoid_kadic, double min_sep = 1e-4,
                                           double max_sep = 0.0) {
  const ProjectionRange r = range(dir);
  const double lo = std::log(min_sep), hi = std::log(max_sep > 0 ? max_sep : r.length() / 4);
  std::vector<PointPair> out;
  while (static_cast<int>(out.size()) < count) {
    const double x = rng.uniform(r.lo, r.hi);
    const double off = std::exp(rng.uniform(lo, hi)) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double y = x + off;
    if (y < r.lo || y > r.hi) continue;
    if (avoid_kadic && (near_kadic(x, k, depth, 1e-9) || near_kadic(y, k, depth, 1e-9))) continue;
    out.push_back({x, y});
  }
  return out;
}

/// Modulus at each (depth, alpha) from fiber profiles at the pair endpoints.
inline std::vector<std::vector<double>> modulus_table(const Realization& r, const Direction& dir,
                                                      HolderMetric metric,
                                                      const std::vector<PointPair>& pairs,
                                                      const std::vector<int>& depths,
                                                      const std::vector<double>& alphas) {
  const int deepest = *std::max_element(depths.begin(), depths.end());
  std::vector<std::vector<double>> fx(depths.size()), fy(depths.size());
  std::vector<double> dist;
  for (const auto& pr : pairs) {
    const double d = pair_distance(r.params(), metric, pr);
    if (!(d > 0.0)) continue;
    dist.push_back(d);
    const auto a = fiber_profile(r, dir, pr.x, deepest);
    const auto b = fiber_profile(r, dir, pr.y, deepest);
    for (std::size_t i = 0; i < depths.size(); ++i) {
      fx[i].push_back(a[static_cast<std::size_t>(depths[i])]);
      fy[i].push_back(b[static_cast<std::size_t>(depths[i])]);
    }
  }
  std::vector<std::vector<double>> table(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    for (double alpha : alphas) table[i].push_back(holder_modulus_from_values(fx[i], fy[i], dist, alpha));
  }
  return table;
}

inline bool stabilized(double previous, double last, double max_change) {
  if (last == 0.0) return previous == 0.0;
  return std::fabs(last - previous) / last < max_change;
}

}  // namespace detail

inline SectionResult run_holder_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("holder");
  const auto params = section_params(cfg, s);
  params.require_projection_regime("Hölder test");
  const auto depths = int_list(s, "depths", {6, 8, 10});
  const auto alphas = get_or<std::vector<double>>(s, "alphas", {0.05, 0.1, 0.2, 0.3, 0.5});
  const int n_pairs = get_or(s, "pairs", 200);
  const bool condition = get_or(s, "condition_on_survival", true);
  const int count = section_realizations(cfg, s);
  const auto dirs = directions_from(s, "directions", {"pi/4", "vertical"});
  const auto ordering_dirs = directions_from(s, "ordering_directions", {"0.15", "0.4", "pi/4"});
  const json& g = gates_of(s);
  const double gate_alpha = get_or(g, "alpha", 0.05);
  const double ordering_alpha = get_or(s, "ordering_alpha", gate_alpha);
  const auto ordering_sep = get_or<std::vector<double>>(s, "ordering_separation", {1e-4, 0.0});
  if (ordering_sep.size() != 2 || !(ordering_sep[0] > 0.0)) {
    throw ConfigError("holder: ordering_separation must be [min, max] with min > 0");
  }
  const double max_change = get_or(g, "max_relative_change", 0.2);
  const double min_fraction = get_or(g, "min_fraction", 0.8);
  if (depths.size() < 2 || !std::is_sorted(depths.begin(), depths.end()) || depths.front() < 0) {
    throw ConfigError("holder: depths must be an increasing list of at least two levels");
  }
  if (alphas.empty() || n_pairs < 1) throw ConfigError("holder: need alphas and pairs >= 1");
  std::vector<double> all_alphas = alphas;
  if (std::find(all_alphas.begin(), all_alphas.end(), gate_alpha) == all_alphas.end()) {
    all_alphas.push_back(gate_alpha);
  }
  std::sort(all_alphas.begin(), all_alphas.end());
  const std::size_t gate_idx = static_cast<std::size_t>(
      std::find(all_alphas.begin(), all_alphas.end(), gate_alpha) - all_alphas.begin());
  const int deepest = depths.back();
  const std::size_t last = depths.size() - 1;

  const auto draw = surviving_realizations(params, cfg.seed, count, deepest, condition, workers);
  json per_dir = json::object();
  json gates = json::object();
  std::ostringstream csv;
  csv << "direction,metric,realization,alpha";
  for (int d : depths) csv << ",modulus_" << d;
  csv << ",stabilized\n";

  for (const auto& dir : dirs) {
    const HolderMetric metric = dir.is_axial() ? HolderMetric::rho : HolderMetric::euclidean;
    const std::string tag = "holder/pairs/" + dir.token();
    const auto tables = parallel_map(draw.surviving.size(), workers, [&](std::size_t idx) {
      const std::size_t i = draw.surviving[idx];
      const Realization r(params, derive_seed(cfg.seed, "realization", i));
      SplitMix64 rng(derive_seed(cfg.seed, tag, i));
      const auto pairs = sample_pairs(rng, dir, n_pairs, params.k(), deepest, dir.is_axial());
      return modulus_table(r, dir, metric, pairs, depths, all_alphas);
    });
    std::vector<std::size_t> stable(all_alphas.size(), 0);
    for (std::size_t idx = 0; idx < tables.size(); ++idx) {
      for (std::size_t a = 0; a < all_alphas.size(); ++a) {
        const bool ok = stabilized(tables[idx][last - 1][a], tables[idx][last][a], max_change);
        if (ok) ++stable[a];
        csv << dir.token() << ',' << (dir.is_axial() ? "rho" : "euclidean") << ','
            << draw.surviving[idx] << ',' << fmt(all_alphas[a]);
        for (std::size_t d = 0; d < depths.size(); ++d) csv << ',' << fmt(tables[idx][d][a]);
        csv << ',' << (ok ? 1 : 0) << '\n';
      }
    }
    const double m = static_cast<double>(tables.size());
    json fractions = json::object();
    double largest = 0.0;
    bool any = false;
    for (std::size_t a = 0; a < all_alphas.size(); ++a) {
      const double f = tables.empty() ? 0.0 : static_cast<double>(stable[a]) / m;
      fractions[fmt(all_alphas[a])] = f;
      if (f >= min_fraction) {
        largest = all_alphas[a];
        any = true;
      }
    }
    per_dir[dir.token()] = {{"metric", dir.is_axial() ? "rho" : "euclidean"},
                            {"n", tables.size()},
                            {"stabilized_fraction", fractions},
                            {"largest_stabilized_alpha", any ? json(largest) : json(nullptr)}};
    const double frac = tables.empty() ? 0.0 : static_cast<double>(stable[gate_idx]) / m;
    gates["stabilized_fraction/" + dir.token()] = gate(frac, ">=", min_fraction);
    gates["stabilized_fraction/" + dir.token()]["n"] = tables.size();
  }

  // Direction dependence of the constant: modulus at the deepest level should
  // not decrease as the direction approaches an axis.
  std::vector<std::size_t> order(ordering_dirs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ordering_dirs[a].axial_margin() < ordering_dirs[b].axial_margin();
  });
  const auto ordering = parallel_map(draw.surviving.size(), workers, [&](std::size_t idx) {
    const std::size_t i = draw.surviving[idx];
    const Realization r(params, derive_seed(cfg.seed, "realization", i));
    std::vector<double> mod;
    for (const auto& dir : ordering_dirs) {
      SplitMix64 rng(derive_seed(cfg.seed, "holder/ordering/" + dir.token(), i));
      const auto pairs = sample_pairs(rng, dir, n_pairs, params.k(), deepest, false, ordering_sep[0],
                                      ordering_sep[1]);
      mod.push_back(modulus_table(r, dir, HolderMetric::euclidean, pairs, {deepest}, {ordering_alpha})[0][0]);
    }
    return mod;
  });
  std::size_t ordered = 0;
  std::vector<RunningStats> ordering_stats(ordering_dirs.size());
  for (const auto& mod : ordering) {
    bool ok = true;
    for (std::size_t j = 1; j < order.size(); ++j) {
      if (mod[order[j - 1]] < mod[order[j]]) ok = false;
    }
    if (ok) ++ordered;
    for (std::size_t j = 0; j < mod.size(); ++j) ordering_stats[j].add(mod[j]);
  }
  json ordering_json{{"n", ordering.size()},
                   {"alpha", ordering_alpha},
                   {"separation", ordering_sep},
                   {"ordered", ordered},
                   {"ordered_fraction", ordering.empty() ? 0.0
                                                      : static_cast<double>(ordered) /
                                                            static_cast<double>(ordering.size())}};
  for (std::size_t j = 0; j < ordering_dirs.size(); ++j) {
    ordering_json["mean_modulus"][ordering_dirs[j].token()] = ordering_stats[j].mean();
  }
  if (g.contains("ordering_min_fraction")) {
    gates["direction_dependence"] = gate(ordering_json["ordered_fraction"].get<double>(), ">=",
                                         g.at("ordering_min_fraction").get<double>());
  }
  json stats{{"depths", depths},
             {"alphas", all_alphas},
             {"pairs", n_pairs},
             {"survival", survival_summary(params, draw, condition)},
             {"directions", per_dir},
             {"direction_dependence", ordering_json}};
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Dimension: slope of log #E_m against m log k.

inline SectionResult run_dimension_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("dimension");
  const auto params = section_params(cfg, s);
  const int depth = get_or(s, "depth", 8);
  const int count = section_realizations(cfg, s);
  const auto bias_depths = int_list(s, "bias_depths", {depth / 2 + 2, depth});
  if (depth < 1) throw ConfigError("dimension: depth must be >= 1");
  for (int d : bias_depths) {
    if (d < 1 || d > depth) throw ConfigError("dimension: bias depths must lie in [1, depth]");
  }
  const json& g = gates_of(s);
  const double tolerance = get_or(g, "tolerance", 0.05);
  const int min_surviving = get_or(g, "min_surviving", 100);

  const auto counts = parallel_map(static_cast<std::size_t>(count), workers, [&](std::size_t i) {
    return level_counts(Realization(params, derive_seed(cfg.seed, "realization", i)), depth);
  });
  // subcritical sets are empty almost surely and have no dimension to compare against
  const bool supercritical = params.supercritical_branching();
  const double theory = supercritical ? dim_theory(params) : std::numeric_limits<double>::quiet_NaN();
  RunningStats est;
  std::vector<RunningStats> bias(bias_depths.size());
  std::size_t surviving = 0;
  double cells = 0;
  std::ostringstream csv;
  csv << "realization,surviving,estimate";
  for (int m = 0; m <= depth; ++m) csv << ",count_" << m;
  csv << '\n';
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& c = counts[i];
    for (auto v : c) cells += static_cast<double>(v);
    const bool alive = c.back() > 0;
    double e = 0;
    if (alive) {
      ++surviving;
      e = dim_estimate_from_counts(c, params.k());
      est.add(e);
      for (std::size_t b = 0; b < bias_depths.size(); ++b) {
        const std::span<const std::size_t> prefix(c.data(), static_cast<std::size_t>(bias_depths[b]) + 1);
        bias[b].add(dim_estimate_from_counts(prefix, params.k()) - theory);
      }
    }
    csv << i << ',' << (alive ? 1 : 0) << ',' << (alive ? fmt(e) : "") ;
    for (auto v : c) csv << ',' << v;
    csv << '\n';
  }
  const double q = extinction_probability(params);
  const double frac = static_cast<double>(surviving) / static_cast<double>(count);
  const double frac_se = std::sqrt((1 - q) * q / static_cast<double>(count));
  json bias_json = json::array();
  for (std::size_t b = 0; b < bias_depths.size(); ++b) {
    bias_json.push_back({{"depth", bias_depths[b]},
                         {"n", bias[b].count()},
                         {"mean_bias", bias[b].mean()},
                         {"se", bias[b].standard_error()}});
  }
  json stats{{"depth", depth},
             {"theory", supercritical ? json(theory) : json(nullptr)},
             {"n", surviving},
             {"mean_estimate", surviving ? json(est.mean()) : json(nullptr)},
             {"se_estimate", est.standard_error()},
             {"bias_by_depth", bias_json},
             {"cells_counted", cells},
             {"survival",
              {{"drawn", count},
               {"surviving", surviving},
               {"survival_fraction", frac},
               {"survival_probability_limit", 1 - q},
               {"z", frac_se > 0 ? (frac - (1 - q)) / frac_se : 0.0}}}};
  if (surviving == 0) stats["status"] = "no surviving realizations";
  json gates;
  gates["surviving"] = gate(static_cast<double>(surviving), ">=", min_surviving);
  gates["mean_within_tolerance"] =
      gate(surviving ? std::fabs(est.mean() - theory) : std::numeric_limits<double>::infinity(),
           "<=", tolerance);
  gates["mean_within_tolerance"]["n"] = surviving;
  if (surviving == 0) gates["mean_within_tolerance"]["statistic"] = nullptr;
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Uniformity over a (theta, x) grid in the normalized frame.

namespace detail {

struct Grid {
  double mesh = 0;
  std::vector<double> thetas;
  std::size_t x_points = 0;
  double cardinality() const { return static_cast<double>(thetas.size() * x_points); }
};

inline Grid make_grid(double mesh, double delta) {
  Grid g;
  g.mesh = mesh;
  const double hi = std::numbers::pi / 2 - delta;
  const auto steps = static_cast<std::size_t>(std::floor((hi - delta) / mesh));
  for (std::size_t j = 0; j <= steps; ++j) g.thetas.push_back(delta + static_cast<double>(j) * mesh);
  if (g.thetas.back() < hi) g.thetas.push_back(hi);
  g.x_points = static_cast<std::size_t>(std::floor(kDeltaLength / mesh)) + 2;
  return g;
}

inline std::size_t nearest_theta(const Grid& g, double theta) {
  const double j = std::round((theta - g.thetas.front()) / g.mesh);
  return std::min(static_cast<std::size_t>(std::max(0.0, j)), g.thetas.size() - 1);
}

inline double nearest_x(const Grid& g, double t) {
  return std::min(std::round(t / g.mesh) * g.mesh, kDeltaLength);
}

inline double max_grid_deviation(const PercolationTree& tree, int n, const Grid& g,
                                 const std::vector<std::pair<double, double>>& probes,
                                 bool at_grid) {
  std::vector<std::optional<PiecewiseDensity>> cache(g.thetas.size());
  const auto grid_density = [&](std::size_t j) -> const PiecewiseDensity& {
    if (!cache[j]) cache[j] = normalize_to_delta(density(tree, n, Direction::oblique(g.thetas[j])));
    return *cache[j];
  };
  double worst = 0;
  for (auto [theta, t] : probes) {
    const std::size_t j = nearest_theta(g, theta);
    const double tg = nearest_x(g, t);
    if (at_grid) {
      theta = g.thetas[j];
      t = tg;
    }
    const auto d = normalize_to_delta(density(tree, n, Direction::oblique(theta)));
    worst = std::max(worst, std::fabs(evaluate(d, t) - evaluate(grid_density(j), tg)));
  }
  return worst;
}

}  // namespace detail

inline SectionResult run_uniformity_test(const ExperimentConfig& cfg, int workers = 1) {
  using namespace detail;
  const json& s = cfg.section("uniformity");
  const auto params = section_params(cfg, s);
  params.require_projection_regime("uniformity test");
  const int n = get_or(s, "level", 2);
  const double delta = get_or(s, "delta", 0.2);
  const int count = get_or(s, "realizations", 10);
  const int n_probes = get_or(s, "probes", 1000);
  const double budget = get_or(s, "grid_budget", 1e6);
  if (n < 0 || count < 1 || n_probes < 1) throw ConfigError("uniformity: bad level/realizations/probes");
  if (!(delta > 0.0 && delta < std::numbers::pi / 4)) throw ConfigError("uniformity: delta must lie in (0, pi/4)");
  const json& gt = gates_of(s);
  const double ratio_lo = get_or(gt, "halving_ratio_min", 0.5);
  const double ratio_hi = get_or(gt, "halving_ratio_max", 8.0);

  const auto mesh = bounds::grid_mesh(params, n, delta);
  const Grid coarse = make_grid(mesh.mesh, delta);
  const Grid fine = make_grid(mesh.mesh / 2, delta);
  if (fine.cardinality() > budget) {
    throw InfeasibleConfig("uniformity grid has " + format_double(fine.cardinality()) +
                           " points at half mesh, above the budget " + format_double(budget));
  }
  struct Row {
    double coarse = 0, fine = 0, at_grid = 0;
  };
  const auto rows = parallel_map(static_cast<std::size_t>(count), workers, [&](std::size_t i) {
    const auto tree = generate(params, derive_seed(cfg.seed, "uniformity", i), n);
    SplitMix64 rng(derive_seed(cfg.seed, "uniformity/probes", i));
    std::vector<std::pair<double, double>> probes;
    for (int j = 0; j < n_probes; ++j) {
      const double theta = rng.uniform(delta, std::numbers::pi / 2 - delta);
      probes.emplace_back(theta, rng.uniform(0.0, kDeltaLength));
    }
    Row r;
    r.coarse = max_grid_deviation(tree, n, coarse, probes, false);
    r.fine = max_grid_deviation(tree, n, fine, probes, false);
    r.at_grid = max_grid_deviation(tree, n, coarse, probes, true);
    return r;
  });
  double worst = 0, worst_fine = 0, worst_grid = 0;
  std::ostringstream csv;
  csv << "realization,max_deviation,max_deviation_half_mesh,max_deviation_at_grid\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    worst = std::max(worst, rows[i].coarse);
    worst_fine = std::max(worst_fine, rows[i].fine);
    worst_grid = std::max(worst_grid, rows[i].at_grid);
    csv << i << ',' << fmt(rows[i].coarse) << ',' << fmt(rows[i].fine) << ',' << fmt(rows[i].at_grid)
        << '\n';
  }
  const double benchmark = std::pow(params.pk(), -n / 6.0);
  const double ratio = worst_fine > 0 ? worst / worst_fine : (worst == 0 ? 1.0 : 0.0);
  const auto bound = bounds::uniform_probability(params, n, delta);
  json stats{{"params", {{"k", params.k()}, {"p", params.p()}}},
             {"level", n},
             {"delta", delta},
             {"mesh", mesh.mesh},
             {"cardinality_bound", mesh.cardinality},
             {"grid", {{"thetas", coarse.thetas.size()}, {"x_points", coarse.x_points}}},
             {"grid_half_mesh", {{"thetas", fine.thetas.size()}, {"x_points", fine.x_points}}},
             {"realizations", count},
             {"probes_per_realization", n_probes},
             {"max_deviation", worst},
             {"max_deviation_half_mesh", worst_fine},
             {"max_deviation_at_grid", worst_grid},
             {"halving_ratio", ratio},
             {"benchmark", benchmark},
             {"c6_fit", worst / benchmark},
             {"probability_bound", {{"value", bound.value}, {"vacuous", bound.vacuous}}}};
  json gates;
  gates["grid_points_exact"] = gate(worst_grid, "<=", 0.0);
  gates["halving_ratio_min"] = gate(ratio, ">=", ratio_lo);
  gates["halving_ratio_max"] = gate(ratio, "<=", ratio_hi);
  return finish(std::move(stats), std::move(gates), csv.str());
}

// ---------------------------------------------------------------------------
// Suite

/// Deepest level each section touches and the cell count (k^2 p)^depth that
/// a materialized tree of that depth would hold.
inline json feasibility(const ExperimentConfig& cfg) {
  using namespace detail;
  json per = json::object();
  double worst = 0;
  bool ok = true;
  std::string reason;
  for (const auto& name : cfg.sections) {
    const json& s = cfg.section(name);
    const auto params = section_params(cfg, s);
    int depth = 0;
    if (name == "martingale") depth = get_or(s, "level", 5) + 1;
    else if (name == "concentration") depth = get_or(s, "last_level", 8) + 1;
    else if (name == "convergence") depth = get_or(s, "last_level", 9) + 1;
    else if (name == "holder") {
      const auto d = int_list(s, "depths", {6, 8, 10});
      depth = d.empty() ? 0 : *std::max_element(d.begin(), d.end());
    } else if (name == "dimension") depth = get_or(s, "depth", 8);
    else if (name == "uniformity") depth = get_or(s, "level", 2);
    const double cells = std::pow(params.mean_offspring(), depth);
    worst = std::max(worst, cells);
    json entry{{"depth", depth}, {"estimated_cells", cells}};
    if (name != "martingale" && name != "dimension" && !params.projection_regime()) {
      ok = false;
      entry["regime"] = "requires kp > 1";
      if (reason.empty()) reason = name + " requires kp > 1";
    }
    if (cells > cfg.cell_budget) {
      ok = false;
      if (reason.empty()) {
        reason = name + ": estimated " + format_double(cells) + " cells exceeds the budget " +
                 format_double(cfg.cell_budget);
      }
    }
    per[name] = entry;
  }
  json out{{"sections", per},
           {"estimated_cells", worst},
           {"cell_budget", cfg.cell_budget},
           {"feasible", ok}};
  if (!ok) out["reason"] = reason;
  return out;
}

struct SuiteResult {
  json report;
  json timing;
  std::map<std::string, std::string> csv;
  bool passed = true;
};

inline SectionResult run_section(const std::string& name, const ExperimentConfig& cfg, int workers) {
  if (name == "martingale") return run_martingale_test(cfg, workers);
  if (name == "concentration") return run_concentration_test(cfg, workers);
  if (name == "convergence") return run_convergence_test(cfg, workers);
  if (name == "holder") return run_holder_test(cfg, workers);
  if (name == "dimension") return run_dimension_test(cfg, workers);
  if (name == "uniformity") return run_uniformity_test(cfg, workers);
  throw ConfigError("unknown section '" + name + "'");
}

/// Runs the configured sections in order. Timing is kept out of the report so
/// that reports are byte-identical across runs and worker counts.
inline SuiteResult run_suite(const ExperimentConfig& cfg, int workers = 1) {
  const json feas = feasibility(cfg);
  if (!feas.at("feasible").get<bool>()) throw InfeasibleConfig(feas.at("reason").get<std::string>());
  SuiteResult out;
  out.report = {{"config", cfg.raw}, {"feasibility", feas}, {"sections", json::object()}};
  out.timing = {{"workers", workers}, {"sections", json::object()}};
  const auto start = std::chrono::steady_clock::now();
  for (const auto& name : cfg.sections) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = run_section(name, cfg, workers);
    out.timing["sections"][name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report["sections"][name] = std::move(res.report);
    out.csv[name] = std::move(res.csv);
    out.passed = out.passed && res.passed;
  }
  out.timing["total_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.report["passed"] = out.passed;
  return out;
}

inline std::string report_text(const SuiteResult& r) { return r.report.dump(2) + "\n"; }

/// report.json, timing.json and one CSV per section.
inline void write_outputs(const SuiteResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto put = [&](const std::filesystem::path& file, const std::string& text) {
    std::ofstream os(dir / file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / file).string());
    os << text;
  };
  put("report.json", report_text(r));
  put("timing.json", r.timing.dump(2) + "\n");
  for (const auto& [name, text] : r.csv) put(name + ".csv", text);
}

}  // namespace fracperc::experiments
