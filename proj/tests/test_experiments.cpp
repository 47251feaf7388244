#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "fracperc/experiments.hpp"

namespace fracperc::experiments {
namespace {

std::string source_path(const std::string& rel) { return std::string(FRACPERC_SOURCE_DIR) + "/" + rel; }

json base_config() {
  return json{{"params", {{"k", 3}, {"p", 0.7}}}, {"seed", 11}, {"realizations", 8}, {"sections", json::array()}};
}

TEST(ParallelMap, KeepsIndexOrder) {
  for (int workers : {1, 3, 8}) {
    const auto out = parallel_map(100, workers, [](std::size_t i) { return i * i; });
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
  }
  EXPECT_TRUE(parallel_map(0, 4, [](std::size_t i) { return i; }).empty());
}

TEST(ParallelMap, PropagatesExceptions) {
  EXPECT_THROW(parallel_map(50, 4,
                            [](std::size_t i) {
                              if (i == 17) throw std::runtime_error("boom");
                              return i;
                            }),
               std::runtime_error);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(ExperimentConfig::from_json(base_config()));
  auto c = base_config();
  c.erase("params");
  EXPECT_THROW(ExperimentConfig::from_json(c), ConfigError);
  c = base_config();
  c["params"]["p"] = 1.5;
  EXPECT_THROW(ExperimentConfig::from_json(c), ConfigError);
  c = base_config();
  c["realizations"] = 0;
  EXPECT_THROW(ExperimentConfig::from_json(c), ConfigError);
  c = base_config();
  c["sections"] = {"martingale", "telepathy"};
  EXPECT_THROW(ExperimentConfig::from_json(c), ConfigError);
  c = base_config();
  c["seed"] = "abc";
  EXPECT_THROW(ExperimentConfig::from_json(c), ConfigError);
  EXPECT_THROW(load_config(source_path("configs/does-not-exist.json")), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  const auto ref = load_config(source_path("configs/reference.json"));
  EXPECT_EQ(ref.params, PercolationParams(3, 0.7));
  EXPECT_EQ(ref.realizations, 200);
  EXPECT_EQ(ref.sections.size(), 6u);
  EXPECT_TRUE(feasibility(ref).at("feasible").get<bool>());
  EXPECT_NO_THROW(load_config(source_path("configs/smoke.json")));
}

TEST(Suite, EmptySectionListGivesValidReport) {
  const auto r = run_suite(ExperimentConfig::from_json(base_config()));
  EXPECT_TRUE(r.passed);
  EXPECT_TRUE(r.report.at("sections").empty());
  EXPECT_TRUE(r.report.at("passed").get<bool>());
  EXPECT_EQ(r.report.at("config"), base_config());
  EXPECT_TRUE(json::parse(report_text(r)).is_object());
}

TEST(Suite, ByteIdenticalAcrossRunsAndWorkers) {
  const auto cfg = load_config(source_path("configs/smoke.json"));
  const auto a = run_suite(cfg, 1);
  const auto b = run_suite(cfg, 1);
  const auto c = run_suite(cfg, 4);
  EXPECT_EQ(report_text(a), report_text(b));
  EXPECT_EQ(report_text(a), report_text(c));
  EXPECT_EQ(a.csv, c.csv);
  EXPECT_TRUE(a.passed);
  // timing lives outside the report
  EXPECT_FALSE(a.report.contains("timing"));
  EXPECT_TRUE(a.timing.contains("total_seconds"));
}

TEST(Suite, SeedChangesReport) {
  auto j = json::parse(std::ifstream(source_path("configs/smoke.json")));
  const auto a = run_suite(ExperimentConfig::from_json(j));
  j["seed"] = 8;
  const auto b = run_suite(ExperimentConfig::from_json(j));
  EXPECT_NE(a.report.at("sections"), b.report.at("sections"));
}

TEST(Suite, WritesReportTimingAndCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "fracperc_suite_out";
  std::filesystem::remove_all(dir);
  const auto r = run_suite(load_config(source_path("configs/smoke.json")));
  write_outputs(r, dir);
  for (const char* f : {"report.json", "timing.json", "martingale.csv", "concentration.csv",
                        "convergence.csv", "holder.csv", "dimension.csv", "uniformity.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "report.json");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), report_text(r));
  std::filesystem::remove_all(dir);
}

TEST(Feasibility, CellBudgetAndRegime) {
  auto j = base_config();
  j["sections"] = {"dimension"};
  j["dimension"] = {{"depth", 12}};
  j["cell_budget"] = 1e6;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto f = feasibility(cfg);
  EXPECT_FALSE(f.at("feasible").get<bool>());
  EXPECT_NEAR(f.at("estimated_cells").get<double>(), std::pow(6.3, 12), 1.0);
  EXPECT_THROW(run_suite(cfg), InfeasibleConfig);

  auto sub = base_config();
  sub["params"] = {{"k", 2}, {"p", 0.45}};
  sub["sections"] = {"concentration"};
  EXPECT_THROW(run_suite(ExperimentConfig::from_json(sub)), InfeasibleConfig);
}

TEST(Martingale, SmallRunPassesAndCountsSkips) {
  auto j = base_config();
  j["martingale"] = {{"level", 3}, {"pairs", 20}, {"resamples", 2000}, {"directions", {"1.0", "horizontal"}}};
  const auto r = run_martingale_test(ExperimentConfig::from_json(j), 2);
  const auto& s = r.report.at("statistics");
  EXPECT_EQ(s.at("tested").get<int>() + s.at("skipped_extinct").get<int>() +
                s.at("skipped_fiber_misses_set").get<int>(),
            20);
  EXPECT_GE(s.at("pass_rate").get<double>(), 0.85);
  EXPECT_LT(s.at("max_abs_z").get<double>(), 5.0);
  // the CSV has a header and one row per triple
  EXPECT_EQ(std::count(r.csv.begin(), r.csv.end(), '\n'), 21);
}

TEST(Martingale, RequiresEnoughResamples) {
  auto j = base_config();
  j["martingale"] = {{"resamples", 100}};
  EXPECT_THROW(run_martingale_test(ExperimentConfig::from_json(j)), ConfigError);
}

TEST(Martingale, ExtinctRealizationsAreSkipped) {
  // k^2 p = 0.4: about 95% of realizations die by level 3
  auto j = base_config();
  j["params"] = {{"k", 2}, {"p", 0.1}};
  j["martingale"] = {{"level", 3}, {"pairs", 30}, {"resamples", 1000}};
  const auto r = run_martingale_test(ExperimentConfig::from_json(j));
  EXPECT_GT(r.report.at("statistics").at("skipped_extinct").get<int>(), 20);
}

TEST(Concentration, PreconditionFiltersAndShape) {
  auto j = base_config();
  j["concentration"] = {{"first_level", 2}, {"last_level", 4}, {"samples_per_level", 300}};
  const auto r = run_concentration_test(ExperimentConfig::from_json(j), 2);
  const auto& levels = r.report.at("statistics").at("levels");
  ASSERT_EQ(levels.size(), 3u);
  for (const auto& lv : levels) {
    EXPECT_EQ(lv.at("n").get<int>(), 300);
    EXPECT_LE(lv.at("n_precondition_i").get<int>(), 300);
    EXPECT_LE(lv.at("exceedances_i").get<int>(), lv.at("n_precondition_i").get<int>());
    EXPECT_EQ(lv.at("max_increment").get<double>() >= lv.at("threshold_ii").get<double>(),
              lv.at("exceedances_ii").get<int>() > 0);
    const int n = lv.at("level").get<int>();
    EXPECT_NEAR(lv.at("exponent").get<double>(), std::pow(0.7807600790819629, std::pow(2.1, n / 3.0)), 1e-12);
  }
}

TEST(Concentration, InversionRule) {
  const std::vector<double> se(4, 0.02);
  const std::vector<double> one_small{0.3, 0.2, 0.25, 0.1};
  auto c = detail::check_inversions(one_small, se, 2.0);
  EXPECT_EQ(c.inversions, 1);
  EXPECT_NEAR(c.worst_se, 0.05 / std::hypot(0.02, 0.02), 1e-12);
  EXPECT_TRUE(c.within_allowance);
  const std::vector<double> one_large{0.3, 0.2, 0.3, 0.1};
  c = detail::check_inversions(one_large, se, 2.0);
  EXPECT_EQ(c.inversions, 1);
  EXPECT_FALSE(c.within_allowance);
  const std::vector<double> flat{0.0, 0.0, 0.0, 0.0};
  c = detail::check_inversions(flat, se, 2.0);
  EXPECT_EQ(c.inversions, 0);
  const std::vector<double> zero_se(4, 0.0);
  const std::vector<double> rising{0.0, 0.01, 0.0, 0.0};
  EXPECT_FALSE(detail::check_inversions(rising, zero_se, 2.0).within_allowance);
}

TEST(Convergence, DeterministicFullTreeRecoversGeometricLaw) {
  // with p this close to 1 every cell of the first levels survives, so
  // y_n(x) = p^-n |fiber| and the increments grow exactly like p^-n
  const double p = 1.0 - 1e-6;
  auto j = base_config();
  j["params"] = {{"k", 2}, {"p", p}};
  j["realizations"] = 3;
  j["convergence"] = {{"first_level", 1}, {"last_level", 4}, {"x_samples", 8}, {"directions", {"horizontal", "1.0"}}};
  const auto r = run_convergence_test(ExperimentConfig::from_json(j));
  for (const char* d : {"horizontal", "1"}) {
    const auto& s = r.report.at("statistics").at("directions").at(d);
    EXPECT_NEAR(s.at("mean_slope").get<double>(), -std::log(p), 1e-9) << d;
  }
}

TEST(Convergence, SmallRunDecays) {
  auto j = base_config();
  j["realizations"] = 10;
  j["convergence"] = {{"first_level", 3}, {"last_level", 7}, {"x_samples", 64}};
  const auto r = run_convergence_test(ExperimentConfig::from_json(j), 2);
  for (const char* d : {"horizontal", "1"}) {
    const auto& s = r.report.at("statistics").at("directions").at(d);
    EXPECT_LT(s.at("mean_slope").get<double>(), -0.1) << d;
    EXPECT_EQ(s.at("n").get<int>(), 10);
  }
  EXPECT_EQ(r.report.at("statistics").at("survival").at("surviving").get<int>(), 10);
}

TEST(Holder, StabilizesAtSmallAlpha) {
  auto j = base_config();
  j["realizations"] = 6;
  j["holder"] = {{"depths", {4, 6, 7}}, {"alphas", {0.05, 0.5}}, {"pairs", 60}, {"directions", {"pi/4", "vertical"}}};
  const auto r = run_holder_test(ExperimentConfig::from_json(j));
  const auto& dirs = r.report.at("statistics").at("directions");
  EXPECT_EQ(dirs.at("vertical").at("metric"), "rho");
  EXPECT_EQ(dirs.at("0.7853981633974483").at("metric"), "euclidean");
  EXPECT_GE(dirs.at("0.7853981633974483").at("stabilized_fraction").at("0.05").get<double>(), 0.5);
  EXPECT_TRUE(r.report.at("statistics").contains("direction_dependence"));
  EXPECT_FALSE(r.report.at("gates").contains("direction_dependence"));
}

TEST(Holder, RejectsBadDepths) {
  auto j = base_config();
  j["holder"] = {{"depths", {6}}};
  EXPECT_THROW(run_holder_test(ExperimentConfig::from_json(j)), ConfigError);
  j["holder"] = {{"depths", {8, 6}}};
  EXPECT_THROW(run_holder_test(ExperimentConfig::from_json(j)), ConfigError);
}

TEST(Dimension, SubcriticalHasNoSurvivors) {
  auto j = base_config();
  j["params"] = {{"k", 2}, {"p", 0.1}};
  j["realizations"] = 50;
  j["sections"] = {"dimension"};
  j["dimension"] = {{"depth", 8}};
  const auto r = run_suite(ExperimentConfig::from_json(j));
  const auto& s = r.report.at("sections").at("dimension");
  EXPECT_EQ(s.at("statistics").at("status"), "no surviving realizations");
  EXPECT_TRUE(s.at("statistics").at("theory").is_null());
  EXPECT_FALSE(s.at("passed").get<bool>());
  EXPECT_FALSE(r.passed);
}

TEST(Dimension, SurvivalFractionMatchesFixedPoint) {
  // q = 0.0859... for Binomial(4, 0.6); 400 draws give an SE of about 0.014
  auto j = base_config();
  j["params"] = {{"k", 2}, {"p", 0.6}};
  j["realizations"] = 400;
  j["dimension"] = {{"depth", 7}, {"gates", {{"min_surviving", 1}, {"tolerance", 0.5}}}};
  const auto r = run_dimension_test(ExperimentConfig::from_json(j), 2);
  const auto& sv = r.report.at("statistics").at("survival");
  EXPECT_LT(std::fabs(sv.at("z").get<double>()), 4.0);
  EXPECT_NEAR(sv.at("survival_probability_limit").get<double>(), 1 - extinction_probability(PercolationParams(2, 0.6)), 1e-15);
}

TEST(Uniformity, PinnedRegression) {
  auto j = base_config();
  j["seed"] = 5;
  j["uniformity"] = {{"params", {{"k", 2}, {"p", 0.9}}}, {"level", 2}, {"delta", 0.2}, {"realizations", 4}, {"probes", 500}};
  const auto r = run_uniformity_test(ExperimentConfig::from_json(j));
  const auto& s = r.report.at("statistics");
  EXPECT_NEAR(s.at("mesh").get<double>(), 0.2 * std::pow(0.9, 5.0 / 3) * std::pow(2.0, -7.0 / 3), 1e-15);
  EXPECT_EQ(s.at("grid").at("thetas").get<int>(), 37);
  EXPECT_EQ(s.at("grid").at("x_points").get<int>(), 44);
  EXPECT_EQ(s.at("max_deviation_at_grid").get<double>(), 0.0);
  EXPECT_NEAR(s.at("max_deviation").get<double>(), 0.10285142220603211, 1e-12);
  EXPECT_NEAR(s.at("max_deviation_half_mesh").get<double>(), 0.052181861789280748, 1e-12);
  EXPECT_TRUE(s.at("probability_bound").at("vacuous").get<bool>());
  EXPECT_TRUE(r.passed);
}

TEST(Uniformity, RefusesGridAboveBudget) {
  auto j = base_config();
  j["uniformity"] = {{"params", {{"k", 3}, {"p", 0.7}}}, {"level", 6}, {"delta", 0.1}, {"grid_budget", 1e6}};
  try {
    run_uniformity_test(ExperimentConfig::from_json(j));
    FAIL() << "expected InfeasibleConfig";
  } catch (const InfeasibleConfig& e) {
    EXPECT_NE(std::string(e.what()).find("points at half mesh"), std::string::npos);
  }
}

}  // namespace
}  // namespace fracperc::experiments
