#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fracperc_cli.hpp"

namespace fracperc::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out, err;
};

Run call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fracperc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config(const std::string& name) { return std::string(FRACPERC_SOURCE_DIR) + "/configs/" + name; }

TEST(Generate, RoundTripsLosslessly) {
  const auto r = call({"generate", "--k", "2", "--p", "0.9", "--depth", "3", "--seed", "7"});
  ASSERT_EQ(r.code, kOk) << r.err;
  std::istringstream in(r.out);
  const auto back = read_tree(in);
  EXPECT_EQ(back, generate(PercolationParams(2, 0.9), 7, 3));
  std::ostringstream again;
  write_tree(again, back);
  EXPECT_EQ(again.str(), r.out);
  // the per-level summary goes to stderr when the tree is on stdout
  EXPECT_NE(r.err.find("# level cells z_estimate"), std::string::npos);
}

TEST(Generate, DepthZeroIsRootOnly) {
  const auto r = call({"generate", "--depth", "0", "--seed", "3"});
  ASSERT_EQ(r.code, kOk);
  std::istringstream in(r.out);
  const auto t = read_tree(in);
  EXPECT_EQ(t.max_depth(), 0);
  EXPECT_EQ(t.count(0), 1u);
}

TEST(Generate, SummaryToStdoutWhenWritingFile) {
  const auto dir = temp_dir("gen");
  const auto path = (dir / "t.txt").string();
  const auto r = call({"generate", "--k", "3", "--p", "0.7", "--depth", "2", "--seed", "5", "--out", path});
  ASSERT_EQ(r.code, kOk);
  EXPECT_EQ(r.out.rfind("# level cells z_estimate\n0 1 1\n", 0), 0u);
  std::ifstream in(path);
  EXPECT_EQ(read_tree(in), generate(PercolationParams(3, 0.7), 5, 2));
  fs::remove_all(dir);
}

TEST(Generate, RejectsInfeasibleDepthAndBadParams) {
  EXPECT_EQ(call({"generate", "--depth", "30", "--cell-budget", "1e6"}).code, kUsage);
  EXPECT_EQ(call({"generate", "--p", "1.5"}).code, kUsage);
  EXPECT_EQ(call({"generate", "--k", "1"}).code, kUsage);
  // subcritical parameters warn but still generate
  const auto r = call({"generate", "--k", "2", "--p", "0.2", "--depth", "2"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Density, PipedTreeReproducesInProcessDensity) {
  const auto dir = temp_dir("pipe");
  const auto path = (dir / "t.txt").string();
  ASSERT_EQ(call({"generate", "--k", "3", "--p", "0.7", "--depth", "4", "--seed", "11", "--out", path}).code, kOk);
  const auto from_file = call({"density", "--tree", path, "--theta", "1.0"});
  const auto in_process = call({"density", "--k", "3", "--p", "0.7", "--depth", "4", "--seed", "11", "--theta", "1.0"});
  ASSERT_EQ(from_file.code, kOk) << from_file.err;
  EXPECT_EQ(from_file.out, in_process.out);

  const auto j = json::parse(from_file.out);
  const auto d = density(generate(PercolationParams(3, 0.7), 11, 4), 4, Direction::oblique(1.0));
  EXPECT_EQ(j.at("breakpoints").get<std::vector<double>>(), d.breakpoints);
  EXPECT_EQ(j.at("values").get<std::vector<double>>(), d.values);
  fs::remove_all(dir);
}

TEST(Density, MassEchoesCellCount) {
  for (const char* theta : {"0.3", "pi/4", "horizontal", "vertical"}) {
    const auto r = call({"density", "--k", "3", "--p", "0.7", "--depth", "4", "--seed", "2", "--theta", theta});
    ASSERT_EQ(r.code, kOk) << theta;
    const auto j = json::parse(r.out);
    const double expected = static_cast<double>(j.at("cells").get<std::size_t>()) / std::pow(0.7, 4) / std::pow(3.0, 8);
    EXPECT_NEAR(j.at("mass").get<double>(), expected, 1e-9 * expected) << theta;
    EXPECT_NEAR(j.at("expected_mass").get<double>(), expected, 1e-12 * expected) << theta;
  }
}

TEST(Density, FullSurvivalDiagonalIsTriangle) {
  // with p this close to one every cell survives at depth 2
  const auto r = call({"density", "--k", "2", "--p", "0.99999999", "--depth", "2", "--seed", "1", "--theta", "pi/4",
                       "--format", "csv"});
  ASSERT_EQ(r.code, kOk) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  const auto meta = json::parse(line.substr(2));
  ASSERT_EQ(meta.at("cells").get<int>(), 16);
  std::getline(in, line);
  EXPECT_EQ(line, "x,value");
  const double p2 = std::pow(0.99999999, 2);
  const double diag = std::sqrt(2.0);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double x = std::stod(line.substr(0, comma));
    const double v = std::stod(line.substr(comma + 1));
    // chord of the unit square on the fibre at x: 2 min(x, sqrt2 - x)
    const double tri = 2.0 * std::max(0.0, std::min(x, diag - x)) / p2;
    EXPECT_NEAR(v, tri, 1e-9) << x;
    ++rows;
  }
  EXPECT_GE(rows, 3);
}

TEST(Density, AxialKadicPointIsUsageError) {
  const auto strict = call({"density", "--depth", "3", "--seed", "4", "--theta", "vertical", "--x", "0.5"});
  // 0.5 is not 3-adic: this one is fine
  EXPECT_EQ(strict.code, kOk) << strict.err;
  const auto bad = call({"density", "--k", "2", "--p", "0.9", "--depth", "3", "--seed", "4", "--theta", "vertical",
                         "--x", "0.5"});
  EXPECT_EQ(bad.code, kUsage);
  EXPECT_NE(bad.err.find("k-adic"), std::string::npos) << bad.err;
  const auto closed = call({"density", "--k", "2", "--p", "0.9", "--depth", "3", "--seed", "4", "--theta",
                            "vertical", "--x", "0.5", "--mode", "left_closed"});
  EXPECT_EQ(closed.code, kOk);
  EXPECT_TRUE(json::parse(closed.out).contains("value"));
}

TEST(Density, FlagValidation) {
  EXPECT_EQ(call({"density", "--depth", "2"}).code, kUsage);
  EXPECT_EQ(call({"density", "--depth", "2", "--theta", "sideways"}).code, kUsage);
  EXPECT_EQ(call({"density", "--depth", "2", "--theta", "1.0", "--level", "3"}).code, kUsage);
  EXPECT_EQ(call({"density", "--depth", "2", "--theta", "1.0", "--format", "xml"}).code, kUsage);
  const auto delta = call({"density", "--depth", "2", "--theta", "1.0", "--frame", "delta", "--samples", "5"});
  ASSERT_EQ(delta.code, kOk);
  EXPECT_EQ(json::parse(delta.out).at("samples").size(), 5u);
}

TEST(Constants, ReferenceValues) {
  const auto r = call({"constants", "--k", "3", "--p", "0.7"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("gamma").get<double>(), 0.780760079081962892, 1e-12);
  EXPECT_EQ(j.at("N0").get<int>(), 10);
  EXPECT_EQ(j.at("L").get<int>(), 5);
  EXPECT_NEAR(j.at("dim_theory").get<double>(), std::log(6.3) / std::log(3.0), 1e-12);
  EXPECT_NEAR(j.at("dim_theory").get<double>(), 1.675340474872, 1e-12);
}

TEST(Constants, SchemaIsStable) {
  const auto a = call({"constants", "--k", "3", "--p", "0.7"});
  const auto b = call({"constants", "--k", "3", "--p", "0.7"});
  EXPECT_EQ(a.out, b.out);
  const auto c = call({"constants", "--k", "2", "--p", "0.6"});
  const auto ja = json::parse(a.out), jc = json::parse(c.out);
  for (const auto& [key, _] : ja.items()) EXPECT_TRUE(jc.contains(key)) << key;
  EXPECT_EQ(ja.size(), jc.size());
}

TEST(Constants, UsageErrors) {
  EXPECT_EQ(call({"constants", "--p", "1.5"}).code, kUsage);
  EXPECT_EQ(call({"constants", "--p", "0"}).code, kUsage);
  EXPECT_EQ(call({"constants", "--k", "1"}).code, kUsage);
  EXPECT_EQ(call({"constants", "--N", "0"}).code, kUsage);
  // kp <= 1 is a warning: regime-dependent entries are null
  const auto r = call({"constants", "--k", "2", "--p", "0.4"});
  ASSERT_EQ(r.code, kOk);
  EXPECT_TRUE(json::parse(r.out).at("N0").is_null());
}

TEST(Verify, FreshSeedPasses) {
  const auto r = call({"verify", "--k", "3", "--p", "0.7", "--depth", "4", "--seed", "99", "--samples", "20"});
  EXPECT_EQ(r.code, kOk) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("PASS mass"), std::string::npos);
}

TEST(Verify, SamplesZeroRunsStructuralChecksOnly) {
  const auto r = call({"verify", "--depth", "3", "--seed", "5", "--samples", "0"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("PASS structure"), std::string::npos);
  EXPECT_EQ(r.out.find("PASS mass"), std::string::npos);
}

TEST(Verify, OrphanCellIsReportedWithItsAddress) {
  const auto dir = temp_dir("orphan");
  const auto path = dir / "t.txt";
  ASSERT_EQ(call({"generate", "--k", "2", "--p", "0.5", "--depth", "3", "--seed", "8", "--out", path.string()}).code,
            kOk);
  std::ifstream in(path);
  const auto t = read_tree(in);
  in.close();
  // find a depth-3 cell whose parent is absent and inject it
  const auto parents = t.cells(2);
  std::optional<CellCoord> orphan;
  for (std::uint64_t i = 0; i < 8 && !orphan; ++i) {
    for (std::uint64_t j = 0; j < 8 && !orphan; ++j) {
      const CellCoord parent{i / 2, j / 2};
      if (std::find(parents.begin(), parents.end(), parent) == parents.end()) orphan = CellCoord{i, j};
    }
  }
  ASSERT_TRUE(orphan);
  const auto addr = CellAddress::from_coord(*orphan, 2, 3);
  std::ofstream(path, std::ios::app) << "3 " << format_digits(addr.i_digits) << ' '
                                     << format_digits(addr.j_digits) << '\n';
  const auto r = call({"verify", "--tree", path.string()});
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.out.find("FAIL structure"), std::string::npos);
  EXPECT_NE(r.out.find("orphan"), std::string::npos);
  EXPECT_NE(r.out.find(format_address(addr)), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Experiment, MissingConfigIsUsageError) {
  EXPECT_EQ(call({"experiment", "--config", "/nonexistent/config.json"}).code, kUsage);
  EXPECT_EQ(call({"experiment"}).code, kUsage);
}

TEST(Experiment, DryRunPrintsFeasibility) {
  const auto r = call({"experiment", "--config", config("reference.json"), "--dry-run"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j.at("feasible").get<bool>());
  EXPECT_GT(j.at("estimated_cells").get<double>(), 0.0);
}

TEST(Experiment, SmokeRunWritesOutputs) {
  const auto dir = temp_dir("smoke");
  const auto r = call({"experiment", "--config", config("smoke.json"), "--out", dir.string(), "--workers", "2"});
  EXPECT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "timing.json"));
  EXPECT_TRUE(json::parse(slurp(dir / "report.json")).at("passed").get<bool>());
  EXPECT_NE(r.err.find("dimension: PASS"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Experiment, GateFailureAndInfeasibleExitCodes) {
  const auto dir = temp_dir("codes");
  const auto sub = dir / "sub.json";
  std::ofstream(sub) << json{{"params", {{"k", 2}, {"p", 0.3}}},
                             {"seed", 1},
                             {"realizations", 20},
                             {"sections", {"dimension"}},
                             {"dimension", {{"depth", 4}, {"min_surviving", 5}}}}
                            .dump();
  const auto fail = call({"experiment", "--config", sub.string()});
  EXPECT_EQ(fail.code, kFailure) << fail.err;
  EXPECT_NE(fail.err.find("dimension: FAIL"), std::string::npos);

  const auto conc = dir / "conc.json";
  std::ofstream(conc) << json{{"params", {{"k", 2}, {"p", 0.45}}},
                              {"seed", 1},
                              {"realizations", 4},
                              {"sections", {"concentration"}}}
                             .dump();
  EXPECT_EQ(call({"experiment", "--config", conc.string()}).code, kUsage);
  EXPECT_EQ(call({"experiment", "--config", conc.string(), "--dry-run"}).code, kUsage);
  fs::remove_all(dir);
}

TEST(Cli, UsageAndHelp) {
  EXPECT_EQ(call({}).code, kUsage);
  EXPECT_EQ(call({"frobnicate"}).code, kUsage);
  EXPECT_EQ(call({"generate", "--bogus"}).code, kUsage);
  const auto help = call({"--help"});
  EXPECT_EQ(help.code, kOk);
  EXPECT_NE(help.out.find("generate"), std::string::npos);
  EXPECT_EQ(call({"density", "--help"}).code, kOk);
}

}  // namespace
}  // namespace fracperc::cli
