#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "stagger/cli.hpp"

using namespace stagger;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = cli::run(std::move(args), {out, err});
  r.out = out.str();
  r.err = err.str();
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stagger_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void put(const std::string& name, const std::string& content) const { text::write_file(path(name), content); }

  fs::path dir_;
};

std::string slurp(const std::string& p) { return text::read_file(p); }

}  // namespace

TEST_F(Cli, NonAbsorbingTreatmentExitCode) {
  put("p.csv", "unit,period,outcome,treated\na,1,0,0\na,2,1,1\na,3,2,0\nb,1,0,0\nb,2,0,0\nb,3,0,0\n");
  const auto r = run({"validate", "--panel", path("p.csv")});
  EXPECT_EQ(r.code, 11);
  EXPECT_NE(r.err.find("NonAbsorbingTreatment"), std::string::npos);
}

TEST_F(Cli, ParseErrorsAreInvalidArgument) {
  EXPECT_EQ(run({"simulate", "--scenario", "parallel-homogeneous"}).code, 4);
  EXPECT_EQ(run({"estimate", "--panel", "x.csv", "--seed", "1", "--control", "sometimes"}).code, 4);
  EXPECT_EQ(run({}).code, 4);
  EXPECT_EQ(run({"validate", "--panel", path("missing.csv")}).code, static_cast<int>(ErrorCode::kIo));
}

TEST_F(Cli, ValidateSummary) {
  put("p.csv",
      "unit,period,outcome,treated\na,1,0,0\na,2,1,1\na,3,2,1\nb,1,0,0\nb,2,0,0\nb,3,0,0\nc,1,0,1\nc,2,0,1\n");
  const auto r = run({"validate", "--panel", path("p.csv"), "--lags", "1", "--leads", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("units: 3"), std::string::npos);
  EXPECT_NE(r.out.find("balanced: no"), std::string::npos);
  EXPECT_NE(r.out.find("always treated: 1"), std::string::npos);
  EXPECT_NE(r.out.find("switchers: 1"), std::string::npos);
  EXPECT_NE(r.out.find("  0: 1\n  1: 1\n"), std::string::npos);
}

TEST_F(Cli, SimulateThenEstimateRecoversConstantEffect) {
  auto r = run({"simulate", "--scenario", "parallel-homogeneous", "--seed", "5", "--out", path("sim")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto* f : {"panel.csv", "truth.csv", "config.txt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "sim" / f)) << f;
  }
  r = run({"estimate", "--panel", path("sim/panel.csv"), "--lags", "5", "--leads", "3", "--reps", "49", "--seed",
           "2", "--out", path("est")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("static twfe: 0.300"), std::string::npos) << r.out;
  const auto robust = read_series_csv(slurp(path("est/robust.csv")));
  int checked = 0;
  for (const auto& e : robust.entries) {
    if (e.reference) continue;
    ASSERT_TRUE(e.identified);
    EXPECT_NEAR(e.estimate, e.event_time >= 0 ? 0.3 : 0.0, 1e-10);
    EXPECT_LT(e.se, 1e-9);
    ++checked;
  }
  EXPECT_EQ(checked, 6 + 3);
  const auto twfe = read_series_csv(slurp(path("est/twfe.csv")));
  for (const auto& e : twfe.entries) {
    if (!e.reference && e.identified) EXPECT_NEAR(e.estimate, e.event_time >= 0 ? 0.3 : 0.0, 1e-8);
  }
  EXPECT_TRUE(fs::exists(dir_ / "est" / "comparison.csv"));
  EXPECT_NE(slurp(path("est/twfe_weights.csv")).find("unit,period,weight\n"), std::string::npos);
  EXPECT_NE(r.out.find("twfe weights: "), std::string::npos);
  EXPECT_EQ(slurp(path("est/robust.csv")).rfind("# manifest: {", 0), 0u);
}

TEST_F(Cli, SimulateOverridesAndConfigFile) {
  auto r = run({"simulate", "--scenario", "cohort-heterogeneous", "--set", "n_units=30", "--set", "noise_sd=0.5",
                "--seed", "9", "--out", path("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = config_from_text(slurp(path("a/config.txt")));
  EXPECT_EQ(cfg.n_units, 30u);
  EXPECT_EQ(cfg.noise_sd, 0.5);
  EXPECT_EQ(cfg.seed, 9u);
  r = run({"simulate", "--config", path("a/config.txt"), "--seed", "9", "--out", path("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
  EXPECT_EQ(body(slurp(path("a/panel.csv"))), body(slurp(path("b/panel.csv"))));
  EXPECT_EQ(run({"simulate", "--scenario", "cohort-heterogeneous", "--set", "never_share=0.9", "--seed", "1", "--out",
                 path("c")})
                .code,
            static_cast<int>(ErrorCode::kInvalidConfig));
}

TEST_F(Cli, CrossSectionPrintsFormattedRow) {
  // 342 rail and 1000 other units, log output alternating +-a around the
  // group means 1.114 and 0, so the HC1 SE is about 0.106.
  const double a = 1.688;
  std::string plants = "unit,sector,year,production_value,employment\n";
  std::string rail = "unit,rail\n";
  char buf[64];
  for (int i = 0; i < 1342; ++i) {
    const bool treated = i < 342;
    const double y = (treated ? 1.114 : 0.0) + (i % 2 == 0 ? a : -a);
    const std::string id = "d" + std::to_string(i);
    std::snprintf(buf, sizeof buf, "%.17g", std::exp(y));
    plants += id + ",3,1915," + buf + ",10\n";
    plants += id + ",3,1920,999,10\n";
    rail += id + "," + (treated ? "1" : "0") + "\n";
  }
  put("plants.csv", plants);
  put("rail.csv", rail);
  const auto r = run({"crosssec", "--plants", path("plants.csv"), "--rail", path("rail.csv"), "--out", path("x")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("all sectors: 1.11 (0.11), n=1342\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("sector 3: 1.11 (0.11), n=1342\n"), std::string::npos);
  EXPECT_NE(slurp(path("x/crosssec.csv")).find("1.11 (0.11), n=1342"), std::string::npos);
}

TEST_F(Cli, SpilloverCommand) {
  ASSERT_EQ(run({"simulate", "--scenario", "neighbor-spillover", "--set", "noise_sd=0", "--seed", "4", "--out",
                 path("s")})
                .code,
            0);
  const auto r = run({"spillover", "--panel", path("s/panel.csv"), "--adjacency", path("s/adjacency.csv"), "--lags",
                      "4", "--leads", "2", "--reps", "19", "--seed", "1", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = read_series_csv(slurp(path("o/spillover.csv")));
  for (const auto& e : s.entries) {
    if (!e.reference && e.identified) EXPECT_NEAR(e.estimate, e.event_time >= 0 ? 0.1 : 0.0, 1e-10);
  }
  EXPECT_TRUE(fs::exists(dir_ / "o" / "matches.csv"));
}

TEST_F(Cli, CompareAndRerunAreReproducible) {
  ASSERT_EQ(run({"simulate", "--scenario", "cohort-heterogeneous", "--set", "noise_sd=0.2", "--seed", "3", "--out",
                 path("s")})
                .code,
            0);
  auto r = run({"estimate", "--panel", path("s/panel.csv"), "--lags", "6", "--leads", "2", "--reps", "29", "--seed",
                "11", "--threads", "2", "--out", path("e1")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"rerun", path("e1/manifest.json"), "--out", path("e2")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto* f : {"robust.csv", "twfe.csv", "twfe_weights.csv", "comparison.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(path(std::string("e1/") + f)), slurp(path(std::string("e2/") + f))) << f;
  }
  r = run({"compare", path("e1/robust.csv"), path("e1/twfe.csv"), "--out", path("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = slurp(path("c/compare.csv"));
  EXPECT_NE(table.find("source,estimator,event_time"), std::string::npos);
  EXPECT_NE(table.find(",twfe,"), std::string::npos);

  // A changed input is refused.
  put("s/panel.csv", slurp(path("s/panel.csv")) + "\n");
  EXPECT_EQ(run({"rerun", path("e1/manifest.json"), "--out", path("e3")}).code,
            static_cast<int>(ErrorCode::kInvalidArgument));
}

TEST_F(Cli, BinaryReportsExitCodes) {
  const std::string bin = STAGGER_CLI_PATH;
  EXPECT_EQ(std::system((bin + " scenarios > " + path("list.txt")).c_str()), 0);
  EXPECT_NE(slurp(path("list.txt")).find("paper-scale"), std::string::npos);
  const int status = std::system((bin + " simulate --scenario nope --seed 1 --out " + path("z") + " 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(status), static_cast<int>(ErrorCode::kInvalidConfig));
}
