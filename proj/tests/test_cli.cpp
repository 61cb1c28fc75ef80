#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imitlab/error.hpp"
#include "imitlab/experiments.hpp"
#include "imitlab/stats.hpp"
#include "imitlab/summary.hpp"

using namespace imitlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("imitlab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Json small_dv(const fs::path& out) {
  RunOptions o;
  o.out_dir = out;
  o.seeds = std::vector<std::uint64_t>{1, 2, 3};
  o.overrides = {"pairs=10", "descent_iterations=200"};
  return resolve_config(Json{{"experiment", "dv-check"}}, o);
}

}  // namespace

TEST(Config, DefaultsAndNames) {
  EXPECT_EQ(experiment_names().size(), 8u);
  for (const auto& name : experiment_names()) EXPECT_EQ(default_config(name)["experiment"], name);
  EXPECT_EQ(default_config("dv-check")["seeds"], Json({2021, 2022, 2023, 2024, 2025}));
  EXPECT_EQ(default_config("bc-scaling-det")["seeds"].size(), 50u);
  EXPECT_THROW(default_config("nope"), ConfigError);
}

TEST(Config, Precedence) {
  Json file{{"experiment", "subsample-compare"}, {"m", 4}, {"seeds", {7}}, {"gda", {{"steps", 10}}}};
  RunOptions o;
  Json cfg = resolve_config(file, o);
  EXPECT_EQ(cfg["m"], 4);
  EXPECT_EQ(cfg["seeds"], Json({7}));
  EXPECT_EQ(cfg["gda"]["steps"], 10);
  EXPECT_EQ(cfg["gda"]["nu_lr"], 0.1);  // untouched sibling survives the merge

  o.seeds = std::vector<std::uint64_t>{1, 2};
  o.overrides = {"m=6", "gda.steps=20", "env.family=det_grid"};
  o.out_dir = "/tmp/x";
  file["out"] = "/tmp/y";
  cfg = resolve_config(file, o);
  EXPECT_EQ(cfg["seeds"], Json({1, 2}));
  EXPECT_EQ(cfg["m"], 6);
  EXPECT_EQ(cfg["gda"]["steps"], 20);
  EXPECT_EQ(cfg["env"]["family"], "det_grid");
  EXPECT_EQ(cfg["out"], "/tmp/x");
}

TEST(Config, OutRootFromEnvironment) {
  ::setenv("IMITLAB_OUT_ROOT", "/tmp/root", 1);
  EXPECT_EQ(resolve_config(Json{{"experiment", "dv-check"}}, {})["out"], "/tmp/root/dv-check");
  ::unsetenv("IMITLAB_OUT_ROOT");
  EXPECT_EQ(resolve_config(Json{{"experiment", "dv-check"}}, {})["out"], "runs/dv-check");
}

TEST(Config, Rejections) {
  EXPECT_THROW(resolve_config(Json{{"experiment", "dv-check"}, {"bogus", 1}}, {}), ConfigError);
  EXPECT_THROW(resolve_config(Json{{"experiment", "overfit-reg"}, {"bc", {{"lr", 1}}}}, {}), ConfigError);
  EXPECT_THROW(resolve_config(Json{{"experiment", "nope"}}, {}), ConfigError);
  EXPECT_THROW(resolve_config(Json{{"seeds", {1}}}, {}), ConfigError);
  EXPECT_THROW(resolve_config(Json{{"experiment", "dv-check"}, {"seeds", Json::array()}}, {}), ConfigError);
  RunOptions o;
  o.overrides = {"nokey"};
  EXPECT_THROW(resolve_config(Json{{"experiment", "dv-check"}}, o), ArgumentError);
  o.overrides = {"gda.steps=3"};
  EXPECT_THROW(resolve_config(Json{{"experiment", "dv-check"}}, o), ConfigError);
}

TEST(Config, EmptySeedsFailsBeforeWork) {
  const fs::path out = scratch("empty_seeds");
  Json cfg = default_config("dv-check");
  cfg["seeds"] = Json::array();
  cfg["out"] = out.string();
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Config, SeedList) {
  EXPECT_EQ(parse_seed_list("1,2,30"), (std::vector<std::uint64_t>{1, 2, 30}));
  EXPECT_THROW(parse_seed_list("1,,2"), ArgumentError);
  EXPECT_THROW(parse_seed_list("x"), ArgumentError);
}

TEST(Summary, KnownValues) {
  std::istringstream in("condition,seed,value\na,1,1\na,2,2\na,3,3\na,4,4\na,5,5\nb,1,7\n");
  const SummaryResult r = summarize_results(in);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].condition, "a");
  EXPECT_DOUBLE_EQ(r.rows[0].mean, 3.0);
  EXPECT_NEAR(r.rows[0].std, std::sqrt(2.0), 1e-15);
  EXPECT_EQ(r.rows[0].n, 5);
  EXPECT_DOUBLE_EQ(r.rows[1].mean, 7.0);
  EXPECT_DOUBLE_EQ(r.rows[1].std, 0.0);
}

TEST(Summary, MalformedRowsReportedOthersKept) {
  std::istringstream in("condition,seed,value\na,1,1\nbroken\na,x,2\na,3,zz\na,4,3\n");
  const SummaryResult r = summarize_results(in);
  EXPECT_EQ(r.row_errors.size(), 3u);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].n, 2);
  EXPECT_DOUBLE_EQ(r.rows[0].mean, 2.0);
}

TEST(Stats, FormatRoundTrips) {
  for (double x : {0.1, 1.0 / 3, 1e-300, 123456789.123456789, -2.5}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_NEAR(log_log_slope(std::vector<double>{1, 2, 4}, std::vector<double>{8, 4, 2}), -1.0, 1e-15);
}

TEST(Run, WritesFilesAndIsByteReproducible) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const ExperimentReport ra = run_experiment(small_dv(a));
  run_experiment(small_dv(b));
  EXPECT_TRUE(ra.pass);
  for (const char* f : {"results.csv", "summary.csv", "verdict.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_FALSE(fs::exists(a / "errors.csv"));
  // 3 conditions, every seed once per condition.
  const std::string summary = slurp(a / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);
  EXPECT_NE(summary.find("max_abs_error,3,"), std::string::npos);
}

TEST(Run, ThreadCountDoesNotChangeOutput) {
  const fs::path a = scratch("threads_a"), b = scratch("threads_b");
  Json ca = small_dv(a), cb = small_dv(b);
  ca["threads"] = 1;
  cb["threads"] = 4;
  run_experiment(ca);
  run_experiment(cb);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
}

TEST(Run, SeedErrorsAreIsolated) {
  const fs::path out = scratch("errors");
  RunOptions o;
  o.out_dir = out;
  o.seeds = std::vector<std::uint64_t>{1, 2};
  o.overrides = {"instances=1", "env.num_states=40", "env.horizon=30", "env.num_initial_states=1"};
  const ExperimentReport rep = run_experiment(resolve_config(Json{{"experiment", "l1-uniqueness"}}, o));
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.errors.size(), 2u);
  EXPECT_TRUE(fs::exists(out / "errors.csv"));
  EXPECT_NE(slurp(out / "verdict.json").find("\"FAIL\""), std::string::npos);
}

TEST(Verify, CollectsVerdicts) {
  const fs::path root = scratch("verify");
  Json pass_cfg = small_dv(root / "one");
  run_experiment(pass_cfg);
  EXPECT_TRUE(verify_dir(root).all_pass());
  fs::create_directories(root / "two");
  std::ofstream(root / "two" / "verdict.json") << R"({"experiment":"x","verdict":"FAIL"})";
  const VerifyResult r = verify_dir(root);
  EXPECT_EQ(r.verdicts.size(), 2u);
  EXPECT_FALSE(r.all_pass());
  EXPECT_FALSE(verify_dir(scratch("verify_empty")).all_pass());
}

TEST(Run, UnwritableOutput) {
  Json cfg = small_dv("/proc/imitlab_cannot_write");
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}
