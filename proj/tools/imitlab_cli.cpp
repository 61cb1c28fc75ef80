#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "imitlab/error.hpp"
#include "imitlab/experiments.hpp"
#include "imitlab/stats.hpp"
#include "imitlab/summary.hpp"

using namespace imitlab;

namespace {

int cmd_run(const std::string& path, const std::string& out, const std::string& seeds,
            const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  Json file;
  try {
    file = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  RunOptions options;
  if (!out.empty()) options.out_dir = out;
  if (!seeds.empty()) options.seeds = parse_seed_list(seeds);
  options.overrides = overrides;
  const Json cfg = resolve_config(file, options);
  const ExperimentReport rep = run_experiment(cfg);
  for (const auto& e : rep.errors)
    std::cerr << "error [" << e.condition << ", seed " << e.seed << "]: " << e.message << "\n";
  std::cout << rep.experiment << ": " << (rep.pass ? "PASS" : "FAIL") << "  " << rep.details.dump()
            << "\n  -> " << rep.out_dir.string() << "\n";
  return rep.pass ? 0 : 1;
}

int cmd_summarize(const std::string& dir) {
  const SummaryResult res = summarize_dir(dir);
  for (const auto& e : res.row_errors) std::cerr << "skipped: " << e << "\n";
  write_summary_csv(std::cout, res.rows);
  return 0;
}

int cmd_verify(const std::string& dir) {
  const VerifyResult res = verify_dir(dir);
  for (const auto& v : res.verdicts)
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.experiment << "  " << v.file.string() << "\n";
  for (const auto& e : res.errors) std::cerr << "error: " << e << "\n";
  return res.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imitlab: tabular imitation-learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out, seeds, dir;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--out", out, "Output directory");
  run->add_option("--seeds", seeds, "Comma-separated seeds");
  run->add_option("--override", overrides, "key=value (dotted keys)")->take_all();

  auto* summarize = app.add_subcommand("summarize", "Aggregate results.csv of a run directory");
  summarize->add_option("dir", dir)->required();
  auto* verify = app.add_subcommand("verify", "Check every verdict.json under a directory");
  verify->add_option("dir", dir)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, out, seeds, overrides);
    if (*summarize) return cmd_summarize(dir);
    if (*verify) return cmd_verify(dir);
  } catch (const Error& e) {
    std::cerr << "imitlab: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "imitlab: unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
