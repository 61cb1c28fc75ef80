#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace imitlab {

using Json = nlohmann::ordered_json;

/// thm2-reduction, l1-uniqueness, bc-scaling-det, bc-det-vs-stoch,
/// subsample-compare, overfit-reg, dv-check, online-complete-vs-sub.
const std::vector<std::string>& experiment_names();

/// Full default configuration document for one experiment.
Json default_config(std::string_view experiment);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  /// "dotted.key=value"; the value is parsed as JSON, or taken as a string.
  std::vector<std::string> overrides;
};

/// Precedence (lowest first): built-in defaults, file document, --seeds,
/// --override, --out. Unknown keys are rejected. The output directory is
/// resolved as --out, then the "out" key, then $IMITLAB_OUT_ROOT/<name>,
/// then runs/<name>.
Json resolve_config(const Json& file_config, const RunOptions& options);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

struct ResultRow {
  std::string condition;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct ErrorRow {
  std::string condition;
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentReport {
  std::string experiment;
  std::filesystem::path out_dir;
  std::vector<ResultRow> rows;
  std::vector<ErrorRow> errors;
  bool pass = false;
  Json details;
};

/// Runs a resolved configuration across its seeds (concurrently, with
/// per-seed isolation) and writes into the output directory:
///   config.json   resolved configuration
///   results.csv   condition,seed,value
///   summary.csv   condition,n,mean,std,min,max
///   verdict.json  {"experiment", "verdict": "PASS"|"FAIL", "details"}
///   errors.csv    condition,seed,error (only when some seed failed)
///   traces/       per-run training traces
ExperimentReport run_experiment(const Json& config);

}  // namespace imitlab
