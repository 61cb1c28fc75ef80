#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace imitlab {

struct SummaryRow {
  std::string condition;
  int n = 0;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct SummaryResult {
  /// Conditions in order of first appearance.
  std::vector<SummaryRow> rows;
  /// One message per malformed input row; those rows are skipped.
  std::vector<std::string> row_errors;
};

/// Aggregates a `condition,seed,value` CSV stream.
SummaryResult summarize_results(std::istream& in);

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Reads dir/results.csv and writes dir/summary.csv.
SummaryResult summarize_dir(const std::filesystem::path& dir);

struct VerdictEntry {
  std::filesystem::path file;
  std::string experiment;
  bool pass = false;
};

struct VerifyResult {
  std::vector<VerdictEntry> verdicts;
  std::vector<std::string> errors;

  bool all_pass() const;
};

/// Collects every verdict.json at or below dir (sorted by path).
VerifyResult verify_dir(const std::filesystem::path& dir);

}  // namespace imitlab
