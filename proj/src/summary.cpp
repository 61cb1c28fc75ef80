#include "imitlab/summary.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "imitlab/error.hpp"
#include "imitlab/stats.hpp"

namespace imitlab {

namespace fs = std::filesystem;

namespace {

bool parse_double(std::string_view text, double& out) {
  if (text == "nan" || text == "inf" || text == "-inf") {
    out = text == "nan" ? std::numeric_limits<double>::quiet_NaN()
                        : (text == "inf" ? std::numeric_limits<double>::infinity()
                                         : -std::numeric_limits<double>::infinity());
    return true;
  }
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

SummaryResult summarize_results(std::istream& in) {
  SummaryResult result;
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "condition,seed,value") continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      result.row_errors.push_back("line " + std::to_string(line_no) + ": expected 3 fields");
      continue;
    }
    const std::string condition = line.substr(0, c1);
    const std::string_view seed(line.data() + c1 + 1, c2 - c1 - 1);
    unsigned long long seed_value = 0;
    const auto [sp, sec] = std::from_chars(seed.data(), seed.data() + seed.size(), seed_value);
    double value = 0.0;
    if (condition.empty() || sec != std::errc() || sp != seed.data() + seed.size() ||
        !parse_double(std::string_view(line).substr(c2 + 1), value)) {
      result.row_errors.push_back("line " + std::to_string(line_no) + ": malformed row '" + line + "'");
      continue;
    }
    auto [it, inserted] = values.try_emplace(condition);
    if (inserted) order.push_back(condition);
    it->second.push_back(value);
  }
  for (const auto& condition : order) {
    const auto& xs = values[condition];
    SummaryRow row;
    row.condition = condition;
    row.n = static_cast<int>(xs.size());
    row.mean = mean(xs);
    row.std = population_std(xs);
    row.min = *std::min_element(xs.begin(), xs.end());
    row.max = *std::max_element(xs.begin(), xs.end());
    result.rows.push_back(row);
  }
  return result;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "condition,n,mean,std,min,max\n";
  for (const auto& r : rows)
    os << r.condition << ',' << r.n << ',' << format_double(r.mean) << ',' << format_double(r.std)
       << ',' << format_double(r.min) << ',' << format_double(r.max) << '\n';
}

SummaryResult summarize_dir(const fs::path& dir) {
  std::ifstream in(dir / "results.csv");
  if (!in) throw DataError("cannot read " + (dir / "results.csv").string());
  SummaryResult result = summarize_results(in);
  std::ofstream out(dir / "summary.csv", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "summary.csv").string());
  write_summary_csv(out, result.rows);
  return result;
}

bool VerifyResult::all_pass() const {
  if (verdicts.empty() || !errors.empty()) return false;
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass; });
}

VerifyResult verify_dir(const fs::path& dir) {
  VerifyResult result;
  if (!fs::is_directory(dir)) {
    result.errors.push_back("not a directory: " + dir.string());
    return result;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() == "verdict.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      std::ifstream in(file);
      const auto doc = nlohmann::json::parse(in);
      const std::string verdict = doc.at("verdict").get<std::string>();
      if (verdict != "PASS" && verdict != "FAIL") throw DataError("verdict must be PASS or FAIL");
      result.verdicts.push_back({file, doc.value("experiment", std::string()), verdict == "PASS"});
    } catch (const std::exception& e) {
      result.errors.push_back(file.string() + ": " + e.what());
    }
  }
  if (files.empty()) result.errors.push_back("no verdict.json under " + dir.string());
  return result;
}

}  // namespace imitlab
