#pragma once

#include "mdcp/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mdcp {

struct SummaryRow {
  std::string suite;
  std::string method;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0; // sample SD; 0 for a single run
  std::size_t count = 0;
};

/// Mean and sample SD per (suite, method, metric), in order of first appearance.
std::vector<SummaryRow> aggregateReports(const std::vector<RunReport>& rows);

/// `suite,method,run,seed,alpha,overall_cov,worst_cov,cov_src_0..K-1,mean_size,wall_ms`.
std::string runsCsv(const std::vector<RunReport>& rows);
nlohmann::json runsJson(const std::vector<RunReport>& rows);
std::vector<RunReport> runsFromJson(const nlohmann::json& j);

std::string summaryCsv(const std::vector<SummaryRow>& rows);
nlohmann::json summaryJson(const std::vector<SummaryRow>& rows);

/// Long format `suite,method,run,metric,value` for plotting.
std::string longCsv(const std::vector<RunReport>& rows);

/// Writes config.json, runs.csv, runs.json, summary.csv, summary.json and long.csv.
void writeReports(const std::filesystem::path& dir, const nlohmann::json& config, const std::vector<RunReport>& rows);

struct ReportCheck {
  std::size_t rowsChecked = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

/// Re-checks metric identities in a report directory: worst case equals the
/// per-source minimum, overall coverage equals the test-count-weighted mean,
/// rates lie in [0,1], and summary.json matches a fresh aggregation.
ReportCheck verifyReportDir(const std::filesystem::path& dir);
ReportCheck verifyRuns(const std::vector<RunReport>& rows);

} // namespace mdcp
