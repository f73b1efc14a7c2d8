#include "mdcp/report.hpp"

#include "mdcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mdcp {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::size_t maxSources(const std::vector<RunReport>& rows) {
  std::size_t K = 0;
  for (const auto& r : rows) K = std::max(K, r.result.perSourceCoverage.size());
  return K;
}

/// (metric, value) pairs of one row, in report order.
std::vector<std::pair<std::string, double>> metricsOf(const MethodResult& r) {
  std::vector<std::pair<std::string, double>> m{{"overall_cov", r.overallCoverage}, {"worst_cov", r.worstCaseCoverage}};
  for (std::size_t k = 0; k < r.perSourceCoverage.size(); ++k)
    m.emplace_back("cov_src_" + std::to_string(k), r.perSourceCoverage[k]);
  m.emplace_back("mean_size", r.meanSetSize);
  return m;
}

void writeFile(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed for " + p.string());
}

nlohmann::json readJson(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::Io, "cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Io, p.string() + ": " + e.what());
  }
}

} // namespace

std::vector<SummaryRow> aggregateReports(const std::vector<RunReport>& rows) {
  if (rows.empty()) throw Error(Errc::EmptyVector, "no report rows to aggregate");
  std::vector<SummaryRow> out;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> values;
  for (const auto& r : rows) {
    for (const auto& [metric, v] : metricsOf(r.result)) {
      auto key = std::make_tuple(r.suite, r.result.method, metric);
      auto [it, inserted] = values.try_emplace(key);
      if (inserted) out.push_back({r.suite, r.result.method, metric, 0.0, 0.0, 0});
      it->second.push_back(v);
    }
  }
  for (auto& s : out) {
    const auto& v = values.at(std::make_tuple(s.suite, s.method, s.metric));
    s.count = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

std::string runsCsv(const std::vector<RunReport>& rows) {
  const std::size_t K = maxSources(rows);
  std::ostringstream os;
  os << "suite,method,run,seed,alpha,overall_cov,worst_cov";
  for (std::size_t k = 0; k < K; ++k) os << ",cov_src_" << k;
  os << ",mean_size,wall_ms\n";
  for (const auto& r : rows) {
    const auto& m = r.result;
    os << r.suite << ',' << m.method << ',' << r.run << ',' << r.seed << ',' << num(r.alpha) << ','
       << num(m.overallCoverage) << ',' << num(m.worstCaseCoverage);
    for (std::size_t k = 0; k < K; ++k) os << ',' << (k < m.perSourceCoverage.size() ? num(m.perSourceCoverage[k]) : "");
    os << ',' << num(m.meanSetSize) << ',' << num(m.wallMs) << '\n';
  }
  return os.str();
}

nlohmann::json runsJson(const std::vector<RunReport>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& m = r.result;
    arr.push_back({{"suite", r.suite},
                   {"method", m.method},
                   {"run", r.run},
                   {"seed", r.seed},
                   {"alpha", r.alpha},
                   {"overall_cov", m.overallCoverage},
                   {"worst_cov", m.worstCaseCoverage},
                   {"cov_src", m.perSourceCoverage},
                   {"test_counts", m.testCounts},
                   {"mean_size", m.meanSetSize},
                   {"wall_ms", m.wallMs},
                   {"diagnostics", m.diagnostics}});
  }
  return arr;
}

std::vector<RunReport> runsFromJson(const nlohmann::json& j) {
  try {
    std::vector<RunReport> rows;
    for (const auto& e : j) {
      RunReport r;
      r.suite = e.at("suite").get<std::string>();
      r.run = e.at("run").get<std::size_t>();
      r.seed = e.at("seed").get<std::uint64_t>();
      r.alpha = e.at("alpha").get<double>();
      r.result.method = e.at("method").get<std::string>();
      r.result.overallCoverage = e.at("overall_cov").get<double>();
      r.result.worstCaseCoverage = e.at("worst_cov").get<double>();
      r.result.perSourceCoverage = e.at("cov_src").get<std::vector<double>>();
      r.result.testCounts = e.at("test_counts").get<std::vector<std::size_t>>();
      r.result.meanSetSize = e.at("mean_size").get<double>();
      r.result.wallMs = e.value("wall_ms", 0.0);
      r.result.diagnostics = e.value("diagnostics", nlohmann::json::object());
      rows.push_back(std::move(r));
    }
    return rows;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("runs.json: ") + e.what());
  }
}

std::string summaryCsv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "suite,method,metric,mean,sd,count\n";
  for (const auto& s : rows)
    os << s.suite << ',' << s.method << ',' << s.metric << ',' << num(s.mean) << ',' << num(s.sd) << ',' << s.count << '\n';
  return os.str();
}

nlohmann::json summaryJson(const std::vector<SummaryRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : rows)
    arr.push_back({{"suite", s.suite}, {"method", s.method}, {"metric", s.metric}, {"mean", s.mean}, {"sd", s.sd}, {"count", s.count}});
  return arr;
}

std::string longCsv(const std::vector<RunReport>& rows) {
  std::ostringstream os;
  os << "suite,method,run,metric,value\n";
  for (const auto& r : rows)
    for (const auto& [metric, v] : metricsOf(r.result))
      os << r.suite << ',' << r.result.method << ',' << r.run << ',' << metric << ',' << num(v) << '\n';
  return os.str();
}

void writeReports(const std::filesystem::path& dir, const nlohmann::json& config, const std::vector<RunReport>& rows) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
  const auto summary = aggregateReports(rows);
  writeFile(dir / "config.json", config.dump(2) + "\n");
  writeFile(dir / "runs.csv", runsCsv(rows));
  writeFile(dir / "runs.json", runsJson(rows).dump(2) + "\n");
  writeFile(dir / "summary.csv", summaryCsv(summary));
  writeFile(dir / "summary.json", summaryJson(summary).dump(2) + "\n");
  writeFile(dir / "long.csv", longCsv(rows));
}

ReportCheck verifyRuns(const std::vector<RunReport>& rows) {
  constexpr double tol = 1e-12;
  ReportCheck check;
  for (const auto& r : rows) {
    const auto& m = r.result;
    const std::string tag = m.method + " run " + std::to_string(r.run) + ": ";
    ++check.rowsChecked;
    if (m.perSourceCoverage.empty()) {
      check.failures.push_back(tag + "no per-source coverage");
      continue;
    }
    for (double c : m.perSourceCoverage)
      if (!(c >= 0.0 && c <= 1.0)) check.failures.push_back(tag + "per-source coverage outside [0,1]");
    if (!(m.overallCoverage >= 0.0 && m.overallCoverage <= 1.0)) check.failures.push_back(tag + "overall coverage outside [0,1]");
    const double worst = *std::min_element(m.perSourceCoverage.begin(), m.perSourceCoverage.end());
    if (std::abs(worst - m.worstCaseCoverage) > tol) check.failures.push_back(tag + "worst case differs from per-source minimum");
    if (m.testCounts.size() != m.perSourceCoverage.size()) {
      check.failures.push_back(tag + "test counts missing");
    } else {
      MethodResult copy = m;
      finalizeMetrics(copy);
      if (std::abs(copy.overallCoverage - m.overallCoverage) > tol)
        check.failures.push_back(tag + "overall coverage differs from the weighted per-source mean");
    }
    if (!(m.meanSetSize >= 0.0)) check.failures.push_back(tag + "negative or NaN mean size");
  }
  return check;
}

ReportCheck verifyReportDir(const std::filesystem::path& dir) {
  const auto rows = runsFromJson(readJson(dir / "runs.json"));
  ReportCheck check = verifyRuns(rows);
  if (std::filesystem::exists(dir / "summary.json") && !rows.empty()) {
    const auto stored = readJson(dir / "summary.json");
    const auto fresh = aggregateReports(rows);
    if (stored.size() != fresh.size()) {
      check.failures.push_back("summary.json has " + std::to_string(stored.size()) + " rows, expected " +
                               std::to_string(fresh.size()));
    } else {
      for (std::size_t i = 0; i < fresh.size(); ++i) {
        const auto& s = stored[i];
        const bool same = s.value("method", "") == fresh[i].method && s.value("metric", "") == fresh[i].metric &&
                          std::abs(s.value("mean", 0.0) - fresh[i].mean) <= 1e-12 &&
                          std::abs(s.value("sd", 0.0) - fresh[i].sd) <= 1e-12;
        if (!same) check.failures.push_back("summary row " + std::to_string(i) + " does not match runs.json");
      }
    }
  }
  return check;
}

} // namespace mdcp
