#include "mdcp/dgp.hpp"
#include "mdcp/error.hpp"
#include "mdcp/harness.hpp"
#include "mdcp/oracle.hpp"
#include "mdcp/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

nlohmann::json readJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mdcp::Error(mdcp::Errc::Io, "cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw mdcp::Error(mdcp::Errc::BadConfig, path + ": " + e.what());
  }
}

std::vector<std::string> splitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::string methods;
  std::optional<int> threads;
  bool noTiming = false;
  bool quiet = false;
};

int cmdRun(const RunArgs& a) {
  nlohmann::json j = readJsonFile(a.config);
  if (a.runs) j["runs"] = *a.runs;
  if (a.seed) j["seed"] = *a.seed;
  if (!a.methods.empty()) j["methods"] = splitList(a.methods);
  if (a.threads) j["threads"] = *a.threads;
  if (const char* env = std::getenv("MDCP_THREADS")) {
    try {
      j["threads"] = std::stoi(env);
    } catch (const std::exception&) {
      throw mdcp::Error(mdcp::Errc::BadConfig, "MDCP_THREADS must be an integer");
    }
  }
  if (a.noTiming) j["timing"] = false;
  const auto cfg = mdcp::ExperimentConfig::fromJson(j);
  const auto rows = mdcp::runExperiment(cfg, a.quiet ? nullptr : &std::cerr);
  mdcp::writeReports(a.out, cfg.toJson(), rows);
  std::cout << mdcp::summaryCsv(mdcp::aggregateReports(rows));
  return 0;
}

int cmdOracle(const std::string& path) {
  const auto inst = mdcp::DiscreteInstance::fromJson(readJsonFile(path));
  const auto cert = inst.marginal() ? mdcp::solveMarginalDual(inst) : mdcp::solveCondDual(inst);
  const auto report = mdcp::verifyCertificate(cert, inst);
  nlohmann::json out = {{"certificate", cert.toJson()}, {"verification", report.toJson()}};
  std::cout << out.dump(2) << "\n";
  return report.allPassed() ? 0 : 1;
}

int cmdVerify(const std::string& dir) {
  const auto check = mdcp::verifyReportDir(dir);
  for (const auto& f : check.failures) std::cout << "FAIL " << f << "\n";
  std::cout << (check.ok() ? "ok" : "failed") << ": " << check.rowsChecked << " rows checked\n";
  return check.ok() ? 0 : 1;
}

int cmdDump(const std::string& configPath, std::size_t run, const std::string& out) {
  const auto cfg = mdcp::ExperimentConfig::fromJson(readJsonFile(configPath));
  const std::uint64_t seed = mdcp::runSeed(cfg.seed, run);
  mdcp::Rng hpRng(seed, 1);
  const auto hp = mdcp::sampleHyperparams(cfg.suite, hpRng);
  mdcp::Rng dataRng(seed, 2);
  mdcp::saveCsv(mdcp::generate(hp, cfg.suite, dataRng), out);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source conformal prediction experiments"};
  app.require_subcommand(1);

  RunArgs run;
  auto* runCmd = app.add_subcommand("run", "Run an experiment config and write reports");
  runCmd->add_option("--config", run.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  runCmd->add_option("--out", run.out, "Output directory")->required();
  runCmd->add_option("--runs", run.runs, "Override the number of runs");
  runCmd->add_option("--seed", run.seed, "Override the base seed");
  runCmd->add_option("--methods", run.methods, "Comma-separated method list");
  runCmd->add_option("--threads", run.threads, "Worker threads (MDCP_THREADS overrides)");
  runCmd->add_flag("--no-timing", run.noTiming, "Write wall_ms = 0 so reports are byte-identical");
  runCmd->add_flag("--quiet", run.quiet, "No progress output");

  std::string instance;
  auto* oracleCmd = app.add_subcommand("oracle", "Solve and certify a discrete oracle instance");
  oracleCmd->add_option("--instance", instance, "Instance JSON")->required()->check(CLI::ExistingFile);

  std::string reportDir;
  auto* verifyCmd = app.add_subcommand("verify", "Re-check metric identities of a report directory");
  verifyCmd->add_option("--report", reportDir, "Report directory")->required()->check(CLI::ExistingDirectory);

  std::string dumpConfig, dumpOut;
  std::size_t dumpRun = 0;
  auto* dumpCmd = app.add_subcommand("dump-data", "Write the simulated data of one run as CSV");
  dumpCmd->add_option("--config", dumpConfig, "Experiment JSON")->required()->check(CLI::ExistingFile);
  dumpCmd->add_option("--run", dumpRun, "Run index");
  dumpCmd->add_option("--out", dumpOut, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*runCmd) return cmdRun(run);
    if (*oracleCmd) return cmdOracle(instance);
    if (*verifyCmd) return cmdVerify(reportDir);
    if (*dumpCmd) return cmdDump(dumpConfig, dumpRun, dumpOut);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
