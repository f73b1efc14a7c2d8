#pragma once

#include "mdcp/data.hpp"
#include "mdcp/dgp.hpp"
#include "mdcp/dualopt.hpp"
#include "mdcp/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mdcp {

struct MethodSpec {
  enum class Kind { Mdcp, MdcpTuned, BaselineAgg, BaselineSrc };

  Kind kind = Kind::Mdcp;
  std::size_t source = 0; // BaselineSrc only

  std::string name() const;
  /// Accepts mdcp, mdcp-tuned, baseline-agg, baseline-src-<k>.
  static MethodSpec parse(const std::string& name);
  bool operator==(const MethodSpec&) const = default;
};

struct MethodResult {
  std::string method;
  std::vector<double> perSourceCoverage;
  std::vector<std::size_t> testCounts;
  double overallCoverage = 0.0;
  double worstCaseCoverage = 0.0;
  double meanSetSize = 0.0;
  double wallMs = 0.0;
  nlohmann::json diagnostics = nlohmann::json::object();
};

/// Folds plus the conditional models fitted on the training fold; shared by all
/// methods of one run.
struct RunContext {
  Folds folds;
  ConditionalModels models;
  std::uint64_t seed = 0;
  double modelFitMs = 0.0;

  static RunContext prepare(const MultiSourceData& data, const SplitPlan& plan, const ModelConfig& cfg,
                            std::uint64_t seed);
};

struct BaselineOptions {
  bool randomized = false;
};

struct MdcpOptions {
  DualTrainConfig dual;
  std::size_t gridSize = 100;
  bool tune = false;
};

/// Standard split conformal set from source k, evaluated on the whole test fold.
MethodResult runBaselineSrc(std::size_t k, const RunContext& ctx, double alpha, const BaselineOptions& opts = {});

/// Union of the K single-source sets.
MethodResult runBaselineAgg(const RunContext& ctx, double alpha, const BaselineOptions& opts = {});

/// Trains lambda on the training fold, calibrates the shared score on every
/// source and evaluates the max-p set.
MethodResult runMDCP(const RunContext& ctx, double alpha, const MdcpOptions& opts = {});

inline constexpr std::uint64_t kUniformStream = 0x756e69666f726d; // "uniform"
inline constexpr std::uint64_t kLambdaStream = 0x6c616d626461;    // "lambda"
inline constexpr std::uint64_t kMimicStream = 0x6d696d6963;       // "mimic"

/// The K randomization uniforms of test row `row` of test source `source`.
std::vector<double> uniformsFor(std::uint64_t seed, std::size_t source, std::size_t row, std::size_t K);

/// Max-p set with a given lambda, calibrated on `calib` and evaluated on `test`.
/// Uniforms are drawn from `uniformSeed`, one per (test point, source).
MethodResult evaluateShared(const MultiSourceData& calib, const MultiSourceData& test, const ConditionalModels& models,
                            const LambdaModel& lambda, double alpha, std::uint64_t uniformSeed, std::size_t gridSize,
                            const std::vector<double>& gridLabels);

/// Per-source coverage, worst case, test-count-weighted overall coverage.
void finalizeMetrics(MethodResult& r);

struct ExperimentConfig {
  std::string name = "experiment";
  SuiteConfig suite;
  /// When set, data are read from this CSV instead of being simulated.
  std::optional<std::filesystem::path> dataPath;
  std::vector<MethodSpec> methods;
  std::size_t numRuns = 1;
  std::uint64_t seed = 1;
  SplitPlan split;
  ModelConfig models;
  DualTrainConfig dual;
  bool baselineRandomized = false;
  std::size_t gridSize = 100;
  int threads = 1;
  bool recordTiming = true;

  void validate() const;
  nlohmann::json toJson() const;
  static ExperimentConfig fromJson(const nlohmann::json& j);
};

struct RunReport {
  std::string suite;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  MethodResult result;
};

/// Per-run seed; a pure function of (seed, run).
std::uint64_t runSeed(std::uint64_t seed, std::size_t run);

/// Runs every method on every run. Rows are ordered by run, then by method
/// order in the config. `log` receives one line per finished run.
std::vector<RunReport> runExperiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Methods for one prepared run, in the given order.
std::vector<MethodResult> runMethods(const RunContext& ctx, const ExperimentConfig& cfg);

} // namespace mdcp
