#include "mdcp/harness.hpp"

#include "mdcp/conformal.hpp"
#include "mdcp/error.hpp"
#include "mdcp/regsets.hpp"
#include "mdcp/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

namespace mdcp {

namespace {

using Clock = std::chrono::steady_clock;

double msSince(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Runs f, prefixing any library error with the stage name.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + " failed: " + e.what());
  }
}

/// Accumulates coverage and size per test source.
struct Tally {
  explicit Tally(std::size_t K) : covered(K, 0), count(K, 0) {}

  void add(std::size_t k, bool hit, double size) {
    covered[k] += hit ? 1 : 0;
    count[k] += 1;
    sizeSum += size;
    ++total;
  }

  MethodResult finish(std::string method) const {
    MethodResult r;
    r.method = std::move(method);
    r.testCounts = count;
    r.perSourceCoverage.resize(count.size());
    for (std::size_t k = 0; k < count.size(); ++k)
      r.perSourceCoverage[k] = count[k] ? static_cast<double>(covered[k]) / static_cast<double>(count[k]) : 0.0;
    r.meanSetSize = total ? sizeSum / static_cast<double>(total) : 0.0;
    finalizeMetrics(r);
    return r;
  }

  std::vector<std::size_t> covered, count;
  double sizeSum = 0.0;
  std::size_t total = 0;
};

/// Baseline nonconformity score, lower is more conforming.
double baselineScore(const ConditionalModels& models, std::size_t k, std::span<const double> x, double y,
                     const TaskKind& task) {
  if (task.isClassification()) return -models.classifiers()[k].classProb(x, static_cast<std::uint32_t>(y));
  const auto& g = models.gaussians()[k];
  return std::abs(y - g.mu(x)) / g.sigma(x);
}

/// The deterministic p-value counts calibration scores at or below the test
/// score, so it expects scores oriented with larger meaning more conforming.
double oriented(double s, bool randomized) { return randomized ? s : -s; }

CalibrationBank baselineBank(const RunContext& ctx, bool randomized) {
  const auto& calib = ctx.folds.calib;
  std::vector<std::vector<double>> scores(calib.K());
  for (std::size_t k = 0; k < calib.K(); ++k) {
    const auto& src = calib.source(k);
    for (std::size_t i = 0; i < src.n(); ++i) {
      const auto x = rowVector(src.x, static_cast<Eigen::Index>(i));
      scores[k].push_back(oriented(baselineScore(ctx.models, k, x, src.label(i), calib.task()), randomized));
    }
  }
  return CalibrationBank(std::move(scores));
}

/// Acceptance of a standardized residual v for the deterministic regression
/// baseline: accepted iff v <= radius.
double deterministicRadius(const CalibrationBank& bank, std::size_t k, double alpha) {
  const auto& s = bank.scores(k); // -V, ascending
  const double n1 = static_cast<double>(s.size()) + 1.0;
  if (1.0 / n1 >= alpha) return std::numeric_limits<double>::infinity();
  // p(-v) is nonincreasing in v; the largest accepted V is the radius.
  double radius = -std::numeric_limits<double>::infinity();
  for (double sv : s)
    if (pValueDeterministic(bank, k, sv) >= alpha) radius = std::max(radius, -sv);
  return radius;
}

/// Single-source regression acceptance region for standardized residuals.
struct Radius {
  double r = 0.0;
  bool closed = true;
  bool empty = false;

  bool accepts(double v) const { return !empty && (closed ? v <= r : v < r); }
};

Radius randomizedRadius(const CalibrationBank& bank, std::size_t k, double alpha, double u) {
  const RandomizedQuantile q = empiricalRandomizedQuantile(bank, k, alpha, u);
  switch (q.kind) {
    case RandomizedQuantile::Kind::MinusInfinity: return {std::numeric_limits<double>::infinity(), true, false};
    case RandomizedQuantile::Kind::PlusInfinity: return {0.0, false, true};
    case RandomizedQuantile::Kind::Finite: break;
  }
  // Accept v iff -v >= value (closed) or -v > value (open).
  const double r = -q.value;
  if (r < 0.0 || (r == 0.0 && !q.closed)) return {0.0, false, true};
  return {r, q.closed, false};
}

/// Shared evaluation for baseline-src-k (sources = {k}) and baseline-agg (all sources).
MethodResult runBaseline(const RunContext& ctx, double alpha, const BaselineOptions& opts,
                         const std::vector<std::size_t>& use, std::string name) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  const auto t0 = Clock::now();
  const auto& task = ctx.folds.calib.task();
  const CalibrationBank bank = stage("calibration", [&] { return baselineBank(ctx, opts.randomized); });
  const auto& test = ctx.folds.test;
  const std::size_t K = test.K();
  Tally tally(K);

  std::vector<double> detRadius(K, 0.0);
  if (!task.isClassification() && !opts.randomized)
    for (auto k : use) detRadius[k] = deterministicRadius(bank, k, alpha);

  for (std::size_t t = 0; t < K; ++t) {
    const auto& src = test.source(t);
    for (std::size_t i = 0; i < src.n(); ++i) {
      const auto x = rowVector(src.x, static_cast<Eigen::Index>(i));
      const double y = src.label(i);
      std::vector<double> u;
      if (opts.randomized) u = uniformsFor(ctx.seed, t, i, K);
      if (task.isClassification()) {
        const std::uint32_t C = task.numClasses;
        std::vector<bool> in(C, false);
        for (auto k : use) {
          const auto probs = ctx.models.classifiers()[k].probabilities(x);
          for (std::uint32_t c = 0; c < C; ++c) {
            const double s = oriented(-probs[c], opts.randomized);
            const double p = opts.randomized ? pValueRandomized(bank, k, s, u[k]) : pValueDeterministic(bank, k, s);
            if (p >= alpha) in[c] = true;
          }
        }
        const auto size = static_cast<double>(std::count(in.begin(), in.end(), true));
        tally.add(t, in[static_cast<std::size_t>(y)], size);
      } else {
        std::vector<Interval> parts;
        bool hit = false;
        for (auto k : use) {
          const auto& g = ctx.models.gaussians()[k];
          const double mu = g.mu(x), sigma = g.sigma(x);
          Radius rad;
          if (opts.randomized) rad = randomizedRadius(bank, k, alpha, u[k]);
          else if (std::isinf(detRadius[k]) && detRadius[k] < 0.0) rad = {0.0, false, true};
          else rad = {detRadius[k], true, false};
          if (rad.empty) continue;
          hit = hit || rad.accepts(std::abs(y - mu) / sigma);
          parts.push_back({mu - rad.r * sigma, mu + rad.r * sigma});
        }
        tally.add(t, hit, IntervalUnion::fromIntervals(std::move(parts)).totalLength());
      }
    }
  }
  MethodResult r = tally.finish(std::move(name));
  r.wallMs = msSince(t0);
  r.diagnostics["pvalues"] = opts.randomized ? "randomized" : "deterministic";
  return r;
}

void appendLabels(const MultiSourceData& d, std::vector<double>& out) {
  for (const auto& s : d.sources()) out.insert(out.end(), s.reals().begin(), s.reals().end());
}

/// Splits each source of `data` in half: first half calibrates, second half tests.
std::pair<MultiSourceData, MultiSourceData> mimicSplit(const MultiSourceData& data, std::uint64_t seed) {
  std::vector<SourceDataset> calib, test;
  for (std::size_t k = 0; k < data.K(); ++k) {
    const auto& src = data.source(k);
    std::vector<std::size_t> order(src.n());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed, kMimicStream).substream(k);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t half = order.size() / 2;
    if (half == 0 || half == order.size()) throw Error(Errc::EmptySource, "training fold too small for a mimic split");
    calib.push_back(subset(src, std::span<const std::size_t>(order.data(), half)));
    test.push_back(subset(src, std::span<const std::size_t>(order.data() + half, order.size() - half)));
  }
  return {MultiSourceData(data.task(), std::move(calib)), MultiSourceData(data.task(), std::move(test))};
}

} // namespace

std::string MethodSpec::name() const {
  switch (kind) {
    case Kind::Mdcp: return "mdcp";
    case Kind::MdcpTuned: return "mdcp-tuned";
    case Kind::BaselineAgg: return "baseline-agg";
    case Kind::BaselineSrc: return "baseline-src-" + std::to_string(source);
  }
  return "unknown";
}

MethodSpec MethodSpec::parse(const std::string& name) {
  if (name == "mdcp") return {Kind::Mdcp, 0};
  if (name == "mdcp-tuned") return {Kind::MdcpTuned, 0};
  if (name == "baseline-agg") return {Kind::BaselineAgg, 0};
  const std::string prefix = "baseline-src-";
  if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
    const std::string digits = name.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return {Kind::BaselineSrc, static_cast<std::size_t>(std::stoul(digits))};
  }
  throw Error(Errc::BadConfig, "unknown method '" + name + "'");
}

void finalizeMetrics(MethodResult& r) {
  if (r.perSourceCoverage.empty()) throw Error(Errc::InvalidData, "no sources in result");
  r.worstCaseCoverage = *std::min_element(r.perSourceCoverage.begin(), r.perSourceCoverage.end());
  std::size_t total = 0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < r.perSourceCoverage.size(); ++k) {
    const std::size_t n = k < r.testCounts.size() ? r.testCounts[k] : 0;
    total += n;
    weighted += static_cast<double>(n) * r.perSourceCoverage[k];
  }
  r.overallCoverage = total ? weighted / static_cast<double>(total) : 0.0;
}

RunContext RunContext::prepare(const MultiSourceData& data, const SplitPlan& plan, const ModelConfig& cfg,
                               std::uint64_t seed) {
  const auto t0 = Clock::now();
  Folds folds = stage("split", [&] { return split(data, plan); });
  ConditionalModels models = stage("model-fit", [&] { return ConditionalModels::fit(folds.train, cfg); });
  return RunContext{std::move(folds), std::move(models), seed, msSince(t0)};
}

MethodResult runBaselineSrc(std::size_t k, const RunContext& ctx, double alpha, const BaselineOptions& opts) {
  if (k >= ctx.folds.calib.K()) throw Error(Errc::UnknownSource, "baseline source " + std::to_string(k) + " out of range");
  return runBaseline(ctx, alpha, opts, {k}, MethodSpec{MethodSpec::Kind::BaselineSrc, k}.name());
}

MethodResult runBaselineAgg(const RunContext& ctx, double alpha, const BaselineOptions& opts) {
  std::vector<std::size_t> all(ctx.folds.calib.K());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return runBaseline(ctx, alpha, opts, all, "baseline-agg");
}

std::vector<double> uniformsFor(std::uint64_t seed, std::size_t source, std::size_t row, std::size_t K) {
  Rng rng = Rng(seed, kUniformStream).substream(source).substream(row);
  std::vector<double> u(K);
  for (auto& v : u) v = rng.uniform();
  return u;
}

MethodResult evaluateShared(const MultiSourceData& calib, const MultiSourceData& test, const ConditionalModels& models,
                            const LambdaModel& lambda, double alpha, std::uint64_t uniformSeed, std::size_t gridSize,
                            const std::vector<double>& gridLabels) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  const TaskKind& task = calib.task();
  const std::size_t K = calib.K();
  if (lambda.K() != K || models.K() != K) throw Error(Errc::InvalidData, "lambda, models and data disagree on K");

  // Shared score s = -h with h = sum_k lambda_k f_k.
  std::vector<double> f(K);
  auto hAt = [&](std::span<const double> x, const Eigen::VectorXd& lam, double y) {
    models.densities(x, y, f);
    double h = 0.0;
    for (std::size_t k = 0; k < K; ++k) h += lam(static_cast<Eigen::Index>(k)) * f[k];
    return h;
  };

  std::vector<std::vector<double>> scores(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& src = calib.source(k);
    for (std::size_t i = 0; i < src.n(); ++i) {
      const auto x = rowVector(src.x, static_cast<Eigen::Index>(i));
      scores[k].push_back(-hAt(x, lambda.lambdaAt(x), src.label(i)));
    }
  }
  const CalibrationBank bank(std::move(scores));

  std::optional<YGrid> grid;
  if (!task.isClassification()) grid = buildGrid(gridLabels, gridSize);

  Tally tally(K);
  for (std::size_t t = 0; t < test.K(); ++t) {
    const auto& src = test.source(t);
    for (std::size_t i = 0; i < src.n(); ++i) {
      const auto x = rowVector(src.x, static_cast<Eigen::Index>(i));
      const double y = src.label(i);
      const PValueMode mode = PValueMode::withUniforms(uniformsFor(uniformSeed, t, i, K));
      const Eigen::VectorXd lam = lambda.lambdaAt(x);
      if (task.isClassification()) {
        const Eigen::MatrixXd table = models.classTable(x);
        const Eigen::RowVectorXd h = lam.transpose() * table;
        std::vector<double> s(static_cast<std::size_t>(h.size()));
        for (Eigen::Index c = 0; c < h.size(); ++c) s[static_cast<std::size_t>(c)] = -h(c);
        const auto set = classificationSetFromTable(s, 1, task.numClasses, bank, alpha, mode);
        const bool hit = std::find(set.begin(), set.end(), static_cast<std::uint32_t>(y)) != set.end();
        tally.add(t, hit, static_cast<double>(set.size()));
      } else {
        const std::size_t M = grid->size();
        std::unique_ptr<bool[]> accepted(new bool[M]);
        for (std::size_t j = 0; j < M; ++j) {
          const double s = -hAt(x, lam, grid->point(j));
          accepted[j] = aggregatedPValue(bank, mode, std::span<const double>(&s, 1)) >= alpha;
        }
        const IntervalUnion set = gridSearchSet(*grid, std::span<const bool>(accepted.get(), M));
        tally.add(t, set.contains(y), set.totalLength());
      }
    }
  }
  MethodResult r = tally.finish("mdcp");
  if (grid) {
    r.diagnostics["grid_delta"] = grid->delta;
    r.diagnostics["grid_size"] = grid->size();
  }
  return r;
}

MethodResult runMDCP(const RunContext& ctx, double alpha, const MdcpOptions& opts) {
  const auto t0 = Clock::now();
  const auto& cfg = opts.dual;
  const SourceDataset pooled = pool(ctx.folds.train);
  const SplineBasis basis = SplineBasis::fit(pooled.x, cfg.numKnots, cfg.degree, cfg.bias);
  const DualTrainingSet data = stage("dual-features", [&] { return DualTrainingSet::build(basis, pooled, ctx.models); });
  const std::uint64_t lambdaSeed = Rng(ctx.seed, kLambdaStream).next64();
  const bool regression = !ctx.folds.calib.task().isClassification();
  std::vector<double> trainLabels, labels;
  if (regression) {
    appendLabels(ctx.folds.train, trainLabels);
    labels = trainLabels;
    appendLabels(ctx.folds.calib, labels);
  }

  DualTrainConfig finalCfg = cfg;
  nlohmann::json tuneInfo;
  if (opts.tune) {
    const auto mimic = mimicSplit(ctx.folds.train, ctx.seed);
    const TuneResult tr = stage("penalty-tuning", [&] {
      return tunePenalty(data, basis, alpha, cfg, lambdaSeed, [&](const LambdaModel& lm) {
        return evaluateShared(mimic.first, mimic.second, ctx.models, lm, alpha, ctx.seed ^ kMimicStream, opts.gridSize,
                              trainLabels)
            .meanSetSize;
      });
    });
    finalCfg.penaltyGamma = tr.gamma;
    tuneInfo = {{"gamma", tr.gamma}, {"grid", tr.grid}, {"mimic_sizes", tr.mimicSizes}};
  }

  const TrainResult trained = stage("lambda-training", [&] { return trainLambda(data, basis, alpha, finalCfg, lambdaSeed); });
  MethodResult r = stage("evaluation", [&] {
    return evaluateShared(ctx.folds.calib, ctx.folds.test, ctx.models, trained.model, alpha, ctx.seed, opts.gridSize,
                          labels);
  });
  r.method = opts.tune ? "mdcp-tuned" : "mdcp";
  r.wallMs = msSince(t0);
  r.diagnostics["gamma"] = finalCfg.penaltyGamma;
  r.diagnostics["epochs"] = trained.epochObjective.size() - 1;
  r.diagnostics["best_epoch"] = trained.bestEpoch;
  r.diagnostics["objective"] = trained.bestSoFar.back();
  if (opts.tune) r.diagnostics["tuning"] = tuneInfo;
  return r;
}

void ExperimentConfig::validate() const {
  if (numRuns < 1) throw Error(Errc::BadConfig, "runs must be at least 1");
  if (methods.empty()) throw Error(Errc::BadConfig, "at least one method required");
  if (threads < 1) throw Error(Errc::BadConfig, "threads must be at least 1");
  if (gridSize < 2) throw Error(Errc::BadConfig, "gridSize must be at least 2");
  if (!(suite.alpha > 0.0 && suite.alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  if (!dataPath) suite.validate();
  split.validate();
  models.trees.validate();
  dual.validate();
  for (const auto& m : methods)
    if (m.kind == MethodSpec::Kind::BaselineSrc && !dataPath && m.source >= suite.K)
      throw Error(Errc::BadConfig, "method " + m.name() + " refers to a missing source");
}

nlohmann::json ExperimentConfig::toJson() const {
  nlohmann::json methodNames = nlohmann::json::array();
  for (const auto& m : methods) methodNames.push_back(m.name());
  nlohmann::json j = {
      {"name", name},
      {"suite",
       {{"name", suiteName(suite.suite)},
        {"task", suite.classification ? "classification" : "regression"},
        {"K", suite.K},
        {"d", suite.d},
        {"C", suite.C},
        {"tau", suite.tau},
        {"deltaX", suite.deltaX},
        {"nPerSource", suite.nPerSource},
        {"alpha", suite.alpha},
        {"standardize", suite.standardize}}},
      {"methods", methodNames},
      {"runs", numRuns},
      {"seed", seed},
      {"split", {{"train", split.train}, {"calib", split.calib}, {"test", split.test}}},
      {"trees",
       {{"rounds", models.trees.numRounds},
        {"maxDepth", models.trees.maxDepth},
        {"learningRate", models.trees.learningRate},
        {"minLeaf", models.trees.minLeafSize},
        {"maxBins", models.trees.maxBins}}},
      {"models",
       {{"varianceFolds", models.varianceFolds},
        {"sigmaFloor", models.sigmaFloor},
        {"pooled", models.pooled == PooledMode::Fit ? "fit" : "mixture"},
        {"calibrate", models.classifier.calibrate},
        {"calibrationFolds", models.classifier.calibrationFolds}}},
      {"dual",
       {{"batchSize", dual.batchSize},
        {"maxEpochs", dual.maxEpochs},
        {"stepSize", dual.stepSize},
        {"beta1", dual.beta1},
        {"beta2", dual.beta2},
        {"adamEps", dual.adamEps},
        {"patience", dual.earlyStopPatience},
        {"denomFloor", dual.denomFloor},
        {"gamma", dual.penaltyGamma},
        {"penaltyGrid", dual.penaltyGrid},
        {"numKnots", dual.numKnots},
        {"degree", dual.degree},
        {"bias", dual.bias}}},
      {"baselineRandomized", baselineRandomized},
      {"gridSize", gridSize},
      {"threads", threads},
      {"timing", recordTiming},
  };
  if (dataPath) j["data"] = dataPath->string();
  return j;
}

ExperimentConfig ExperimentConfig::fromJson(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("suite")) {
      const auto& s = j.at("suite");
      c.suite.suite = parseSuite(s.value("name", std::string("linear")));
      const std::string task = s.value("task", std::string("classification"));
      if (task != "classification" && task != "regression") throw Error(Errc::BadConfig, "task must be classification or regression");
      c.suite.classification = task == "classification";
      c.suite.K = s.value("K", c.suite.K);
      c.suite.d = s.value("d", c.suite.d);
      c.suite.C = s.value("C", c.suite.C);
      c.suite.tau = s.value("tau", c.suite.tau);
      c.suite.deltaX = s.value("deltaX", c.suite.deltaX);
      c.suite.nPerSource = s.value("nPerSource", c.suite.nPerSource);
      c.suite.alpha = s.value("alpha", c.suite.alpha);
      c.suite.standardize = s.value("standardize", c.suite.standardize);
    }
    if (j.contains("data")) c.dataPath = j.at("data").get<std::string>();
    const std::size_t K = c.suite.K;
    for (const auto& m : j.value("methods", std::vector<std::string>{"mdcp", "baseline-agg"})) {
      if (m == "baseline-src") {
        for (std::size_t k = 0; k < K; ++k) c.methods.push_back({MethodSpec::Kind::BaselineSrc, k});
      } else {
        c.methods.push_back(MethodSpec::parse(m));
      }
    }
    c.numRuns = j.value("runs", c.numRuns);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.train = s.value("train", c.split.train);
      c.split.calib = s.value("calib", c.split.calib);
      c.split.test = s.value("test", c.split.test);
    }
    if (j.contains("trees")) {
      const auto& t = j.at("trees");
      c.models.trees.numRounds = t.value("rounds", c.models.trees.numRounds);
      c.models.trees.maxDepth = t.value("maxDepth", c.models.trees.maxDepth);
      c.models.trees.learningRate = t.value("learningRate", c.models.trees.learningRate);
      c.models.trees.minLeafSize = t.value("minLeaf", c.models.trees.minLeafSize);
      c.models.trees.maxBins = t.value("maxBins", c.models.trees.maxBins);
    }
    if (j.contains("models")) {
      const auto& m = j.at("models");
      c.models.varianceFolds = m.value("varianceFolds", c.models.varianceFolds);
      c.models.sigmaFloor = m.value("sigmaFloor", c.models.sigmaFloor);
      const std::string pooled = m.value("pooled", std::string("fit"));
      if (pooled != "fit" && pooled != "mixture") throw Error(Errc::BadConfig, "pooled must be fit or mixture");
      c.models.pooled = pooled == "fit" ? PooledMode::Fit : PooledMode::Mixture;
      c.models.classifier.calibrate = m.value("calibrate", c.models.classifier.calibrate);
      c.models.classifier.calibrationFolds = m.value("calibrationFolds", c.models.classifier.calibrationFolds);
    }
    if (j.contains("dual")) {
      const auto& d = j.at("dual");
      c.dual.batchSize = d.value("batchSize", c.dual.batchSize);
      c.dual.maxEpochs = d.value("maxEpochs", c.dual.maxEpochs);
      c.dual.stepSize = d.value("stepSize", c.dual.stepSize);
      c.dual.beta1 = d.value("beta1", c.dual.beta1);
      c.dual.beta2 = d.value("beta2", c.dual.beta2);
      c.dual.adamEps = d.value("adamEps", c.dual.adamEps);
      c.dual.earlyStopPatience = d.value("patience", c.dual.earlyStopPatience);
      c.dual.denomFloor = d.value("denomFloor", c.dual.denomFloor);
      c.dual.penaltyGamma = d.value("gamma", c.dual.penaltyGamma);
      c.dual.penaltyGrid = d.value("penaltyGrid", c.dual.penaltyGrid);
      c.dual.numKnots = d.value("numKnots", c.dual.numKnots);
      c.dual.degree = d.value("degree", c.dual.degree);
      c.dual.bias = d.value("bias", c.dual.bias);
    }
    c.baselineRandomized = j.value("baselineRandomized", c.baselineRandomized);
    c.gridSize = j.value("gridSize", c.gridSize);
    c.threads = j.value("threads", c.threads);
    c.recordTiming = j.value("timing", c.recordTiming);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadConfig, std::string("config: ") + e.what());
  }
}

std::uint64_t runSeed(std::uint64_t seed, std::size_t run) {
  return mix64(mix64(seed) ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(run) + 1)));
}

std::vector<MethodResult> runMethods(const RunContext& ctx, const ExperimentConfig& cfg) {
  const double alpha = cfg.suite.alpha;
  const BaselineOptions bopts{cfg.baselineRandomized};
  std::vector<MethodResult> out;
  for (const auto& m : cfg.methods) {
    MethodResult r;
    switch (m.kind) {
      case MethodSpec::Kind::Mdcp: r = runMDCP(ctx, alpha, {cfg.dual, cfg.gridSize, false}); break;
      case MethodSpec::Kind::MdcpTuned: r = runMDCP(ctx, alpha, {cfg.dual, cfg.gridSize, true}); break;
      case MethodSpec::Kind::BaselineAgg: r = runBaselineAgg(ctx, alpha, bopts); break;
      case MethodSpec::Kind::BaselineSrc: r = runBaselineSrc(m.source, ctx, alpha, bopts); break;
    }
    if (!cfg.recordTiming) r.wallMs = 0.0;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunReport> runExperiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  std::optional<MultiSourceData> fixedData;
  if (cfg.dataPath) fixedData = loadCsv(*cfg.dataPath, cfg.suite.task());
  const std::string suite = cfg.dataPath ? cfg.dataPath->filename().string() : suiteName(cfg.suite.suite);

  std::vector<std::vector<RunReport>> perRun(cfg.numRuns);
  std::atomic<std::size_t> next{0};
  std::mutex logMutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t run = next++; run < cfg.numRuns; run = next++) {
      try {
        const std::uint64_t seed = runSeed(cfg.seed, run);
        MultiSourceData data = fixedData ? *fixedData : [&] {
          Rng hpRng(seed, 1);
          const DrawnHyperparams hp = sampleHyperparams(cfg.suite, hpRng);
          Rng dataRng(seed, 2);
          return generate(hp, cfg.suite, dataRng);
        }();
        SplitPlan plan = cfg.split;
        plan.seed = seed;
        const RunContext ctx = RunContext::prepare(data, plan, cfg.models, seed);
        for (auto& r : runMethods(ctx, cfg)) perRun[run].push_back({suite, run, seed, cfg.suite.alpha, std::move(r)});
        if (log) {
          std::lock_guard lock(logMutex);
          *log << "run " << run + 1 << "/" << cfg.numRuns << " done\n";
        }
      } catch (...) {
        std::lock_guard lock(logMutex);
        if (!failure) failure = std::current_exception();
        next = cfg.numRuns;
      }
    }
  };

  const auto nThreads = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cfg.numRuns));
  if (nThreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nThreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<RunReport> rows;
  for (auto& r : perRun)
    for (auto& row : r) rows.push_back(std::move(row));
  return rows;
}

} // namespace mdcp
