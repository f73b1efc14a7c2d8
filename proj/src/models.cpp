#include "mdcp/models.hpp"

#include "mdcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace mdcp {

using nlohmann::json;

IsotonicMap IsotonicMap::fit(std::vector<std::pair<double, double>> points) {
  std::sort(points.begin(), points.end());
  struct Block {
    double sum, weight, xEnd;
  };
  std::vector<Block> blocks;
  for (const auto& [px, py] : points) {
    blocks.push_back({py, 1.0, px});
    while (blocks.size() > 1) {
      const auto& b = blocks[blocks.size() - 1];
      const auto& a = blocks[blocks.size() - 2];
      if (a.sum / a.weight <= b.sum / b.weight) break;
      Block merged{a.sum + b.sum, a.weight + b.weight, b.xEnd};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  IsotonicMap m;
  for (const auto& b : blocks) {
    m.x.push_back(b.xEnd);
    m.y.push_back(b.sum / b.weight);
  }
  return m;
}

double IsotonicMap::operator()(double v) const {
  if (x.empty()) return v;
  const auto it = std::lower_bound(x.begin(), x.end(), v);
  if (it == x.end()) return y.back();
  return y[static_cast<std::size_t>(it - x.begin())];
}

namespace {

json ensembleToJson(const TreeEnsemble& e) {
  json trees = json::array();
  for (const auto& t : e.trees)
    trees.push_back({{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right},
                     {"value", t.value}});
  return {{"base", e.base}, {"trees", trees}};
}

TreeEnsemble ensembleFromJson(const json& j) {
  TreeEnsemble e;
  e.base = j.at("base").get<double>();
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    t.at("feature").get_to(tree.feature);
    t.at("threshold").get_to(tree.threshold);
    t.at("left").get_to(tree.left);
    t.at("right").get_to(tree.right);
    t.at("value").get_to(tree.value);
    const auto n = tree.feature.size();
    if (n == 0 || tree.threshold.size() != n || tree.left.size() != n || tree.right.size() != n || tree.value.size() != n)
      throw Error(Errc::InvalidData, "malformed tree arrays");
    e.trees.push_back(std::move(tree));
  }
  return e;
}

void checkVersion(const json& j, std::string_view kind) {
  if (!j.contains("version")) throw Error(Errc::InvalidData, "model json lacks a version field");
  if (j.at("version").get<int>() != kModelJsonVersion) throw Error(Errc::InvalidData, "unsupported model json version");
  if (j.at("kind").get<std::string>() != kind) throw Error(Errc::InvalidData, "expected model kind " + std::string(kind));
}

std::vector<double> rawProbabilities(const std::vector<TreeEnsemble>& logits, std::span<const double> x) {
  std::vector<double> p(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) p[c] = logits[c].predict(x);
  softmaxInPlace(p);
  return p;
}

void clampAndNormalize(std::vector<double>& p) {
  double z = 0.0;
  for (double& v : p) {
    v = std::clamp(v, 1e-8, 1.0);
    z += v;
  }
  for (double& v : p) v /= z;
}

} // namespace

ClassifierModel::ClassifierModel(std::vector<TreeEnsemble> logits, std::vector<IsotonicMap> calibration)
    : logits_(std::move(logits)), calibration_(std::move(calibration)) {
  if (!calibration_.empty() && calibration_.size() != logits_.size())
    throw Error(Errc::InvalidData, "one calibration map per class required");
}

std::vector<double> ClassifierModel::probabilities(std::span<const double> x) const {
  std::vector<double> p = rawProbabilities(logits_, x);
  for (std::size_t c = 0; c < calibration_.size(); ++c) p[c] = calibration_[c](p[c]);
  clampAndNormalize(p);
  return p;
}

double ClassifierModel::classProb(std::span<const double> x, std::uint32_t y) const {
  if (y >= numClasses()) throw Error(Errc::ClassOutOfRange, "class " + std::to_string(y) + " out of range");
  return probabilities(x)[y];
}

json ClassifierModel::toJson() const {
  json ens = json::array();
  for (const auto& e : logits_) ens.push_back(ensembleToJson(e));
  json cal = json::array();
  for (const auto& m : calibration_) cal.push_back({{"x", m.x}, {"y", m.y}});
  return {{"version", kModelJsonVersion}, {"kind", "classifier"}, {"numClasses", numClasses()},
          {"logits", ens}, {"calibration", cal}};
}

ClassifierModel ClassifierModel::fromJson(const json& j) {
  checkVersion(j, "classifier");
  std::vector<TreeEnsemble> logits;
  for (const auto& e : j.at("logits")) logits.push_back(ensembleFromJson(e));
  if (logits.size() != j.at("numClasses").get<std::size_t>()) throw Error(Errc::InvalidData, "numClasses mismatch");
  std::vector<IsotonicMap> cal;
  for (const auto& m : j.at("calibration")) cal.push_back({m.at("x").get<std::vector<double>>(), m.at("y").get<std::vector<double>>()});
  return ClassifierModel(std::move(logits), std::move(cal));
}

ClassifierModel fitClassifier(const SourceDataset& train, std::uint32_t numClasses, const BoostedTreesConfig& cfg,
                              const ClassifierOptions& opts) {
  const auto& y = train.classes();
  const std::set<std::uint32_t> distinct(y.begin(), y.end());
  if (distinct.size() < 2) throw Error(Errc::DegenerateLabels, "fewer than 2 distinct classes in training data");
  for (auto c : distinct)
    if (c >= numClasses) throw Error(Errc::ClassOutOfRange, "training label exceeds numClasses");

  auto logits = fitSoftmax(train.x, y, numClasses, cfg);
  if (!opts.calibrate) return ClassifierModel(std::move(logits));

  // Cross-validated isotonic calibration on out-of-fold probabilities.
  const auto folds = static_cast<std::size_t>(std::max(2, opts.calibrationFolds));
  const std::size_t n = train.n();
  std::vector<std::vector<std::pair<double, double>>> pts(numClasses);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < n; ++i) (i % folds == f ? out : in).push_back(i);
    const SourceDataset part = subset(train, in);
    const std::set<std::uint32_t> partClasses(part.classes().begin(), part.classes().end());
    if (partClasses.size() < 2 || out.empty()) continue;
    const auto foldLogits = fitSoftmax(part.x, part.classes(), numClasses, cfg);
    for (auto i : out) {
      const auto p = rawProbabilities(foldLogits, rowVector(train.x, static_cast<Eigen::Index>(i)));
      for (std::uint32_t c = 0; c < numClasses; ++c) pts[c].emplace_back(p[c], y[i] == c ? 1.0 : 0.0);
    }
  }
  std::vector<IsotonicMap> cal;
  for (auto& p : pts) cal.push_back(IsotonicMap::fit(std::move(p)));
  return ClassifierModel(std::move(logits), std::move(cal));
}

GaussianWorkingModel::GaussianWorkingModel(TreeEnsemble mean, TreeEnsemble logVar, double sigmaFloor)
    : mean_(std::move(mean)), logVar_(std::move(logVar)), sigmaFloor_(sigmaFloor) {
  if (!(sigmaFloor_ > 0.0)) throw Error(Errc::BadConfig, "sigmaFloor must be positive");
}

double GaussianWorkingModel::sigma(std::span<const double> x) const {
  return std::max(sigmaFloor_, std::exp(0.5 * logVar_.predict(x)));
}

double GaussianWorkingModel::density(std::span<const double> x, double y) const {
  return gaussianDensity(y, mu(x), sigma(x));
}

double gaussianDensity(double y, double mu, double sigma) {
  const double z = (y - mu) / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

json GaussianWorkingModel::toJson() const {
  return {{"version", kModelJsonVersion}, {"kind", "gaussian"}, {"sigmaFloor", sigmaFloor_},
          {"mean", ensembleToJson(mean_)}, {"logVar", ensembleToJson(logVar_)}};
}

GaussianWorkingModel GaussianWorkingModel::fromJson(const json& j) {
  checkVersion(j, "gaussian");
  return GaussianWorkingModel(ensembleFromJson(j.at("mean")), ensembleFromJson(j.at("logVar")),
                              j.at("sigmaFloor").get<double>());
}

GaussianWorkingModel fitGaussian(const SourceDataset& train, const BoostedTreesConfig& cfg, int folds,
                                 double sigmaFloor, OofBookkeeping* bookkeeping) {
  if (folds < 2) throw Error(Errc::TooFewSamples, "at least 2 folds required");
  const std::size_t n = train.n();
  const auto F = static_cast<std::size_t>(folds);
  if (n < 2 * F) throw Error(Errc::TooFewSamples, "need at least 2 rows per fold");
  const auto& y = train.reals();

  TreeEnsemble mean = fitSquaredLoss(train.x, y, cfg);

  std::vector<double> target(n);
  const double floorLog = 2.0 * std::log(sigmaFloor);
  if (bookkeeping) {
    bookkeeping->foldOfRow.assign(n, 0);
    bookkeeping->meanTrainRows.assign(F, {});
  }
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < n; ++i) (i % F == f ? out : in).push_back(i);
    const SourceDataset part = subset(train, in);
    const TreeEnsemble foldMean = fitSquaredLoss(part.x, part.reals(), cfg);
    for (auto i : out) {
      const double r = y[i] - foldMean.predict(rowVector(train.x, static_cast<Eigen::Index>(i)));
      const double r2 = r * r;
      target[i] = r2 > 0.0 ? std::max(std::log(r2) + kLogChiSquareBias, floorLog) : floorLog;
      if (bookkeeping) bookkeeping->foldOfRow[i] = static_cast<int>(f);
    }
    if (bookkeeping) bookkeeping->meanTrainRows[f] = std::move(in);
  }
  TreeEnsemble logVar = fitSquaredLoss(train.x, target, cfg);
  return GaussianWorkingModel(std::move(mean), std::move(logVar), sigmaFloor);
}

ConditionalModels ConditionalModels::fit(const MultiSourceData& train, const ModelConfig& cfg) {
  ConditionalModels m;
  m.task_ = train.task();
  m.weights_ = train.weights();
  m.mode_ = cfg.pooled;
  const bool needPooled = cfg.pooled == PooledMode::Fit;
  if (m.task_.isClassification()) {
    for (const auto& s : train.sources())
      m.classifiers_.push_back(fitClassifier(s, m.task_.numClasses, cfg.trees, cfg.classifier));
    if (needPooled) m.pooledClassifier_ = fitClassifier(pool(train), m.task_.numClasses, cfg.trees, cfg.classifier);
  } else {
    for (const auto& s : train.sources())
      m.gaussians_.push_back(fitGaussian(s, cfg.trees, cfg.varianceFolds, cfg.sigmaFloor));
    if (needPooled) m.pooledGaussian_ = fitGaussian(pool(train), cfg.trees, cfg.varianceFolds, cfg.sigmaFloor);
  }
  return m;
}

ConditionalModels ConditionalModels::fromParts(TaskKind task, std::vector<ClassifierModel> classifiers,
                                               std::vector<GaussianWorkingModel> gaussians, std::vector<double> weights,
                                               PooledMode mode, std::optional<ClassifierModel> pooledClassifier,
                                               std::optional<GaussianWorkingModel> pooledGaussian) {
  ConditionalModels m;
  m.task_ = task;
  m.classifiers_ = std::move(classifiers);
  m.gaussians_ = std::move(gaussians);
  m.weights_ = std::move(weights);
  m.mode_ = mode;
  m.pooledClassifier_ = std::move(pooledClassifier);
  m.pooledGaussian_ = std::move(pooledGaussian);
  if (m.weights_.size() != m.K()) throw Error(Errc::InvalidData, "one weight per source required");
  if (mode == PooledMode::Fit && !m.pooledClassifier_ && !m.pooledGaussian_)
    throw Error(Errc::InvalidData, "pooled model missing");
  return m;
}

void ConditionalModels::densities(std::span<const double> x, double y, std::span<double> out) const {
  if (task_.isClassification()) {
    const auto c = static_cast<std::uint32_t>(y);
    for (std::size_t k = 0; k < classifiers_.size(); ++k) out[k] = classifiers_[k].classProb(x, c);
  } else {
    for (std::size_t k = 0; k < gaussians_.size(); ++k) out[k] = gaussians_[k].density(x, y);
  }
}

double ConditionalModels::pooledDensity(std::span<const double> x, double y) const {
  if (mode_ == PooledMode::Fit) {
    if (task_.isClassification()) return pooledClassifier_->classProb(x, static_cast<std::uint32_t>(y));
    return pooledGaussian_->density(x, y);
  }
  std::vector<double> f(K());
  densities(x, y, f);
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += weights_[k] * f[k];
  return s;
}

Eigen::MatrixXd ConditionalModels::classTable(std::span<const double> x) const {
  if (!task_.isClassification()) throw Error(Errc::InvalidData, "classTable needs a classification task");
  Eigen::MatrixXd t(static_cast<Eigen::Index>(K()), static_cast<Eigen::Index>(task_.numClasses));
  for (std::size_t k = 0; k < K(); ++k) {
    const auto p = classifiers_[k].probabilities(x);
    for (std::size_t c = 0; c < p.size(); ++c) t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = p[c];
  }
  return t;
}

std::vector<double> ConditionalModels::pooledClassProbs(std::span<const double> x) const {
  if (!task_.isClassification()) throw Error(Errc::InvalidData, "pooledClassProbs needs a classification task");
  if (mode_ == PooledMode::Fit) return pooledClassifier_->probabilities(x);
  std::vector<double> p(task_.numClasses, 0.0);
  for (std::size_t k = 0; k < K(); ++k) {
    const auto pk = classifiers_[k].probabilities(x);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += weights_[k] * pk[c];
  }
  return p;
}

void ConditionalModels::gaussianParams(std::span<const double> x, std::span<double> mu, std::span<double> sigma) const {
  for (std::size_t k = 0; k < gaussians_.size(); ++k) {
    mu[k] = gaussians_[k].mu(x);
    sigma[k] = gaussians_[k].sigma(x);
  }
}

json ConditionalModels::toJson() const {
  json j = {{"version", kModelJsonVersion}, {"kind", "conditional-models"},
            {"task", task_.isClassification() ? "classification" : "regression"},
            {"numClasses", task_.numClasses}, {"weights", weights_},
            {"pooledMode", mode_ == PooledMode::Fit ? "fit" : "mixture"}};
  json sources = json::array();
  if (task_.isClassification()) {
    for (const auto& c : classifiers_) sources.push_back(c.toJson());
    if (pooledClassifier_) j["pooled"] = pooledClassifier_->toJson();
  } else {
    for (const auto& g : gaussians_) sources.push_back(g.toJson());
    if (pooledGaussian_) j["pooled"] = pooledGaussian_->toJson();
  }
  j["sources"] = sources;
  return j;
}

ConditionalModels ConditionalModels::fromJson(const json& j) {
  checkVersion(j, "conditional-models");
  const bool cls = j.at("task").get<std::string>() == "classification";
  const TaskKind task = cls ? TaskKind::classification(j.at("numClasses").get<std::uint32_t>()) : TaskKind::regression();
  const PooledMode mode = j.at("pooledMode").get<std::string>() == "fit" ? PooledMode::Fit : PooledMode::Mixture;
  std::vector<ClassifierModel> classifiers;
  std::vector<GaussianWorkingModel> gaussians;
  std::optional<ClassifierModel> pc;
  std::optional<GaussianWorkingModel> pg;
  for (const auto& s : j.at("sources")) {
    if (cls) classifiers.push_back(ClassifierModel::fromJson(s));
    else gaussians.push_back(GaussianWorkingModel::fromJson(s));
  }
  if (j.contains("pooled")) {
    if (cls) pc = ClassifierModel::fromJson(j.at("pooled"));
    else pg = GaussianWorkingModel::fromJson(j.at("pooled"));
  }
  return fromParts(task, std::move(classifiers), std::move(gaussians), j.at("weights").get<std::vector<double>>(), mode,
                   std::move(pc), std::move(pg));
}

} // namespace mdcp
