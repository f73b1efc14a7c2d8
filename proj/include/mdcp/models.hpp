#pragma once

#include "mdcp/data.hpp"
#include "mdcp/trees.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace mdcp {

/// Piecewise-constant nondecreasing map fitted by pool-adjacent-violators.
struct IsotonicMap {
  std::vector<double> x; // block right endpoints, ascending
  std::vector<double> y; // block values, nondecreasing

  static IsotonicMap fit(std::vector<std::pair<double, double>> points);
  double operator()(double v) const;
};

struct ClassifierOptions {
  bool calibrate = false;
  int calibrationFolds = 3;
};

class ClassifierModel {
public:
  ClassifierModel() = default;
  ClassifierModel(std::vector<TreeEnsemble> logits, std::vector<IsotonicMap> calibration = {});

  std::uint32_t numClasses() const { return static_cast<std::uint32_t>(logits_.size()); }
  bool calibrated() const { return !calibration_.empty(); }

  /// Probability vector, clamped to [1e-8, 1] and renormalized.
  std::vector<double> probabilities(std::span<const double> x) const;
  double classProb(std::span<const double> x, std::uint32_t y) const;

  nlohmann::json toJson() const;
  static ClassifierModel fromJson(const nlohmann::json& j);

private:
  std::vector<TreeEnsemble> logits_;
  std::vector<IsotonicMap> calibration_;
};

ClassifierModel fitClassifier(const SourceDataset& train, std::uint32_t numClasses, const BoostedTreesConfig& cfg,
                              const ClassifierOptions& opts = {});

/// Fold assignment used for out-of-fold residuals: row i is held out in fold i % folds.
struct OofBookkeeping {
  std::vector<int> foldOfRow;
  std::vector<std::vector<std::size_t>> meanTrainRows; // rows used to fit the fold's mean model
};

class GaussianWorkingModel {
public:
  GaussianWorkingModel() = default;
  GaussianWorkingModel(TreeEnsemble mean, TreeEnsemble logVar, double sigmaFloor);

  double mu(std::span<const double> x) const { return mean_.predict(x); }
  double sigma(std::span<const double> x) const;
  double density(std::span<const double> x, double y) const;
  double sigmaFloor() const { return sigmaFloor_; }

  nlohmann::json toJson() const;
  static GaussianWorkingModel fromJson(const nlohmann::json& j);

private:
  TreeEnsemble mean_;
  TreeEnsemble logVar_;
  double sigmaFloor_ = 1e-3;
};

/// -E[log chi^2_1]; added to log squared residuals so exp(logVar) targets sigma^2.
inline constexpr double kLogChiSquareBias = 1.2703628454614782;

GaussianWorkingModel fitGaussian(const SourceDataset& train, const BoostedTreesConfig& cfg, int folds,
                                 double sigmaFloor = 1e-3, OofBookkeeping* bookkeeping = nullptr);

/// Normal density with mean mu and standard deviation sigma.
double gaussianDensity(double y, double mu, double sigma);

enum class PooledMode { Fit, Mixture };

struct ModelConfig {
  BoostedTreesConfig trees;
  ClassifierOptions classifier;
  int varianceFolds = 5;
  double sigmaFloor = 1e-3;
  PooledMode pooled = PooledMode::Fit;
};

/// Per-source conditional models f_k(y|x) plus the pooled model.
class ConditionalModels {
public:
  static ConditionalModels fit(const MultiSourceData& train, const ModelConfig& cfg);

  const TaskKind& task() const { return task_; }
  std::size_t K() const { return task_.isClassification() ? classifiers_.size() : gaussians_.size(); }

  /// f_k(y|x) for every source. For classification y is a class index.
  void densities(std::span<const double> x, double y, std::span<double> out) const;
  double pooledDensity(std::span<const double> x, double y) const;

  /// Classification only: K x C matrix of f_k(c|x) and the pooled C-vector.
  Eigen::MatrixXd classTable(std::span<const double> x) const;
  std::vector<double> pooledClassProbs(std::span<const double> x) const;

  /// Regression only: per-source (mu, sigma).
  void gaussianParams(std::span<const double> x, std::span<double> mu, std::span<double> sigma) const;

  const std::vector<ClassifierModel>& classifiers() const { return classifiers_; }
  const std::vector<GaussianWorkingModel>& gaussians() const { return gaussians_; }
  const std::vector<double>& sourceWeights() const { return weights_; }

  nlohmann::json toJson() const;
  static ConditionalModels fromJson(const nlohmann::json& j);

  /// Assemble from parts (used by tests and loaders).
  static ConditionalModels fromParts(TaskKind task, std::vector<ClassifierModel> classifiers,
                                     std::vector<GaussianWorkingModel> gaussians, std::vector<double> weights,
                                     PooledMode mode, std::optional<ClassifierModel> pooledClassifier,
                                     std::optional<GaussianWorkingModel> pooledGaussian);

private:
  TaskKind task_;
  std::vector<ClassifierModel> classifiers_;
  std::vector<GaussianWorkingModel> gaussians_;
  std::vector<double> weights_;
  PooledMode mode_ = PooledMode::Fit;
  std::optional<ClassifierModel> pooledClassifier_;
  std::optional<GaussianWorkingModel> pooledGaussian_;
};

inline constexpr int kModelJsonVersion = 1;

} // namespace mdcp
