#pragma once

#include "mdcp/conformal.hpp"
#include "mdcp/data.hpp"
#include "mdcp/models.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mdcp {

double softplus(double t);
double sigmoid(double t);

/// Per-dimension B-spline features on uniform knots over the training range,
/// plus an optional constant feature. Queries outside the range are clamped.
class SplineBasis {
public:
  SplineBasis() = default;
  SplineBasis(std::vector<double> lo, std::vector<double> hi, int numKnots = 5, int degree = 3, bool bias = true);

  static SplineBasis fit(const Eigen::MatrixXd& x, int numKnots = 5, int degree = 3, bool bias = true);

  std::size_t d() const { return lo_.size(); }
  std::size_t perDim() const { return static_cast<std::size_t>(numKnots_ + degree_ - 1); }
  std::size_t m() const { return d() * perDim() + (bias_ ? 1 : 0); }
  bool bias() const { return bias_; }
  int numKnots() const { return numKnots_; }
  int degree() const { return degree_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  void features(std::span<const double> x, std::span<double> out) const;
  Eigen::VectorXd features(std::span<const double> x) const;
  Eigen::MatrixXd featureMatrix(const Eigen::MatrixXd& x) const;

  /// Stacked second-difference operator for one coefficient row; acts within
  /// each spline block and leaves the constant feature unpenalized.
  Eigen::MatrixXd secondDifference() const;

  nlohmann::json toJson() const;
  static SplineBasis fromJson(const nlohmann::json& j);

private:
  void evalDim(std::size_t j, double v, std::span<double> out) const;

  std::vector<double> lo_, hi_;
  int numKnots_ = 5;
  int degree_ = 3;
  bool bias_ = true;
};

class LambdaModel {
public:
  LambdaModel() = default;
  LambdaModel(SplineBasis basis, Eigen::MatrixXd theta);

  std::size_t K() const { return static_cast<std::size_t>(theta_.rows()); }
  const SplineBasis& basis() const { return basis_; }
  const Eigen::MatrixXd& theta() const { return theta_; }

  /// softplus(Theta * Lambda(x)).
  Eigen::VectorXd lambdaAt(std::span<const double> x) const;
  Eigen::VectorXd lambdaFromFeatures(const Eigen::VectorXd& feat) const;

  nlohmann::json toJson() const;
  static LambdaModel fromJson(const nlohmann::json& j);

private:
  SplineBasis basis_;
  Eigen::MatrixXd theta_;
};

/// Pooled training rows with everything the objective needs precomputed:
/// spline features, per-source density at the observed label, pooled density.
struct DualTrainingSet {
  Eigen::MatrixXd features; // n x m
  Eigen::MatrixXd fhat;     // n x K
  Eigen::VectorXd ppool;    // n

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t K() const { return static_cast<std::size_t>(fhat.cols()); }

  static DualTrainingSet build(const SplineBasis& basis, const SourceDataset& pooledRows, const ConditionalModels& models);
};

struct DualTrainConfig {
  int batchSize = 256;
  int maxEpochs = 200;
  double stepSize = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adamEps = 1e-8;
  int earlyStopPatience = 10;
  double denomFloor = 1e-4;
  double penaltyGamma = 0.0;
  std::vector<double> penaltyGrid{0.0, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  int numKnots = 5;
  int degree = 3;
  bool bias = true;

  void validate() const;
};

/// Mean over rows of (1 - h)_- / max(ppool, floor) + (1 - alpha) mean sum(lambda)
/// - gamma (mean sum(lambda^2) + sum_k |D theta_k|^2).
double empiricalDualObjective(const Eigen::MatrixXd& theta, const DualTrainingSet& data, std::span<const std::size_t> rows,
                              double alpha, double gamma, double floor, const Eigen::MatrixXd& D);
double empiricalDualObjective(const Eigen::MatrixXd& theta, const DualTrainingSet& data, double alpha, double gamma,
                              double floor, const Eigen::MatrixXd& D);

/// Gradient of the objective with respect to Theta (K x m). At h = 1 the
/// subgradient of the h > 1 branch is used.
Eigen::MatrixXd objectiveGradient(const Eigen::MatrixXd& theta, const DualTrainingSet& data,
                                  std::span<const std::size_t> rows, double alpha, double gamma, double floor,
                                  const Eigen::MatrixXd& D);

struct TrainResult {
  LambdaModel model;
  std::vector<double> epochObjective; // full-data objective after each epoch; entry 0 is at Theta = 0
  std::vector<double> bestSoFar;
  int bestEpoch = 0;
};

TrainResult trainLambda(const DualTrainingSet& data, const SplineBasis& basis, double alpha, const DualTrainConfig& cfg,
                        std::uint64_t seed);

/// s(x, y) = -sum_k lambda_k(x) f_k(y|x), shared by every source. Copies
/// lambda; `models` must outlive the returned function.
ScoreFunction sharedScore(const LambdaModel& lambda, const ConditionalModels& models);

struct TuneResult {
  double gamma = 0.0;
  std::vector<double> grid;
  std::vector<double> mimicSizes;
};

/// Trains lambda for each gamma in the grid and keeps the one with the
/// smallest mimic-test size (ties go to the smaller gamma).
TuneResult tunePenalty(const DualTrainingSet& data, const SplineBasis& basis, double alpha, const DualTrainConfig& cfg,
                       std::uint64_t seed, const std::function<double(const LambdaModel&)>& mimicSize);

inline constexpr int kLambdaJsonVersion = 1;

} // namespace mdcp
