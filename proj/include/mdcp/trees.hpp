#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace mdcp {

struct BoostedTreesConfig {
  int numRounds = 100;
  int maxDepth = 3;
  double learningRate = 0.1;
  int minLeafSize = 10;
  int maxBins = 255;

  void validate() const;
};

/// Binary regression tree in flat-array form. Node 0 is the root; a node
/// with feature < 0 is a leaf. Rows go left when x[feature] <= threshold.
struct RegressionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  double predict(std::span<const double> x) const;
  std::size_t leafCount() const;
};

/// base + sum of tree outputs. Leaf values already include the learning rate.
struct TreeEnsemble {
  double base = 0.0;
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const;
};

/// Squared-loss gradient boosting.
TreeEnsemble fitSquaredLoss(const Eigen::MatrixXd& x, std::span<const double> y, const BoostedTreesConfig& cfg);

/// Multinomial (softmax) gradient boosting with Newton leaf steps. Returns one
/// logit ensemble per class.
std::vector<TreeEnsemble> fitSoftmax(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                                     std::uint32_t numClasses, const BoostedTreesConfig& cfg);

void softmaxInPlace(std::span<double> logits);

} // namespace mdcp
