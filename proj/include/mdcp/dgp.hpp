#pragma once

#include "mdcp/data.hpp"
#include "mdcp/rng.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mdcp {

enum class Suite {
  Linear,
  NonlinearInteraction,
  NonlinearSinusoid,
  NonlinearSoftplus,
  Temperature,
  CovariateShift,
  CovariateAndConceptShift,
};

std::string suiteName(Suite s);
Suite parseSuite(const std::string& name);

struct SuiteConfig {
  Suite suite = Suite::Linear;
  bool classification = true;
  std::size_t K = 3;
  std::size_t d = 10;
  std::uint32_t C = 6;
  double tau = 2.5;
  double deltaX = 0.0;
  std::size_t nPerSource = 2000;
  double alpha = 0.1;
  /// Column-standardize the pooled covariates after sampling.
  bool standardize = false;

  TaskKind task() const { return classification ? TaskKind::classification(C) : TaskKind::regression(); }
  bool shiftSuite() const { return suite == Suite::CovariateShift || suite == Suite::CovariateAndConceptShift; }
  void validate() const;
};

inline constexpr std::size_t kInformativeCount = 4;

/// All random hyperparameters of one run. Draws are stored unscaled where the
/// scale depends on tau, so one seed gives coupled draws across tau values.
struct DrawnHyperparams {
  std::vector<std::size_t> informative;

  // Classification.
  std::vector<double> uXi;                 // K, Unif[-1,1]
  Eigen::MatrixXd zIntercept;              // K x C, standard normal
  Eigen::MatrixXd betaBarClass;            // C x d
  std::vector<Eigen::MatrixXd> deltaClass; // K of C x d, N(0, 0.15^2) on the informative set

  // Regression.
  Eigen::VectorXd betaBar;             // d
  std::vector<Eigen::VectorXd> deltaReg; // K
  double bBase = 0.0;                  // N(0, 0.5^2)
  std::vector<double> vSource;         // K, N(0, 0.5^2)
  double snr = 7.5;
  double noiseU01 = 0.5;               // mapped to the temperature multiplier

  // Nonlinear components.
  Eigen::MatrixXd w;                   // d x d, nonzero on informative pairs
  std::vector<Eigen::VectorXd> sinU, softU;
  std::vector<double> sinA, sinB, softA, softB;

  // Covariate shift.
  Eigen::VectorXd shiftDir;            // unit vector on the informative set

  double xi(const SuiteConfig& cfg, std::size_t k) const;
  double intercept(const SuiteConfig& cfg, std::size_t k, std::size_t c) const;
  double noiseMultiplier(const SuiteConfig& cfg) const;
  Eigen::VectorXd covariateMean(const SuiteConfig& cfg, std::size_t k) const;

  double g(const SuiteConfig& cfg, std::span<const double> x) const;
  /// Class logits of source k at x.
  Eigen::VectorXd logits(const SuiteConfig& cfg, std::size_t k, std::span<const double> x) const;
  /// Regression mean of source k at x.
  double regressionMean(const SuiteConfig& cfg, std::size_t k, std::span<const double> x) const;
};

DrawnHyperparams sampleHyperparams(const SuiteConfig& cfg, Rng& rng);

/// Covariates X = sqrt(0.2) z0 1 + sqrt(0.8) z + mu_k, so Sigma = 0.2 + 0.8 I.
Eigen::MatrixXd sampleCovariates(std::size_t n, std::size_t d, const Eigen::VectorXd& mean, Rng& rng);

MultiSourceData generateClassification(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng);

/// `sigmaOut`, when given, receives the per-source noise standard deviations.
MultiSourceData generateRegression(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng,
                                   std::vector<double>* sigmaOut = nullptr);

MultiSourceData generate(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng);

} // namespace mdcp
