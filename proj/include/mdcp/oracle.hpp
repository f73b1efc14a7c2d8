#pragma once

#include <Eigen/Dense>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace mdcp {

/// Covariate grid for the marginal problem. r(k, g) is the probability that
/// source k places on grid point g; nu(g) is the size measure of the point.
struct CovariateGrid {
  std::vector<double> points;
  Eigen::VectorXd nu;
  Eigen::MatrixXd r; // K x G
};

/// Discrete problem with K sources and L labels. Without a grid, f is a
/// single K x L conditional table. With a grid, fGrid[g] is the K x L table at
/// grid point g.
struct DiscreteInstance {
  double alpha = 0.1;
  Eigen::MatrixXd f;
  std::optional<CovariateGrid> grid;
  std::vector<Eigen::MatrixXd> fGrid;

  std::size_t K() const { return static_cast<std::size_t>(f.rows() > 0 ? f.rows() : fGrid.front().rows()); }
  std::size_t L() const { return static_cast<std::size_t>(f.rows() > 0 ? f.cols() : fGrid.front().cols()); }
  bool marginal() const { return grid.has_value(); }

  void validate() const;

  static DiscreteInstance conditional(double alpha, Eigen::MatrixXd f);
  static DiscreteInstance fromJson(const nlohmann::json& j);
  nlohmann::json toJson() const;
};

/// Tolerance separating active multipliers from zero.
inline constexpr double kActiveTol = 1e-6;
/// Tolerance defining the tie set h = 1.
inline constexpr double kTieTol = 1e-9;

struct SlacknessEntry {
  double lambda = 0.0;
  double coverage = 0.0;
  bool active = false;
  double residual = 0.0; // |coverage - (1 - alpha)| when active, shortfall otherwise
};

/// Cells are labels (conditional) or (grid point, label) pairs flattened as g * L + y (marginal).
struct DualCertificate {
  Eigen::VectorXd lambdaStar;
  double dualValue = 0.0;
  double primalValue = 0.0;
  std::vector<double> inclusion;
  std::vector<double> perSourceCoverage;
  std::vector<std::size_t> tieSet;
  std::vector<SlacknessEntry> slackness;
  bool tieSetNonUnique = false;

  double gap() const { return std::abs(dualValue - primalValue); }
  nlohmann::json toJson() const;
};

struct PrimalSolution {
  double value = 0.0;
  std::vector<double> inclusion;
};

/// (1 - alpha) sum(lambda) - sum over cells of (lambda'a_c - nu_c)_+.
double condDualValue(const DiscreteInstance& inst, const Eigen::VectorXd& lambda);

/// Maximizes the conditional dual by vertex enumeration of the hyperplane arrangement.
DualCertificate solveCondDual(const DiscreteInstance& inst);

/// min sum nu_c I_c s.t. coverage_k(I) >= 1 - alpha, 0 <= I <= 1, via simplex.
PrimalSolution solvePrimalLP(const DiscreteInstance& inst);

/// Maximizes the marginal dual with constant lambda via its LP form.
DualCertificate solveMarginalDual(const DiscreteInstance& inst);

struct CheckResult {
  std::string name;
  bool passed = false;
  double residual = 0.0;
};

struct VerificationReport {
  std::vector<CheckResult> checks;

  bool allPassed() const;
  const CheckResult* find(const std::string& name) const;
  nlohmann::json toJson() const;
};

VerificationReport verifyCertificate(const DualCertificate& cert, const DiscreteInstance& inst, double tol = 1e-6);

} // namespace mdcp
