#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mdcp {

enum class RowSense { LessEqual, GreaterEqual, Equal };

/// minimize c'x subject to A x (sense) b, x >= 0.
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<RowSense> sense;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
};

/// Dense two-phase tableau simplex with Bland's anti-cycling rule. Intended
/// for the small problems of the oracle (a few hundred rows and columns).
LpResult solveLp(const LinearProgram& lp, double tol = 1e-10);

} // namespace mdcp
