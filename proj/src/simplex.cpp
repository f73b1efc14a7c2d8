#include "mdcp/simplex.hpp"

#include "mdcp/error.hpp"

#include <cmath>
#include <limits>

namespace mdcp {

namespace {

class Tableau {
public:
  Tableau(Eigen::MatrixXd t, std::vector<int> basis, double tol) : t_(std::move(t)), basis_(std::move(basis)), tol_(tol) {}

  Eigen::MatrixXd& table() { return t_; }
  std::vector<int>& basis() { return basis_; }
  int rows() const { return static_cast<int>(t_.rows()) - 1; }
  int cols() const { return static_cast<int>(t_.cols()) - 1; }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  /// Minimize the objective held in the last row over columns < usable.
  /// Returns false when unbounded.
  bool optimize(int usable, int& iterations) {
    const int obj = rows();
    for (;;) {
      int enter = -1;
      for (int j = 0; j < usable; ++j)
        if (t_(obj, j) < -tol_) {
          enter = j;
          break;
        }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < obj; ++i) {
        const double a = t_(i, enter);
        if (a <= tol_) continue;
        const double ratio = t_(i, cols()) / a;
        if (ratio < best - tol_ || (std::abs(ratio - best) <= tol_ && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      if (++iterations > 100000) throw Error(Errc::NumericalFailure, "simplex iteration limit");
    }
  }

private:
  Eigen::MatrixXd t_;
  std::vector<int> basis_;
  double tol_;
};

} // namespace

LpResult solveLp(const LinearProgram& lp, double tol) {
  const auto m = static_cast<int>(lp.A.rows());
  const auto n = static_cast<int>(lp.A.cols());
  if (lp.c.size() != n || lp.b.size() != m || static_cast<int>(lp.sense.size()) != m)
    throw Error(Errc::InvalidData, "linear program dimensions disagree");

  // Normalize rows to b >= 0, then count slack and artificial columns.
  Eigen::MatrixXd A = lp.A;
  Eigen::VectorXd b = lp.b;
  std::vector<RowSense> sense = lp.sense;
  for (int i = 0; i < m; ++i) {
    if (b(i) < 0) {
      A.row(i) *= -1.0;
      b(i) = -b(i);
      if (sense[static_cast<std::size_t>(i)] == RowSense::LessEqual) sense[static_cast<std::size_t>(i)] = RowSense::GreaterEqual;
      else if (sense[static_cast<std::size_t>(i)] == RowSense::GreaterEqual) sense[static_cast<std::size_t>(i)] = RowSense::LessEqual;
    }
  }
  int nSlack = 0, nArt = 0;
  for (auto s : sense) {
    if (s != RowSense::Equal) ++nSlack;
    if (s != RowSense::LessEqual) ++nArt;
  }
  const int total = n + nSlack + nArt;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, total + 1);
  std::vector<int> basis(static_cast<std::size_t>(m));
  int slack = n, art = n + nSlack;
  for (int i = 0; i < m; ++i) {
    t.row(i).head(n) = A.row(i);
    t(i, total) = b(i);
    switch (sense[static_cast<std::size_t>(i)]) {
      case RowSense::LessEqual:
        t(i, slack) = 1.0;
        basis[static_cast<std::size_t>(i)] = slack++;
        break;
      case RowSense::GreaterEqual:
        t(i, slack++) = -1.0;
        t(i, art) = 1.0;
        basis[static_cast<std::size_t>(i)] = art++;
        break;
      case RowSense::Equal:
        t(i, art) = 1.0;
        basis[static_cast<std::size_t>(i)] = art++;
        break;
    }
  }

  LpResult res;
  Tableau tab(std::move(t), std::move(basis), tol);
  auto& T = tab.table();

  // Phase 1: minimize the sum of artificials.
  if (nArt > 0) {
    T.row(m).setZero();
    for (int j = n + nSlack; j < total; ++j) T(m, j) = 1.0;
    for (int i = 0; i < m; ++i)
      if (tab.basis()[static_cast<std::size_t>(i)] >= n + nSlack) T.row(m) -= T.row(i);
    tab.optimize(total, res.iterations);
    if (-T(m, total) > 1e-8 * std::max(1.0, b.cwiseAbs().maxCoeff())) {
      res.status = LpStatus::Infeasible;
      return res;
    }
    // Drive remaining zero-level artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
      if (tab.basis()[static_cast<std::size_t>(i)] < n + nSlack) continue;
      for (int j = 0; j < n + nSlack; ++j)
        if (std::abs(T(i, j)) > tol) {
          tab.pivot(i, j);
          break;
        }
    }
  }

  // Phase 2: original objective over structural and slack columns.
  T.row(m).setZero();
  T.row(m).head(n) = lp.c.transpose();
  for (int i = 0; i < m; ++i) {
    const int bi = tab.basis()[static_cast<std::size_t>(i)];
    if (bi < n && lp.c(bi) != 0.0) T.row(m) -= lp.c(bi) * T.row(i);
  }
  if (!tab.optimize(n + nSlack, res.iterations)) {
    res.status = LpStatus::Unbounded;
    return res;
  }
  res.status = LpStatus::Optimal;
  res.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    const int bi = tab.basis()[static_cast<std::size_t>(i)];
    if (bi < n) res.x(bi) = T(i, total);
  }
  res.objective = lp.c.dot(res.x);
  return res;
}

} // namespace mdcp
