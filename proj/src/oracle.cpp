#include "mdcp/oracle.hpp"

#include "mdcp/error.hpp"
#include "mdcp/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdcp {

using nlohmann::json;

namespace {

/// Flattened cells: coverage coefficients a (K x C) and size weights nu (C).
struct Cells {
  Eigen::MatrixXd a;
  Eigen::VectorXd nu;
};

Cells cellsOf(const DiscreteInstance& inst) {
  const auto K = static_cast<Eigen::Index>(inst.K());
  const auto L = static_cast<Eigen::Index>(inst.L());
  Cells c;
  if (!inst.marginal()) {
    c.a = inst.f;
    c.nu = Eigen::VectorXd::Ones(L);
    return c;
  }
  const auto& g = *inst.grid;
  const auto G = static_cast<Eigen::Index>(g.nu.size());
  c.a.resize(K, G * L);
  c.nu.resize(G * L);
  for (Eigen::Index p = 0; p < G; ++p) {
    const Eigen::MatrixXd& f = inst.fGrid.empty() ? inst.f : inst.fGrid[static_cast<std::size_t>(p)];
    for (Eigen::Index y = 0; y < L; ++y) {
      for (Eigen::Index k = 0; k < K; ++k) c.a(k, p * L + y) = g.r(k, p) * f(k, y);
      c.nu(p * L + y) = g.nu(p);
    }
  }
  return c;
}

double dualValue(const Cells& cells, double alpha, const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd h = cells.a.transpose() * lambda;
  double excess = 0.0;
  for (Eigen::Index c = 0; c < h.size(); ++c) excess += std::max(0.0, h(c) - cells.nu(c));
  return (1.0 - alpha) * lambda.sum() - excess;
}

bool isTie(double h, double nu) { return std::abs(h - nu) <= kTieTol * std::max(1.0, nu); }

/// Builds the certificate for a given optimal lambda: threshold set plus an
/// LP-chosen tie-set randomization meeting slackness.
DualCertificate buildCertificate(const Cells& cells, double alpha, Eigen::VectorXd lambda) {
  const auto K = cells.a.rows();
  const auto C = cells.a.cols();
  for (Eigen::Index k = 0; k < K; ++k)
    if (lambda(k) < 0.0) lambda(k) = 0.0;

  DualCertificate cert;
  cert.lambdaStar = lambda;
  cert.dualValue = dualValue(cells, alpha, lambda);
  cert.inclusion.assign(static_cast<std::size_t>(C), 0.0);

  const Eigen::VectorXd h = cells.a.transpose() * lambda;
  Eigen::VectorXd base = Eigen::VectorXd::Zero(K);
  for (Eigen::Index c = 0; c < C; ++c) {
    if (isTie(h(c), cells.nu(c))) {
      cert.tieSet.push_back(static_cast<std::size_t>(c));
    } else if (h(c) > cells.nu(c)) {
      cert.inclusion[static_cast<std::size_t>(c)] = 1.0;
      base += cells.a.col(c);
    }
  }

  const double target = 1.0 - alpha;
  if (!cert.tieSet.empty()) {
    const auto T = static_cast<Eigen::Index>(cert.tieSet.size());
    LinearProgram lp;
    lp.c.resize(T);
    lp.A = Eigen::MatrixXd::Zero(K + T, T);
    lp.b.resize(K + T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto c = static_cast<Eigen::Index>(cert.tieSet[static_cast<std::size_t>(t)]);
      lp.c(t) = cells.nu(c);
      lp.A.col(t).head(K) = cells.a.col(c);
      lp.A(K + t, t) = 1.0;
      lp.b(K + t) = 1.0;
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      lp.b(k) = target - base(k);
      lp.sense.push_back(lambda(k) > kActiveTol ? RowSense::Equal : RowSense::GreaterEqual);
    }
    for (Eigen::Index t = 0; t < T; ++t) lp.sense.push_back(RowSense::LessEqual);
    const LpResult z = solveLp(lp);
    if (z.status != LpStatus::Optimal) throw Error(Errc::NumericalFailure, "tie-set randomization LP has no solution");
    for (Eigen::Index t = 0; t < T; ++t)
      cert.inclusion[cert.tieSet[static_cast<std::size_t>(t)]] = std::clamp(z.x(t), 0.0, 1.0);
    cert.tieSetNonUnique = true;
  }

  Eigen::VectorXd I(C);
  for (Eigen::Index c = 0; c < C; ++c) I(c) = cert.inclusion[static_cast<std::size_t>(c)];
  const Eigen::VectorXd cov = cells.a * I;
  cert.primalValue = cells.nu.dot(I);
  for (Eigen::Index k = 0; k < K; ++k) {
    SlacknessEntry e;
    e.lambda = lambda(k);
    e.coverage = cov(k);
    e.active = lambda(k) > kActiveTol;
    e.residual = e.active ? std::abs(cov(k) - target) : std::max(0.0, target - cov(k));
    cert.perSourceCoverage.push_back(cov(k));
    cert.slackness.push_back(e);
  }
  if (cert.gap() > 1e-6) throw Error(Errc::NumericalFailure, "duality gap " + std::to_string(cert.gap()) + " after refinement");
  return cert;
}

/// Projected supergradient ascent; used only as a warm-start lower bound.
double supergradientLowerBound(const Cells& cells, double alpha) {
  const auto K = cells.a.rows();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K);
  double best = 0.0;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd h = cells.a.transpose() * lambda;
    Eigen::VectorXd g = Eigen::VectorXd::Constant(K, 1.0 - alpha);
    for (Eigen::Index c = 0; c < h.size(); ++c)
      if (h(c) > cells.nu(c)) g -= cells.a.col(c);
    lambda = (lambda + g / std::sqrt(1.0 + it)).cwiseMax(0.0);
    best = std::max(best, dualValue(cells, alpha, lambda));
  }
  return best;
}

} // namespace

void DiscreteInstance::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  auto checkTable = [](const Eigen::MatrixXd& t) {
    if (t.rows() < 1 || t.cols() < 1) throw Error(Errc::InvalidData, "empty conditional table");
    for (Eigen::Index k = 0; k < t.rows(); ++k) {
      if ((t.row(k).array() < 0.0).any()) throw Error(Errc::InvalidData, "negative probability");
      if (std::abs(t.row(k).sum() - 1.0) > 1e-12) throw Error(Errc::InvalidData, "conditional pmf does not sum to 1");
    }
  };
  if (!marginal()) {
    checkTable(f);
    return;
  }
  const auto& g = *grid;
  const auto G = g.nu.size();
  if (G < 1) throw Error(Errc::InvalidData, "empty covariate grid");
  if (!fGrid.empty() && static_cast<Eigen::Index>(fGrid.size()) != G) throw Error(Errc::InvalidData, "one table per grid point required");
  if (fGrid.empty()) checkTable(f);
  for (const auto& t : fGrid) {
    checkTable(t);
    if (t.rows() != fGrid.front().rows() || t.cols() != fGrid.front().cols()) throw Error(Errc::InvalidData, "grid tables differ in shape");
  }
  if (g.r.rows() != static_cast<Eigen::Index>(K()) || g.r.cols() != G) throw Error(Errc::InvalidData, "r must be K x G");
  if ((g.nu.array() <= 0.0).any()) throw Error(Errc::InvalidData, "nu must be positive");
  for (Eigen::Index k = 0; k < g.r.rows(); ++k)
    if (std::abs(g.r.row(k).sum() - 1.0) > 1e-12 || (g.r.row(k).array() < 0.0).any())
      throw Error(Errc::InvalidData, "r_k must be a pmf over the grid");
}

DiscreteInstance DiscreteInstance::conditional(double alpha, Eigen::MatrixXd f) {
  DiscreteInstance inst;
  inst.alpha = alpha;
  inst.f = std::move(f);
  inst.validate();
  return inst;
}

namespace {

Eigen::MatrixXd matrixFromJson(const json& j) {
  const auto rows = j.size();
  if (rows == 0) throw Error(Errc::InvalidData, "empty matrix");
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) throw Error(Errc::InvalidData, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j.at(i).at(c).get<double>();
  }
  return m;
}

json matrixToJson(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

} // namespace

DiscreteInstance DiscreteInstance::fromJson(const json& j) {
  DiscreteInstance inst;
  inst.alpha = j.at("alpha").get<double>();
  const auto K = j.at("K").get<std::size_t>();
  const auto L = j.at("labels").get<std::size_t>();
  const json& f = j.at("f");
  if (f.size() != K) throw Error(Errc::InvalidData, "f must have K rows");
  const bool threeD = f.at(0).size() > 0 && f.at(0).at(0).is_array();
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    CovariateGrid grid;
    grid.points = g.at("points").get<std::vector<double>>();
    const auto nu = g.at("nu").get<std::vector<double>>();
    grid.nu = Eigen::Map<const Eigen::VectorXd>(nu.data(), static_cast<Eigen::Index>(nu.size()));
    grid.r = matrixFromJson(g.at("r"));
    const auto G = nu.size();
    if (threeD) {
      for (std::size_t p = 0; p < G; ++p) {
        Eigen::MatrixXd t(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(L));
        for (std::size_t k = 0; k < K; ++k) {
          if (f.at(k).size() != G) throw Error(Errc::InvalidData, "f must be K x G x L");
          for (std::size_t y = 0; y < L; ++y) t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(y)) = f.at(k).at(p).at(y).get<double>();
        }
        inst.fGrid.push_back(std::move(t));
      }
    } else {
      inst.f = matrixFromJson(f);
    }
    inst.grid = std::move(grid);
  } else {
    if (threeD) throw Error(Errc::InvalidData, "three-dimensional f requires a grid");
    inst.f = matrixFromJson(f);
  }
  if (inst.L() != L) throw Error(Errc::InvalidData, "labels field disagrees with f");
  inst.validate();
  return inst;
}

json DiscreteInstance::toJson() const {
  json j = {{"alpha", alpha}, {"K", K()}, {"labels", L()}};
  if (fGrid.empty()) {
    j["f"] = matrixToJson(f);
  } else {
    json f3 = json::array();
    for (std::size_t k = 0; k < K(); ++k) {
      json perK = json::array();
      for (const auto& t : fGrid) {
        json row = json::array();
        for (Eigen::Index y = 0; y < t.cols(); ++y) row.push_back(t(static_cast<Eigen::Index>(k), y));
        perK.push_back(row);
      }
      f3.push_back(perK);
    }
    j["f"] = f3;
  }
  if (grid) {
    j["grid"] = {{"points", grid->points},
                 {"nu", std::vector<double>(grid->nu.data(), grid->nu.data() + grid->nu.size())},
                 {"r", matrixToJson(grid->r)}};
  }
  return j;
}

double condDualValue(const DiscreteInstance& inst, const Eigen::VectorXd& lambda) {
  if (lambda.size() != static_cast<Eigen::Index>(inst.K())) throw Error(Errc::InvalidData, "lambda must have K entries");
  if ((lambda.array() < 0.0).any()) throw Error(Errc::NegativeLambda, "lambda must be nonnegative");
  return dualValue(cellsOf(inst), inst.alpha, lambda);
}

DualCertificate solveCondDual(const DiscreteInstance& inst) {
  inst.validate();
  if (inst.marginal()) throw Error(Errc::InvalidData, "solveCondDual expects a conditional instance");
  const Cells cells = cellsOf(inst);
  const auto K = cells.a.rows();
  const auto C = cells.a.cols();
  if (K > 4 || C > 12) throw Error(Errc::InvalidData, "oracle instances are capped at K <= 4, L <= 12");

  // Planes 0..C-1 are a_c' lambda = nu_c; planes C..C+K-1 are lambda_k = 0.
  const auto P = static_cast<int>(C + K);
  Eigen::VectorXd best = Eigen::VectorXd::Zero(K);
  double bestValue = 0.0;
  std::vector<int> pick(static_cast<std::size_t>(K));
  std::iota(pick.begin(), pick.end(), 0);
  Eigen::MatrixXd M(K, K);
  Eigen::VectorXd rhs(K);
  for (;;) {
    for (Eigen::Index r = 0; r < K; ++r) {
      const int p = pick[static_cast<std::size_t>(r)];
      if (p < C) {
        M.row(r) = cells.a.col(p).transpose();
        rhs(r) = cells.nu(p);
      } else {
        M.row(r).setZero();
        M(r, p - C) = 1.0;
        rhs(r) = 0.0;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() == K) {
      Eigen::VectorXd lambda = lu.solve(rhs);
      if ((lambda.array() >= -1e-12).all()) {
        lambda = lambda.cwiseMax(0.0);
        const double v = dualValue(cells, inst.alpha, lambda);
        if (v > bestValue + 1e-12 || (std::abs(v - bestValue) <= 1e-12 && lambda.sum() < best.sum() - 1e-12)) {
          bestValue = v;
          best = lambda;
        }
      }
    }
    // Next K-combination of P planes in lexicographic order.
    int i = static_cast<int>(K) - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == P - static_cast<int>(K) + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (auto j = static_cast<std::size_t>(i) + 1; j < pick.size(); ++j) pick[j] = pick[j - 1] + 1;
  }

  if (bestValue < supergradientLowerBound(cells, inst.alpha) - 1e-9)
    throw Error(Errc::NumericalFailure, "vertex enumeration fell below the supergradient bound");
  return buildCertificate(cells, inst.alpha, best);
}

PrimalSolution solvePrimalLP(const DiscreteInstance& inst) {
  inst.validate();
  const Cells cells = cellsOf(inst);
  const auto K = cells.a.rows();
  const auto C = cells.a.cols();
  LinearProgram lp;
  lp.c = cells.nu;
  lp.A = Eigen::MatrixXd::Zero(K + C, C);
  lp.b.resize(K + C);
  lp.A.topRows(K) = cells.a;
  lp.b.head(K).setConstant(1.0 - inst.alpha);
  lp.A.bottomRows(C).setIdentity();
  lp.b.tail(C).setOnes();
  lp.sense.assign(static_cast<std::size_t>(K), RowSense::GreaterEqual);
  lp.sense.resize(static_cast<std::size_t>(K + C), RowSense::LessEqual);
  const LpResult res = solveLp(lp);
  if (res.status != LpStatus::Optimal) throw Error(Errc::NumericalFailure, "primal LP not solved to optimality");
  PrimalSolution out;
  out.value = res.objective;
  out.inclusion.assign(res.x.data(), res.x.data() + res.x.size());
  return out;
}

DualCertificate solveMarginalDual(const DiscreteInstance& inst) {
  inst.validate();
  if (!inst.marginal()) throw Error(Errc::InvalidData, "solveMarginalDual expects a grid instance");
  const Cells cells = cellsOf(inst);
  const auto K = cells.a.rows();
  const auto C = cells.a.cols();
  // Variables (lambda, t); t_c >= lambda'a_c - nu_c carries the positive part.
  LinearProgram lp;
  lp.c.resize(K + C);
  lp.c.head(K).setConstant(-(1.0 - inst.alpha));
  lp.c.tail(C).setOnes();
  lp.A = Eigen::MatrixXd::Zero(C, K + C);
  lp.A.leftCols(K) = -cells.a.transpose();
  lp.A.rightCols(C).setIdentity();
  lp.b = -cells.nu;
  lp.sense.assign(static_cast<std::size_t>(C), RowSense::GreaterEqual);
  const LpResult res = solveLp(lp);
  if (res.status != LpStatus::Optimal) throw Error(Errc::NumericalFailure, "marginal dual LP not solved to optimality");
  return buildCertificate(cells, inst.alpha, res.x.head(K));
}

json DualCertificate::toJson() const {
  json slack = json::array();
  for (const auto& s : slackness)
    slack.push_back({{"lambda", s.lambda}, {"coverage", s.coverage}, {"active", s.active}, {"residual", s.residual}});
  return {{"lambdaStar", std::vector<double>(lambdaStar.data(), lambdaStar.data() + lambdaStar.size())},
          {"dualValue", dualValue},
          {"primalValue", primalValue},
          {"gap", gap()},
          {"inclusion", inclusion},
          {"perSourceCoverage", perSourceCoverage},
          {"tieSet", tieSet},
          {"tieSetNonUnique", tieSetNonUnique},
          {"slackness", slack}};
}

bool VerificationReport::allPassed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerificationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

json VerificationReport::toJson() const {
  json out = json::array();
  for (const auto& c : checks) out.push_back({{"check", c.name}, {"passed", c.passed}, {"residual", c.residual}});
  return out;
}

VerificationReport verifyCertificate(const DualCertificate& cert, const DiscreteInstance& inst, double tol) {
  VerificationReport rep;
  auto add = [&](std::string name, double residual, double limit) {
    rep.checks.push_back({std::move(name), residual <= limit, residual});
  };
  const Cells cells = cellsOf(inst);
  const auto K = cells.a.rows();
  const auto C = cells.a.cols();
  if (cert.lambdaStar.size() != K || static_cast<Eigen::Index>(cert.inclusion.size()) != C ||
      static_cast<Eigen::Index>(cert.perSourceCoverage.size()) != K) {
    rep.checks.push_back({"shape", false, 1.0});
    return rep;
  }
  const double target = 1.0 - inst.alpha;
  const Eigen::VectorXd lambda = cert.lambdaStar;
  Eigen::VectorXd I(C);
  for (Eigen::Index c = 0; c < C; ++c) I(c) = cert.inclusion[static_cast<std::size_t>(c)];

  add("lambda-nonnegative", std::max(0.0, -lambda.minCoeff()), 0.0);
  const double phi = dualValue(cells, inst.alpha, lambda.cwiseMax(0.0));
  const double size = cells.nu.dot(I);
  add("dual-value", std::abs(phi - cert.dualValue), tol);
  add("primal-value", std::abs(size - cert.primalValue), tol);
  add("duality-gap", std::abs(phi - size), tol);
  add("inclusion-range", std::max({0.0, -I.minCoeff(), I.maxCoeff() - 1.0}), 1e-12);

  const Eigen::VectorXd cov = cells.a * I;
  double covMismatch = 0.0, shortfall = 0.0, slack = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double reported = cert.perSourceCoverage[static_cast<std::size_t>(k)];
    covMismatch = std::max(covMismatch, std::abs(reported - cov(k)));
    shortfall = std::max(shortfall, target - std::min(reported, cov(k)));
    if (lambda(k) > kActiveTol) slack = std::max(slack, std::abs(cov(k) - target));
  }
  add("coverage-consistency", covMismatch, tol);
  rep.checks.push_back({"feasibility", shortfall <= 1e-9, std::max(0.0, shortfall)});
  add("complementary-slackness", slack, tol);
  rep.checks.push_back({"nontriviality", lambda.sum() > kActiveTol, lambda.sum()});

  const Eigen::VectorXd h = cells.a.transpose() * lambda;
  double thresholdViolation = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    if (h(c) > cells.nu(c) + kTieTol) thresholdViolation = std::max(thresholdViolation, 1.0 - I(c));
    if (h(c) < cells.nu(c) - kTieTol) thresholdViolation = std::max(thresholdViolation, I(c));
  }
  add("threshold-form", thresholdViolation, 1e-12);

  const PrimalSolution lp = solvePrimalLP(inst);
  add("lp-agreement", std::abs(lp.value - phi), tol);
  return rep;
}

} // namespace mdcp
