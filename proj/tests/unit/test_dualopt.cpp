#include "mdcp/dualopt.hpp"
#include "mdcp/error.hpp"
#include "mdcp/oracle.hpp"
#include "mdcp/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

using namespace mdcp;

namespace {

// Bias-only basis: one constant feature, so lambda is a constant.
SplineBasis constantBasis() { return SplineBasis({}, {}, 5, 3, true); }

double inverseSoftplus(double v) { return std::log(std::expm1(v)); }

// Rows with y drawn from a fixed pmf; fhat = ppool = f(y) and features from a 1-d spline basis.
DualTrainingSet discreteRows(const SplineBasis& basis, const std::vector<double>& f, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  DualTrainingSet s;
  s.fhat.resize(static_cast<Eigen::Index>(n), 1);
  s.ppool.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = rng.uniform(-1.0, 1.0);
    double u = rng.uniform();
    std::size_t y = 0;
    while (y + 1 < f.size() && u >= f[y]) u -= f[y++];
    s.fhat(r, 0) = f[y];
    s.ppool(r) = f[y];
  }
  s.features = basis.featureMatrix(x);
  return s;
}

// Random smooth problem for gradient checks.
DualTrainingSet randomRows(const SplineBasis& basis, std::size_t K, std::size_t n, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(basis.d()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  DualTrainingSet s;
  s.features = basis.featureMatrix(x);
  s.fhat.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  s.ppool.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < s.fhat.rows(); ++i) {
    for (Eigen::Index k = 0; k < s.fhat.cols(); ++k) s.fhat(i, k) = rng.uniform(0.05, 1.2);
    s.ppool(i) = rng.uniform(0.1, 1.0);
  }
  return s;
}

double h(const Eigen::MatrixXd& theta, const DualTrainingSet& s, Eigen::Index i) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < theta.rows(); ++k)
    v += softplus(theta.row(k).dot(s.features.row(i))) * s.fhat(i, k);
  return v;
}

} // namespace

TEST_CASE("softplus and sigmoid values", "[dualopt]") {
  CHECK(softplus(0.0) == Catch::Approx(std::log(2.0)));
  CHECK(softplus(20.0) == Catch::Approx(20.0 + std::log1p(std::exp(-20.0))).epsilon(1e-15));
  CHECK(softplus(20.0) - 20.0 == Catch::Approx(2.0611536e-9).epsilon(1e-6));
  CHECK(std::isfinite(softplus(800.0)));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("spline basis dimension and partition of unity", "[dualopt]") {
  const SplineBasis one({-1.0}, {3.0}, 5, 3, true);
  CHECK(one.perDim() == 7);
  CHECK(one.m() == 8);
  const SplineBasis two({0.0, 0.0}, {1.0, 1.0}, 5, 3, true);
  CHECK(two.m() == 15);
  for (double v = -1.0; v <= 3.0; v += 0.013) {
    const std::vector<double> x{v};
    const auto f = one.features(x);
    CHECK(f.head(7).sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(f(7) == 1.0);
    CHECK(f.minCoeff() >= -1e-15);
  }
  // Knots at -1, 0, 1, 2, 3: continuity across an interior knot.
  const std::vector<double> lo{1.0 - 1e-13}, hi{1.0};
  CHECK((one.features(lo) - one.features(hi)).cwiseAbs().maxCoeff() < 1e-12);
  // Out-of-range queries clamp.
  const std::vector<double> far{10.0}, edge{3.0};
  CHECK(one.features(far) == one.features(edge));
}

TEST_CASE("theta = 0 gives lambda ln 2 everywhere", "[dualopt]") {
  const SplineBasis b({0.0, 0.0}, {1.0, 2.0}, 5, 3, true);
  const LambdaModel m(b, Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(b.m())));
  for (double v : {0.0, 0.37, 1.0}) {
    const std::vector<double> x{v, 2.0 * v};
    const auto lam = m.lambdaAt(x);
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(lam(k) == Catch::Approx(std::log(2.0)));
  }
  const auto back = LambdaModel::fromJson(m.toJson());
  CHECK(back.theta() == m.theta());
}

TEST_CASE("objective single-row example", "[dualopt]") {
  const auto basis = constantBasis();
  DualTrainingSet s;
  s.features = Eigen::MatrixXd::Ones(1, 1);
  s.fhat = Eigen::MatrixXd::Constant(1, 1, 0.6);
  s.ppool = Eigen::VectorXd::Constant(1, 0.6);
  const Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(1, 1, inverseSoftplus(2.0));
  const double v = empiricalDualObjective(theta, s, 0.1, 0.0, 1e-4, basis.secondDifference());
  CHECK(v == Catch::Approx(1.4666667).epsilon(1e-7));
}

TEST_CASE("objective at theta = 0 with small densities", "[dualopt]") {
  const SplineBasis basis({-1.0}, {1.0});
  Rng rng(4);
  auto s = randomRows(basis, 2, 200, rng);
  s.fhat = s.fhat * (0.5 / s.fhat.maxCoeff()); // h = ln2 * sum f <= ln 2 < 1
  const Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(basis.m()));
  CHECK(empiricalDualObjective(theta, s, 0.1, 0.0, 1e-4, basis.secondDifference()) ==
        Catch::Approx(0.9 * 2.0 * std::log(2.0)));
  // Strongly negative theta sends lambda and the objective to zero.
  const Eigen::MatrixXd neg = Eigen::MatrixXd::Constant(2, static_cast<Eigen::Index>(basis.m()), -40.0);
  CHECK(std::abs(empiricalDualObjective(neg, s, 0.1, 0.0, 1e-4, basis.secondDifference())) < 1e-12);
}

TEST_CASE("gradient matches central finite differences", "[dualopt]") {
  const SplineBasis basis({-1.0, -1.0}, {1.0, 1.0}, 5, 3, true);
  const Eigen::MatrixXd D = basis.secondDifference();
  Rng rng(8);
  const auto s = randomRows(basis, 3, 80, rng);
  std::vector<std::size_t> rows(s.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const double step = 1e-5;
  int checked = 0;
  for (int trial = 0; checked < 50 && trial < 500; ++trial) {
    Eigen::MatrixXd theta(3, static_cast<Eigen::Index>(basis.m()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-1.5, 1.5);
    bool nearKink = false;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(s.n()); ++i) nearKink |= std::abs(h(theta, s, i) - 1.0) < 1e-3;
    if (nearKink) continue;
    ++checked;
    const double gamma = trial % 2 == 0 ? 0.0 : 0.3;
    const Eigen::MatrixXd g = objectiveGradient(theta, s, rows, 0.1, gamma, 1e-4, D);
    Eigen::MatrixXd fd(theta.rows(), theta.cols());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::MatrixXd tp = theta, tm = theta;
      tp(i) += step;
      tm(i) -= step;
      fd(i) = (empiricalDualObjective(tp, s, rows, 0.1, gamma, 1e-4, D) -
               empiricalDualObjective(tm, s, rows, 0.1, gamma, 1e-4, D)) /
              (2.0 * step);
    }
    REQUIRE((g - fd).norm() / std::max(1.0, fd.norm()) <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("penalty-only gradient matches finite differences", "[dualopt]") {
  const SplineBasis basis({-1.0}, {1.0}, 5, 3, true);
  const Eigen::MatrixXd D = basis.secondDifference();
  Rng rng(12);
  auto s = randomRows(basis, 2, 40, rng);
  s.fhat.setZero(); // only the lambda-sum and penalty terms remain
  std::vector<std::size_t> rows(s.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(basis.m()));
  theta(0, 0) = 1.0;
  theta(1, 0) = 1.0;
  const double gamma = 0.7, step = 1e-5;
  const Eigen::MatrixXd g = objectiveGradient(theta, s, rows, 0.1, gamma, 1e-4, D);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::MatrixXd tp = theta, tm = theta;
    tp(i) += step;
    tm(i) -= step;
    const double fd = (empiricalDualObjective(tp, s, rows, 0.1, gamma, 1e-4, D) -
                       empiricalDualObjective(tm, s, rows, 0.1, gamma, 1e-4, D)) /
                      (2.0 * step);
    CHECK(g(i) == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("zero epochs returns theta = 0; training is deterministic", "[dualopt]") {
  const SplineBasis basis({-1.0}, {1.0});
  const auto s = discreteRows(basis, {0.5, 0.3, 0.2}, 500, 1);
  DualTrainConfig cfg;
  cfg.maxEpochs = 0;
  const auto zero = trainLambda(s, basis, 0.1, cfg, 3);
  CHECK(zero.model.theta().isZero());
  CHECK(zero.epochObjective.size() == 1);

  cfg.maxEpochs = 5;
  const auto a = trainLambda(s, basis, 0.1, cfg, 3);
  const auto b = trainLambda(s, basis, 0.1, cfg, 3);
  CHECK(a.model.theta() == b.model.theta());
  CHECK(a.epochObjective == b.epochObjective);
}

TEST_CASE("training reaches the oracle dual optimum for a known discrete law", "[dualopt]") {
  const std::vector<double> f{0.5, 0.3, 0.2};
  const SplineBasis basis({-1.0}, {1.0});
  const auto s = discreteRows(basis, f, 20000, 5);
  const auto res = trainLambda(s, basis, 0.1, DualTrainConfig{}, 9);
  const double obj = empiricalDualObjective(res.model.theta(), s, 0.1, 0.0, 1e-4, basis.secondDifference());

  Eigen::MatrixXd table(1, 3);
  table << 0.5, 0.3, 0.2;
  const auto cert = solveCondDual(DiscreteInstance::conditional(0.1, table));
  REQUIRE(cert.dualValue == Catch::Approx(2.5));
  CHECK(std::abs(obj - cert.dualValue) <= 0.02 * cert.dualValue);
}

TEST_CASE("shared score is the negated weighted density sum", "[dualopt]") {
  const auto basis = constantBasis();
  const GaussianWorkingModel g(TreeEnsemble{0.0, {}}, TreeEnsemble{0.0, {}}, 1e-3);
  const auto models = ConditionalModels::fromParts(TaskKind::regression(), {}, {g, g}, {0.5, 0.5},
                                                   PooledMode::Mixture, std::nullopt, std::nullopt);
  const LambdaModel lam(basis, Eigen::MatrixXd::Constant(2, 1, inverseSoftplus(1.0)));
  const auto score = sharedScore(lam, models);
  const std::vector<double> x;
  for (double y : {-1.0, 0.0, 0.5}) CHECK(score(x, y) == Catch::Approx(-2.0 * g.density(x, y)));
  CHECK(score(x, 0.0) < score(x, 1.0));

  Eigen::MatrixXd theta(2, 1);
  theta << inverseSoftplus(1.0), -60.0;
  const auto first = sharedScore(LambdaModel(basis, theta), models);
  CHECK(first(x, 0.3) == Catch::Approx(-g.density(x, 0.3)));
}

TEST_CASE("penalty tuning rules", "[dualopt]") {
  const SplineBasis basis({-1.0}, {1.0});
  const auto s = discreteRows(basis, {0.6, 0.4}, 200, 2);
  DualTrainConfig cfg;
  cfg.maxEpochs = 2;

  cfg.penaltyGrid = {0.0};
  CHECK(tunePenalty(s, basis, 0.1, cfg, 1, [](const LambdaModel&) { return 3.0; }).gamma == 0.0);

  cfg.penaltyGrid = {1.0, 0.1, 10.0};
  const auto tie = tunePenalty(s, basis, 0.1, cfg, 1, [](const LambdaModel&) { return 2.0; });
  CHECK(tie.gamma == 0.1);
  CHECK(tie.mimicSizes.size() == 3);

  // A size that grows with the penalty's flattening effect picks gamma = 0.
  cfg.penaltyGrid = {0.0, 1e9};
  const auto res = tunePenalty(s, basis, 0.1, cfg, 1, [](const LambdaModel& m) {
    return 1.0 / (1.0 + m.theta().squaredNorm());
  });
  CHECK(res.gamma == 0.0);

  cfg.penaltyGrid = {};
  CHECK_THROWS_AS(tunePenalty(s, basis, 0.1, cfg, 1, [](const LambdaModel&) { return 0.0; }), Error);
}
