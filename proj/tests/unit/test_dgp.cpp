#include "mdcp/dgp.hpp"
#include "mdcp/error.hpp"
#include "mdcp/trees.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

using namespace mdcp;

namespace {

SuiteConfig classCfg(Suite s, double tau) {
  SuiteConfig c;
  c.suite = s;
  c.tau = tau;
  return c;
}

SuiteConfig regCfg(Suite s, double tau) {
  auto c = classCfg(s, tau);
  c.classification = false;
  return c;
}


} // namespace

TEST_CASE("suite names round trip", "[dgp]") {
  for (Suite s : {Suite::Linear, Suite::NonlinearInteraction, Suite::NonlinearSinusoid, Suite::NonlinearSoftplus,
                  Suite::Temperature, Suite::CovariateShift, Suite::CovariateAndConceptShift})
    CHECK(parseSuite(suiteName(s)) == s);
  CHECK_THROWS_AS(parseSuite("quadratic"), Error);
}

TEST_CASE("config validation", "[dgp]") {
  auto c = classCfg(Suite::CovariateShift, 1.0);
  c.K = 2;
  CHECK_THROWS_AS(c.validate(), Error);
  c = classCfg(Suite::Linear, -1.0);
  CHECK_THROWS_AS(c.validate(), Error);
  c = classCfg(Suite::Linear, 1.0);
  c.d = 3;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("hyperparameters are deterministic and independent of tau", "[dgp]") {
  Rng a(5), b(5);
  const auto h1 = sampleHyperparams(classCfg(Suite::Temperature, 0.5), a);
  const auto h2 = sampleHyperparams(classCfg(Suite::Temperature, 4.5), b);
  CHECK(h1.informative == h2.informative);
  CHECK(h1.zIntercept == h2.zIntercept);
  CHECK(h1.uXi == h2.uXi);
  CHECK(h1.deltaClass[2] == h2.deltaClass[2]);
  CHECK(h1.noiseU01 == h2.noiseU01);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    const auto hp = sampleHyperparams(classCfg(Suite::Linear, 1.0), r);
    REQUIRE(hp.informative.size() == kInformativeCount);
    REQUIRE(std::adjacent_find(hp.informative.begin(), hp.informative.end()) == hp.informative.end());
    REQUIRE(hp.informative.back() < 10);
  }
}

TEST_CASE("tau = 0 removes source heterogeneity", "[dgp]") {
  Rng r(9);
  const auto cfg = classCfg(Suite::Linear, 0.0);
  const auto hp = sampleHyperparams(cfg, r);
  const std::vector<double> x{0.3, -0.2, 1.0, 0.5, -1.1, 0.0, 0.7, 0.2, -0.4, 0.9};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(hp.xi(cfg, k) == 2.5);
    for (std::size_t c = 0; c < 6; ++c) CHECK(hp.intercept(cfg, k, c) == 0.0);
    CHECK(hp.logits(cfg, k, x) == hp.logits(cfg, 0, x));
  }
  const auto rc = regCfg(Suite::Linear, 0.0);
  CHECK(hp.regressionMean(rc, 1, x) == hp.regressionMean(rc, 0, x));
  CHECK(hp.regressionMean(rc, 2, x) == hp.regressionMean(rc, 0, x));
}

TEST_CASE("tau = 0 gives matching class rates across sources", "[dgp]") {
  auto cfg = classCfg(Suite::Linear, 0.0);
  cfg.nPerSource = 20000;
  Rng hr(3), dr(4);
  const auto hp = sampleHyperparams(cfg, hr);
  const auto data = generateClassification(hp, cfg, dr);
  const double n = 20000.0;
  std::vector<std::vector<double>> rate(3, std::vector<double>(6, 0.0));
  for (std::size_t k = 0; k < 3; ++k)
    for (auto y : data.source(k).classes()) rate[k][y] += 1.0 / n;
  for (std::size_t c = 0; c < 6; ++c) {
    const double p = (rate[0][c] + rate[1][c] + rate[2][c]) / 3.0;
    const double seDiff = std::sqrt(2.0 * p * (1.0 - p) / n);
    for (std::size_t k = 1; k < 3; ++k) CHECK(std::abs(rate[k][c] - rate[0][c]) <= 3.0 * seDiff + 1e-12);
  }
}

TEST_CASE("non-informative coordinates do not affect logits or means", "[dgp]") {
  for (Suite s : {Suite::Linear, Suite::NonlinearInteraction, Suite::NonlinearSinusoid, Suite::NonlinearSoftplus}) {
    Rng r(21);
    const auto cfg = classCfg(s, 2.0);
    const auto hp = sampleHyperparams(cfg, r);
    std::vector<double> x{0.3, -0.2, 1.0, 0.5, -1.1, 0.0, 0.7, 0.2, -0.4, 0.9};
    const auto base = hp.logits(cfg, 1, x);
    const double mean = hp.regressionMean(regCfg(s, 2.0), 1, x);
    std::size_t other = 0;
    while (std::find(hp.informative.begin(), hp.informative.end(), other) != hp.informative.end()) ++other;
    x[other] = 123.0;
    CHECK(hp.logits(cfg, 1, x) == base);
    CHECK(hp.regressionMean(regCfg(s, 2.0), 1, x) == mean);
  }
}

TEST_CASE("class probabilities are normalized", "[dgp]") {
  Rng r(2);
  const auto cfg = classCfg(Suite::NonlinearSoftplus, 3.0);
  const auto hp = sampleHyperparams(cfg, r);
  Rng xr(3);
  const auto x = sampleCovariates(100, 10, Eigen::VectorXd::Zero(10), xr);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::vector<double> row(x.row(i).begin(), x.row(i).end());
    const Eigen::VectorXd eta = hp.logits(cfg, 0, row);
    std::vector<double> p(eta.data(), eta.data() + eta.size());
    softmaxInPlace(p);
    REQUIRE(std::accumulate(p.begin(), p.end(), 0.0) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("covariates have the equicorrelated covariance", "[dgp]") {
  Rng r(77);
  const auto x = sampleCovariates(60000, 4, Eigen::VectorXd::Zero(4), r);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(mean(i)) < 0.02);
    for (int j = 0; j < 4; ++j) CHECK(cov(i, j) == Catch::Approx(i == j ? 1.0 : 0.2).margin(0.02));
  }
}

TEST_CASE("shift suites place sources at 0, +delta v and -delta v", "[dgp]") {
  auto cfg = classCfg(Suite::CovariateShift, 2.0);
  cfg.deltaX = 1.5;
  cfg.nPerSource = 20000;
  Rng hr(1), dr(2);
  const auto hp = sampleHyperparams(cfg, hr);
  CHECK(hp.shiftDir.norm() == Catch::Approx(1.0));
  for (Eigen::Index j = 0; j < 10; ++j)
    if (std::find(hp.informative.begin(), hp.informative.end(), static_cast<std::size_t>(j)) == hp.informative.end())
      CHECK(hp.shiftDir(j) == 0.0);
  CHECK(hp.covariateMean(cfg, 0).isZero());
  CHECK(hp.covariateMean(cfg, 1).isApprox(1.5 * hp.shiftDir));
  CHECK(hp.covariateMean(cfg, 2).isApprox(-1.5 * hp.shiftDir));

  const auto data = generate(hp, cfg, dr);
  for (std::size_t k = 0; k < 3; ++k) {
    const Eigen::VectorXd m = data.source(k).x.colwise().mean().transpose();
    CHECK((m - hp.covariateMean(cfg, k)).cwiseAbs().maxCoeff() < 0.05);
  }
  // Shared conditional law: logits identical across sources at the same x.
  const std::vector<double> x(10, 0.25);
  CHECK(hp.logits(cfg, 1, x) == hp.logits(cfg, 0, x));
}

TEST_CASE("regression noise is calibrated to the drawn SNR", "[dgp]") {
  for (Suite s : {Suite::Linear, Suite::NonlinearSinusoid, Suite::CovariateAndConceptShift}) {
    auto cfg = regCfg(s, 2.5);
    cfg.deltaX = 1.0;
    Rng hr(40), dr(41);
    const auto hp = sampleHyperparams(cfg, hr);
    std::vector<double> sigma;
    const auto data = generateRegression(hp, cfg, dr, &sigma);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& src = data.source(k);
      std::vector<double> m(src.n());
      for (std::size_t i = 0; i < src.n(); ++i) {
        const std::vector<double> row(src.x.row(static_cast<Eigen::Index>(i)).begin(),
                                      src.x.row(static_cast<Eigen::Index>(i)).end());
        m[i] = hp.regressionMean(cfg, k, row);
      }
      const double avg = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
      double var = 0.0;
      for (double v : m) var += (v - avg) * (v - avg);
      var /= static_cast<double>(m.size() - 1);
      CHECK(var / (sigma[k] * sigma[k]) == Catch::Approx(hp.snr).epsilon(0.01));
    }
  }
}

TEST_CASE("covariate-shift regression shares the noise level", "[dgp]") {
  auto cfg = regCfg(Suite::CovariateShift, 1.0);
  cfg.deltaX = 2.0;
  Rng hr(6), dr(7);
  const auto hp = sampleHyperparams(cfg, hr);
  std::vector<double> sigma;
  generateRegression(hp, cfg, dr, &sigma);
  CHECK(sigma[1] == sigma[0]);
  CHECK(sigma[2] == sigma[0]);
}

TEST_CASE("linear mean recovers its slope by least squares", "[dgp]") {
  auto cfg = regCfg(Suite::Linear, 0.0);
  cfg.K = 1;
  cfg.nPerSource = 20000;
  Rng hr(8), dr(9);
  auto hp = sampleHyperparams(cfg, hr);
  const auto j1 = static_cast<Eigen::Index>(hp.informative[0]);
  hp.betaBar.setZero();
  hp.betaBar(j1) = 1.0;
  hp.snr = 5.0;
  const auto data = generateRegression(hp, cfg, dr);
  const auto& src = data.source(0);
  Eigen::MatrixXd design(src.x.rows(), src.x.cols() + 1);
  design << Eigen::VectorXd::Ones(src.x.rows()), src.x;
  const Eigen::Map<const Eigen::VectorXd> y(src.reals().data(), static_cast<Eigen::Index>(src.reals().size()));
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
  CHECK(coef(j1 + 1) == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("temperature suite scales the noise multiplier with tau", "[dgp]") {
  Rng r(1);
  auto cfg = regCfg(Suite::Temperature, 0.0);
  const auto hp = sampleHyperparams(cfg, r);
  CHECK(hp.noiseMultiplier(cfg) == 1.0);
  cfg.tau = 4.0;
  CHECK(hp.noiseMultiplier(cfg) == Catch::Approx(2.0 * hp.noiseU01));
  CHECK(hp.noiseMultiplier(regCfg(Suite::Linear, 4.0)) == 1.0);
}

TEST_CASE("same seed gives identical data", "[dgp]") {
  auto cfg = classCfg(Suite::NonlinearInteraction, 1.5);
  cfg.nPerSource = 200;
  Rng h1(3), h2(3), d1(4), d2(4);
  const auto a = generate(sampleHyperparams(cfg, h1), cfg, d1);
  const auto b = generate(sampleHyperparams(cfg, h2), cfg, d2);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.source(k).x == b.source(k).x);
    CHECK(a.source(k).classes() == b.source(k).classes());
  }
}
