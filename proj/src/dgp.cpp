#include "mdcp/dgp.hpp"

#include "mdcp/error.hpp"
#include "mdcp/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mdcp {

std::string suiteName(Suite s) {
  switch (s) {
    case Suite::Linear: return "linear";
    case Suite::NonlinearInteraction: return "nonlinear-interaction";
    case Suite::NonlinearSinusoid: return "nonlinear-sinusoid";
    case Suite::NonlinearSoftplus: return "nonlinear-softplus";
    case Suite::Temperature: return "temperature";
    case Suite::CovariateShift: return "covariate-shift";
    case Suite::CovariateAndConceptShift: return "covariate-and-concept-shift";
  }
  return "unknown";
}

Suite parseSuite(const std::string& name) {
  for (Suite s : {Suite::Linear, Suite::NonlinearInteraction, Suite::NonlinearSinusoid, Suite::NonlinearSoftplus,
                  Suite::Temperature, Suite::CovariateShift, Suite::CovariateAndConceptShift})
    if (suiteName(s) == name) return s;
  throw Error(Errc::BadConfig, "unknown suite '" + name + "'");
}

void SuiteConfig::validate() const {
  if (K < 1) throw Error(Errc::BadConfig, "K must be at least 1");
  if (d < kInformativeCount) throw Error(Errc::BadConfig, "d must be at least 4");
  if (classification && C < 2) throw Error(Errc::BadConfig, "C must be at least 2");
  if (!(tau >= 0.0)) throw Error(Errc::BadConfig, "tau must be nonnegative");
  if (!(deltaX >= 0.0)) throw Error(Errc::BadConfig, "deltaX must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  if (shiftSuite() && K != 3) throw Error(Errc::BadConfig, "shift suites are defined for K = 3");
  if (nPerSource < 1) throw Error(Errc::BadConfig, "nPerSource must be positive");
}

namespace {

Eigen::VectorXd randomUnitUnit(const std::vector<std::size_t>& support, std::size_t d, double magnitude, Rng& rng) {
  Eigen::VectorXd dir(static_cast<Eigen::Index>(support.size()));
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
  dir.normalize();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < support.size(); ++i) u(static_cast<Eigen::Index>(support[i])) = magnitude * dir(static_cast<Eigen::Index>(i));
  return u;
}

/// k distinct indices from pool, uniformly (partial Fisher-Yates), sorted.
std::vector<std::size_t> chooseSubset(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

double dot(const Eigen::VectorXd& a, std::span<const double> x) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) s += a(j) * x[static_cast<std::size_t>(j)];
  return s;
}

} // namespace

DrawnHyperparams sampleHyperparams(const SuiteConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto K = static_cast<Eigen::Index>(cfg.K);
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const auto C = static_cast<Eigen::Index>(cfg.C);
  DrawnHyperparams hp;

  // Fixed draw order, independent of suite and tau.
  std::vector<std::size_t> all(cfg.d);
  std::iota(all.begin(), all.end(), std::size_t{0});
  hp.informative = chooseSubset(all, kInformativeCount, rng);

  hp.uXi.resize(cfg.K);
  for (auto& u : hp.uXi) u = rng.uniform(-1.0, 1.0);
  hp.zIntercept.resize(K, C);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index c = 0; c < C; ++c) hp.zIntercept(k, c) = rng.normal();
  hp.betaBarClass = Eigen::MatrixXd::Zero(C, d);
  for (Eigen::Index c = 0; c < C; ++c)
    for (auto j : hp.informative) hp.betaBarClass(c, static_cast<Eigen::Index>(j)) = rng.normal();
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(C, d);
    for (Eigen::Index c = 0; c < C; ++c)
      for (auto j : hp.informative) delta(c, static_cast<Eigen::Index>(j)) = 0.15 * rng.normal();
    hp.deltaClass.push_back(std::move(delta));
  }

  hp.betaBar = Eigen::VectorXd::Zero(d);
  for (auto j : hp.informative) hp.betaBar(static_cast<Eigen::Index>(j)) = rng.normal();
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(d);
    for (auto j : hp.informative) delta(static_cast<Eigen::Index>(j)) = rng.normal();
    hp.deltaReg.push_back(std::move(delta));
  }
  hp.bBase = 0.5 * rng.normal();
  hp.vSource.resize(cfg.K);
  for (auto& v : hp.vSource) v = 0.5 * rng.normal();
  hp.snr = rng.uniform(5.0, 10.0);
  hp.noiseU01 = rng.uniform();

  hp.w = Eigen::MatrixXd::Zero(d, d);
  for (auto u : hp.informative)
    for (auto v : hp.informative) hp.w(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.1 * rng.normal();
  for (int r = 0; r < 3; ++r) {
    const auto support = chooseSubset(hp.informative, 3, rng);
    const double mag = rng.uniform(0.375, 0.875);
    hp.sinU.push_back(randomUnitUnit(support, cfg.d, mag, rng));
    hp.sinB.push_back(rng.uniform(-std::numbers::pi / 3.0, std::numbers::pi / 3.0));
    hp.sinA.push_back(rng.uniform(0.5, 1.5));
  }
  for (int r = 0; r < 3; ++r) {
    const auto support = chooseSubset(hp.informative, 3, rng);
    const double mag = rng.uniform(0.375, 0.875);
    hp.softU.push_back(randomUnitUnit(support, cfg.d, mag, rng));
    hp.softB.push_back(rng.uniform(-0.5, 0.5));
    hp.softA.push_back(rng.uniform(0.75, 2.0));
  }

  hp.shiftDir = randomUnitUnit(hp.informative, cfg.d, 1.0, rng);
  return hp;
}

double DrawnHyperparams::xi(const SuiteConfig& cfg, std::size_t k) const {
  switch (cfg.suite) {
    case Suite::CovariateShift: return cfg.tau;
    case Suite::CovariateAndConceptShift: return cfg.tau * (1.0 + 0.25 * cfg.tau * uXi[k]);
    default: return 2.5 * (1.0 + 0.25 * cfg.tau * uXi[k]);
  }
}

double DrawnHyperparams::intercept(const SuiteConfig& cfg, std::size_t k, std::size_t c) const {
  // The covariate-shift suite shares one intercept vector across sources.
  const std::size_t row = cfg.suite == Suite::CovariateShift ? 0 : k;
  return 0.4 * cfg.tau * zIntercept(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
}

double DrawnHyperparams::noiseMultiplier(const SuiteConfig& cfg) const {
  if (cfg.suite != Suite::Temperature) return 1.0;
  const double lo = std::max(0.0, 1.0 - cfg.tau / 4.0);
  const double hi = 1.0 + cfg.tau / 4.0;
  return lo + (hi - lo) * noiseU01;
}

Eigen::VectorXd DrawnHyperparams::covariateMean(const SuiteConfig& cfg, std::size_t k) const {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.d));
  if (!cfg.shiftSuite()) return mu;
  if (k == 1) mu = cfg.deltaX * shiftDir;
  if (k == 2) mu = -cfg.deltaX * shiftDir;
  return mu;
}

double DrawnHyperparams::g(const SuiteConfig& cfg, std::span<const double> x) const {
  double s = 0.0;
  switch (cfg.suite) {
    case Suite::NonlinearInteraction:
      for (auto u : informative)
        for (auto v : informative) s += w(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) * x[u] * x[v];
      return 2.0 * s;
    case Suite::NonlinearSinusoid:
      for (std::size_t r = 0; r < sinU.size(); ++r) s += sinA[r] * std::sin(dot(sinU[r], x) + sinB[r]);
      return 2.0 * s;
    case Suite::NonlinearSoftplus:
      for (std::size_t r = 0; r < softU.size(); ++r) {
        const double t = dot(softU[r], x) + softB[r];
        s += softA[r] * (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
      }
      return 2.0 * s;
    default: return 0.0;
  }
}

Eigen::VectorXd DrawnHyperparams::logits(const SuiteConfig& cfg, std::size_t k, std::span<const double> x) const {
  const auto C = static_cast<Eigen::Index>(cfg.C);
  Eigen::VectorXd eta(C);
  const double gx = g(cfg, x);
  const double scale = xi(cfg, k);
  const bool shared = cfg.suite == Suite::CovariateShift;
  for (Eigen::Index c = 0; c < C; ++c) {
    double lin = intercept(cfg, k, static_cast<std::size_t>(c));
    for (auto j : informative) {
      const auto jj = static_cast<Eigen::Index>(j);
      double beta = betaBarClass(c, jj);
      if (!shared) beta += cfg.tau * deltaClass[k](c, jj);
      lin += beta * x[j];
    }
    eta(c) = scale * lin + (c > 0 ? gx : 0.0);
  }
  return eta;
}

double DrawnHyperparams::regressionMean(const SuiteConfig& cfg, std::size_t k, std::span<const double> x) const {
  if (cfg.suite == Suite::CovariateShift) return dot(betaBar, x) + bBase;
  double m = bBase + cfg.tau * vSource[k] + g(cfg, x);
  for (auto j : informative) {
    const auto jj = static_cast<Eigen::Index>(j);
    m += (betaBar(jj) + 0.2 * cfg.tau * deltaReg[k](jj)) * x[j];
  }
  return m;
}

Eigen::MatrixXd sampleCovariates(std::size_t n, std::size_t d, const Eigen::VectorXd& mean, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const double a = std::sqrt(0.2), b = std::sqrt(0.8);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z0 = rng.normal();
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = a * z0 + b * rng.normal() + mean(j);
  }
  return x;
}

namespace {

std::vector<Eigen::MatrixXd> sampleAllCovariates(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng) {
  std::vector<Eigen::MatrixXd> xs;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    Rng sub = rng.substream(k);
    xs.push_back(sampleCovariates(cfg.nPerSource, cfg.d, hp.covariateMean(cfg, k), sub));
  }
  if (cfg.standardize) {
    Eigen::Index n = 0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.d));
    for (const auto& x : xs) {
      mean += x.colwise().sum().transpose();
      n += x.rows();
    }
    mean /= static_cast<double>(n);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& x : xs) var += (x.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    const Eigen::VectorXd sd = (var / static_cast<double>(std::max<Eigen::Index>(n - 1, 1))).cwiseSqrt();
    for (auto& x : xs) x = ((x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
  }
  return xs;
}

} // namespace

MultiSourceData generateClassification(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng) {
  if (!cfg.classification) throw Error(Errc::BadConfig, "generateClassification needs a classification suite");
  auto xs = sampleAllCovariates(hp, cfg, rng);
  std::vector<SourceDataset> sources;
  std::vector<double> p(cfg.C), row(cfg.d);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    Rng labelRng = rng.substream(1000 + k);
    ClassLabels y(cfg.nPerSource);
    for (std::size_t i = 0; i < cfg.nPerSource; ++i) {
      for (std::size_t j = 0; j < cfg.d; ++j) row[j] = xs[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const Eigen::VectorXd eta = hp.logits(cfg, k, row);
      for (std::size_t c = 0; c < cfg.C; ++c) p[c] = eta(static_cast<Eigen::Index>(c));
      softmaxInPlace(p);
      double u = labelRng.uniform();
      std::uint32_t c = 0;
      while (c + 1 < cfg.C && u >= p[c]) u -= p[c++];
      y[i] = c;
    }
    sources.push_back(makeSource(static_cast<int>(k), std::move(xs[k]), std::move(y)));
  }
  return MultiSourceData(cfg.task(), std::move(sources));
}

MultiSourceData generateRegression(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng,
                                   std::vector<double>* sigmaOut) {
  if (cfg.classification) throw Error(Errc::BadConfig, "generateRegression needs a regression suite");
  auto xs = sampleAllCovariates(hp, cfg, rng);
  std::vector<std::vector<double>> means(cfg.K);
  std::vector<double> row(cfg.d), sigma(cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    means[k].resize(cfg.nPerSource);
    for (std::size_t i = 0; i < cfg.nPerSource; ++i) {
      for (std::size_t j = 0; j < cfg.d; ++j) row[j] = xs[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      means[k][i] = hp.regressionMean(cfg, k, row);
    }
    // Realized-design SNR calibration: sigma^2 = Var(mu_k(X)) / SNR.
    const auto& m = means[k];
    const double avg = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
    double var = 0.0;
    for (double v : m) var += (v - avg) * (v - avg);
    var /= static_cast<double>(std::max<std::size_t>(m.size() - 1, 1));
    sigma[k] = std::sqrt(var / hp.snr) * hp.noiseMultiplier(cfg);
  }
  if (cfg.suite == Suite::CovariateShift) std::fill(sigma.begin(), sigma.end(), sigma[0]);

  std::vector<SourceDataset> sources;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    Rng noiseRng = rng.substream(1000 + k);
    RealLabels y(cfg.nPerSource);
    for (std::size_t i = 0; i < cfg.nPerSource; ++i) y[i] = means[k][i] + sigma[k] * noiseRng.normal();
    sources.push_back(makeSource(static_cast<int>(k), std::move(xs[k]), std::move(y)));
  }
  if (sigmaOut) *sigmaOut = sigma;
  return MultiSourceData(cfg.task(), std::move(sources));
}

MultiSourceData generate(const DrawnHyperparams& hp, const SuiteConfig& cfg, Rng& rng) {
  return cfg.classification ? generateClassification(hp, cfg, rng) : generateRegression(hp, cfg, rng);
}

} // namespace mdcp
