#include "mdcp/dualopt.hpp"

#include "mdcp/error.hpp"
#include "mdcp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdcp {

using nlohmann::json;

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

SplineBasis::SplineBasis(std::vector<double> lo, std::vector<double> hi, int numKnots, int degree, bool bias)
    : lo_(std::move(lo)), hi_(std::move(hi)), numKnots_(numKnots), degree_(degree), bias_(bias) {
  if (lo_.size() != hi_.size()) throw Error(Errc::InvalidData, "knot range dimensions disagree");
  if (numKnots_ < 2 || degree_ < 0) throw Error(Errc::BadConfig, "need at least 2 knots and degree >= 0");
  for (std::size_t j = 0; j < lo_.size(); ++j)
    if (!(hi_[j] >= lo_[j])) throw Error(Errc::InvalidData, "knot range must satisfy lo <= hi");
}

SplineBasis SplineBasis::fit(const Eigen::MatrixXd& x, int numKnots, int degree, bool bias) {
  if (x.rows() == 0) throw Error(Errc::InvalidData, "cannot place knots without data");
  std::vector<double> lo(static_cast<std::size_t>(x.cols())), hi(lo.size());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    lo[static_cast<std::size_t>(j)] = x.col(j).minCoeff();
    hi[static_cast<std::size_t>(j)] = x.col(j).maxCoeff();
  }
  return SplineBasis(std::move(lo), std::move(hi), numKnots, degree, bias);
}

void SplineBasis::evalDim(std::size_t j, double v, std::span<double> out) const {
  const int p = degree_;
  const double lo = lo_[j];
  const double width = hi_[j] > lo ? hi_[j] - lo : 1.0;
  const double step = width / (numKnots_ - 1);
  v = std::clamp(v, lo, lo + width);
  auto knot = [&](int i) { return lo + (i - p) * step; };

  // Span index s with knot(s) <= v < knot(s+1), restricted to the base interval.
  int s = p + static_cast<int>(std::floor((v - lo) / step));
  s = std::clamp(s, p, p + numKnots_ - 2);

  // Cox-de Boor triangle for the p+1 nonzero functions B_{s-p..s}.
  double N[16] = {1.0};
  double left[16], right[16];
  for (int r = 1; r <= p; ++r) {
    left[r] = v - knot(s + 1 - r);
    right[r] = knot(s + r) - v;
    double saved = 0.0;
    for (int q = 0; q < r; ++q) {
      const double tmp = N[q] / (right[q + 1] + left[r - q]);
      N[q] = saved + right[q + 1] * tmp;
      saved = left[r - q] * tmp;
    }
    N[r] = saved;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (int q = 0; q <= p; ++q) out[static_cast<std::size_t>(s - p + q)] = N[q];
}

void SplineBasis::features(std::span<const double> x, std::span<double> out) const {
  const std::size_t B = perDim();
  for (std::size_t j = 0; j < d(); ++j) evalDim(j, x[j], out.subspan(j * B, B));
  if (bias_) out[d() * B] = 1.0;
}

Eigen::VectorXd SplineBasis::features(std::span<const double> x) const {
  Eigen::VectorXd f(static_cast<Eigen::Index>(m()));
  features(x, std::span<double>(f.data(), static_cast<std::size_t>(f.size())));
  return f;
}

Eigen::MatrixXd SplineBasis::featureMatrix(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(m()));
  std::vector<double> row(static_cast<std::size_t>(x.cols())), feat(m());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    features(row, feat);
    for (std::size_t c = 0; c < feat.size(); ++c) out(i, static_cast<Eigen::Index>(c)) = feat[c];
  }
  return out;
}

Eigen::MatrixXd SplineBasis::secondDifference() const {
  const auto B = static_cast<Eigen::Index>(perDim());
  const Eigen::Index rowsPer = std::max<Eigen::Index>(B - 2, 0);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d()) * rowsPer, static_cast<Eigen::Index>(m()));
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d()); ++j)
    for (Eigen::Index r = 0; r < rowsPer; ++r) {
      D(j * rowsPer + r, j * B + r) = 1.0;
      D(j * rowsPer + r, j * B + r + 1) = -2.0;
      D(j * rowsPer + r, j * B + r + 2) = 1.0;
    }
  return D;
}

json SplineBasis::toJson() const {
  return {{"lo", lo_}, {"hi", hi_}, {"numKnots", numKnots_}, {"degree", degree_}, {"bias", bias_}};
}

SplineBasis SplineBasis::fromJson(const json& j) {
  return SplineBasis(j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>(),
                     j.at("numKnots").get<int>(), j.at("degree").get<int>(), j.at("bias").get<bool>());
}

LambdaModel::LambdaModel(SplineBasis basis, Eigen::MatrixXd theta) : basis_(std::move(basis)), theta_(std::move(theta)) {
  if (theta_.cols() != static_cast<Eigen::Index>(basis_.m())) throw Error(Errc::InvalidData, "theta must have m columns");
  if (!theta_.allFinite()) throw Error(Errc::NonFinite, "theta has non-finite entries");
}

Eigen::VectorXd LambdaModel::lambdaFromFeatures(const Eigen::VectorXd& feat) const {
  Eigen::VectorXd z = theta_ * feat;
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = softplus(z(k));
  return z;
}

Eigen::VectorXd LambdaModel::lambdaAt(std::span<const double> x) const { return lambdaFromFeatures(basis_.features(x)); }

json LambdaModel::toJson() const {
  json theta = json::array();
  for (Eigen::Index k = 0; k < theta_.rows(); ++k) {
    std::vector<double> row(static_cast<std::size_t>(theta_.cols()));
    for (Eigen::Index c = 0; c < theta_.cols(); ++c) row[static_cast<std::size_t>(c)] = theta_(k, c);
    theta.push_back(row);
  }
  return {{"version", kLambdaJsonVersion}, {"kind", "lambda"}, {"basis", basis_.toJson()}, {"theta", theta}};
}

LambdaModel LambdaModel::fromJson(const json& j) {
  if (!j.contains("version") || j.at("version").get<int>() != kLambdaJsonVersion)
    throw Error(Errc::InvalidData, "lambda json has a missing or unsupported version");
  SplineBasis basis = SplineBasis::fromJson(j.at("basis"));
  const auto& t = j.at("theta");
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(basis.m()));
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto row = t.at(k).get<std::vector<double>>();
    if (row.size() != basis.m()) throw Error(Errc::InvalidData, "theta row length must equal m");
    for (std::size_t c = 0; c < row.size(); ++c) theta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = row[c];
  }
  return LambdaModel(std::move(basis), std::move(theta));
}

DualTrainingSet DualTrainingSet::build(const SplineBasis& basis, const SourceDataset& pooledRows,
                                       const ConditionalModels& models) {
  const auto n = static_cast<Eigen::Index>(pooledRows.n());
  const auto K = static_cast<Eigen::Index>(models.K());
  DualTrainingSet s;
  s.features = basis.featureMatrix(pooledRows.x);
  s.fhat.resize(n, K);
  s.ppool.resize(n);
  std::vector<double> f(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = rowVector(pooledRows.x, i);
    const double y = pooledRows.label(static_cast<std::size_t>(i));
    models.densities(x, y, f);
    for (Eigen::Index k = 0; k < K; ++k) s.fhat(i, k) = f[static_cast<std::size_t>(k)];
    s.ppool(i) = models.pooledDensity(x, y);
  }
  if (!s.fhat.allFinite() || !s.ppool.allFinite()) throw Error(Errc::NonFinite, "density query returned NaN");
  return s;
}

void DualTrainConfig::validate() const {
  if (batchSize < 1) throw Error(Errc::BadConfig, "batchSize must be at least 1");
  if (maxEpochs < 0) throw Error(Errc::BadConfig, "maxEpochs must be nonnegative");
  if (!(denomFloor > 0.0)) throw Error(Errc::BadConfig, "denomFloor must be positive");
  if (!(penaltyGamma >= 0.0)) throw Error(Errc::BadConfig, "penaltyGamma must be nonnegative");
  for (double g : penaltyGrid)
    if (!(g >= 0.0)) throw Error(Errc::BadConfig, "penalty grid entries must be nonnegative");
  if (!(stepSize > 0.0)) throw Error(Errc::BadConfig, "stepSize must be positive");
}

namespace {

std::vector<std::size_t> allRows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

} // namespace

double empiricalDualObjective(const Eigen::MatrixXd& theta, const DualTrainingSet& data, std::span<const std::size_t> rows,
                              double alpha, double gamma, double floor, const Eigen::MatrixXd& D) {
  if (rows.empty()) throw Error(Errc::InvalidData, "objective needs a nonempty batch");
  const auto K = theta.rows();
  double first = 0.0, sumLambda = 0.0, sumSq = 0.0;
  for (auto i : rows) {
    const auto r = static_cast<Eigen::Index>(i);
    double h = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double lam = softplus(theta.row(k).dot(data.features.row(r)));
      h += lam * data.fhat(r, k);
      sumLambda += lam;
      sumSq += lam * lam;
    }
    first += std::min(1.0 - h, 0.0) / std::max(data.ppool(r), floor);
  }
  const double nb = static_cast<double>(rows.size());
  double value = first / nb + (1.0 - alpha) * sumLambda / nb;
  if (gamma != 0.0) value -= gamma * (sumSq / nb + (D * theta.transpose()).squaredNorm());
  if (!std::isfinite(value)) throw Error(Errc::NonFinite, "objective is not finite");
  return value;
}

double empiricalDualObjective(const Eigen::MatrixXd& theta, const DualTrainingSet& data, double alpha, double gamma,
                              double floor, const Eigen::MatrixXd& D) {
  const auto rows = allRows(data.n());
  return empiricalDualObjective(theta, data, rows, alpha, gamma, floor, D);
}

Eigen::MatrixXd objectiveGradient(const Eigen::MatrixXd& theta, const DualTrainingSet& data,
                                  std::span<const std::size_t> rows, double alpha, double gamma, double floor,
                                  const Eigen::MatrixXd& D) {
  if (rows.empty()) throw Error(Errc::InvalidData, "gradient needs a nonempty batch");
  const auto K = theta.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(K, theta.cols());
  Eigen::VectorXd z(K), lam(K), coef(K);
  for (auto i : rows) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto feat = data.features.row(r);
    double h = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      z(k) = theta.row(k).dot(feat);
      lam(k) = softplus(z(k));
      h += lam(k) * data.fhat(r, k);
    }
    const bool kinkActive = h >= 1.0;
    const double invDen = 1.0 / std::max(data.ppool(r), floor);
    for (Eigen::Index k = 0; k < K; ++k) {
      double c = 1.0 - alpha;
      if (kinkActive) c -= data.fhat(r, k) * invDen;
      if (gamma != 0.0) c -= 2.0 * gamma * lam(k);
      coef(k) = c * sigmoid(z(k));
    }
    grad.noalias() += coef * feat;
  }
  grad /= static_cast<double>(rows.size());
  if (gamma != 0.0) grad -= 2.0 * gamma * (D.transpose() * D * theta.transpose()).transpose();
  if (!grad.allFinite()) throw Error(Errc::NonFinite, "gradient is not finite");
  return grad;
}

TrainResult trainLambda(const DualTrainingSet& data, const SplineBasis& basis, double alpha, const DualTrainConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = data.n();
  if (n == 0) throw Error(Errc::InvalidData, "lambda training needs rows");
  if (data.features.cols() != static_cast<Eigen::Index>(basis.m())) throw Error(Errc::InvalidData, "feature width differs from basis");
  const auto K = static_cast<Eigen::Index>(data.K());
  const Eigen::MatrixXd D = basis.secondDifference();
  const double gamma = cfg.penaltyGamma;

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(basis.m()));
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
  Eigen::MatrixXd m2 = m1;
  TrainResult res;
  double best = empiricalDualObjective(theta, data, alpha, gamma, cfg.denomFloor, D);
  Eigen::MatrixXd bestTheta = theta;
  res.epochObjective.push_back(best);
  res.bestSoFar.push_back(best);

  std::vector<std::size_t> order = allRows(n);
  const Rng base(seed, 0x6c616d626461ull);
  long step = 0;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.maxEpochs; ++epoch) {
    Rng rng = base.substream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batchSize)) {
      const std::size_t len = std::min(static_cast<std::size_t>(cfg.batchSize), n - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const Eigen::MatrixXd g = objectiveGradient(theta, data, batch, alpha, gamma, cfg.denomFloor, D);
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      // Ascent step.
      theta.array() += cfg.stepSize * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adamEps);
    }
    if (!theta.allFinite()) throw Error(Errc::NonFinite, "theta diverged at epoch " + std::to_string(epoch));
    const double obj = empiricalDualObjective(theta, data, alpha, gamma, cfg.denomFloor, D);
    res.epochObjective.push_back(obj);
    if (obj > best) {
      best = obj;
      bestTheta = theta;
      res.bestEpoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.earlyStopPatience) {
      res.bestSoFar.push_back(best);
      break;
    }
    res.bestSoFar.push_back(best);
  }
  res.model = LambdaModel(basis, bestTheta);
  return res;
}

ScoreFunction sharedScore(const LambdaModel& lambda, const ConditionalModels& models) {
  return [lambda, &models](std::span<const double> x, double y) {
    const Eigen::VectorXd lam = lambda.lambdaAt(x);
    std::vector<double> f(models.K());
    models.densities(x, y, f);
    double h = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) h += lam(static_cast<Eigen::Index>(k)) * f[k];
    return -h;
  };
}

TuneResult tunePenalty(const DualTrainingSet& data, const SplineBasis& basis, double alpha, const DualTrainConfig& cfg,
                       std::uint64_t seed, const std::function<double(const LambdaModel&)>& mimicSize) {
  if (cfg.penaltyGrid.empty()) throw Error(Errc::BadConfig, "penalty grid is empty");
  TuneResult res;
  res.grid = cfg.penaltyGrid;
  std::sort(res.grid.begin(), res.grid.end());
  double bestSize = std::numeric_limits<double>::infinity();
  for (double g : res.grid) {
    DualTrainConfig c = cfg;
    c.penaltyGamma = g;
    const TrainResult tr = trainLambda(data, basis, alpha, c, seed);
    const double size = mimicSize(tr.model);
    res.mimicSizes.push_back(size);
    if (size < bestSize) {
      bestSize = size;
      res.gamma = g;
    }
  }
  return res;
}

} // namespace mdcp
