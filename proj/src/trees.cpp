#include "mdcp/trees.hpp"

#include "mdcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mdcp {

void BoostedTreesConfig::validate() const {
  if (numRounds < 0) throw Error(Errc::BadConfig, "numRounds must be nonnegative");
  if (maxDepth < 1) throw Error(Errc::BadConfig, "maxDepth must be at least 1");
  if (!(learningRate > 0.0 && learningRate <= 1.0)) throw Error(Errc::BadConfig, "learningRate must lie in (0,1]");
  if (minLeafSize < 1) throw Error(Errc::BadConfig, "minLeafSize must be at least 1");
  if (maxBins < 2 || maxBins > 256) throw Error(Errc::BadConfig, "maxBins must lie in [2,256]");
}

double RegressionTree::predict(std::span<const double> x) const {
  int node = 0;
  while (feature[static_cast<std::size_t>(node)] >= 0) {
    const auto i = static_cast<std::size_t>(node);
    node = x[static_cast<std::size_t>(feature[i])] <= threshold[i] ? left[i] : right[i];
  }
  return value[static_cast<std::size_t>(node)];
}

std::size_t RegressionTree::leafCount() const {
  return static_cast<std::size_t>(std::count_if(feature.begin(), feature.end(), [](int f) { return f < 0; }));
}

double TreeEnsemble::predict(std::span<const double> x) const {
  double s = base;
  for (const auto& t : trees) s += t.predict(x);
  return s;
}

void softmaxInPlace(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
}

namespace {

/// Quantile bin edges per feature; bin b holds edge[b-1] < x <= edge[b].
class BinMapper {
public:
  BinMapper(const Eigen::MatrixXd& x, int maxBins) : edges_(static_cast<std::size_t>(x.cols())) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<double> col(n);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = x(static_cast<Eigen::Index>(i), j);
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
      auto& e = edges_[static_cast<std::size_t>(j)];
      if (col.size() <= static_cast<std::size_t>(maxBins)) {
        for (std::size_t i = 0; i + 1 < col.size(); ++i) e.push_back(0.5 * (col[i] + col[i + 1]));
      } else {
        for (int b = 1; b < maxBins; ++b) {
          const auto pos = static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(col.size()) / maxBins);
          const double edge = 0.5 * (col[pos - 1] + col[pos]);
          if (e.empty() || edge > e.back()) e.push_back(edge);
        }
      }
    }
  }

  std::size_t numBins(std::size_t j) const { return edges_[j].size() + 1; }
  double edge(std::size_t j, std::size_t b) const { return edges_[j][b]; }

  std::uint8_t bin(std::size_t j, double v) const {
    const auto& e = edges_[j];
    return static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), v) - e.begin());
  }

private:
  std::vector<std::vector<double>> edges_;
};

struct BinnedMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::uint8_t> bins; // column-major

  std::uint8_t at(std::size_t i, std::size_t j) const { return bins[j * n + i]; }
};

BinnedMatrix binAll(const Eigen::MatrixXd& x, const BinMapper& mapper) {
  BinnedMatrix out;
  out.n = static_cast<std::size_t>(x.rows());
  out.d = static_cast<std::size_t>(x.cols());
  out.bins.resize(out.n * out.d);
  for (std::size_t j = 0; j < out.d; ++j)
    for (std::size_t i = 0; i < out.n; ++i)
      out.bins[j * out.n + i] = mapper.bin(j, x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return out;
}

constexpr double kMinHessian = 1e-12;
// Caps Newton steps in nearly pure softmax leaves where H is tiny.
constexpr double kMaxStep = 10.0;

/// Grows one tree on (gradient, hessian) pairs. Leaf value is
/// -scale * G / H, times the learning rate.
class TreeGrower {
public:
  TreeGrower(const BinnedMatrix& binned, const BinMapper& mapper, const BoostedTreesConfig& cfg)
      : binned_(binned), mapper_(mapper), cfg_(cfg) {}

  RegressionTree grow(std::span<const double> g, std::span<const double> h, double scale) {
    g_ = g;
    h_ = h;
    scale_ = scale;
    tree_ = RegressionTree{};
    std::vector<std::size_t> rows(binned_.n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    build(rows, 0);
    return std::move(tree_);
  }

private:
  struct Split {
    double gain = 0.0;
    std::size_t feature = 0;
    std::size_t bin = 0;
  };

  int addLeaf(double G, double H) {
    const int id = static_cast<int>(tree_.feature.size());
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    const double step = std::clamp(-scale_ * G / std::max(H, kMinHessian), -kMaxStep, kMaxStep);
    tree_.value.push_back(cfg_.learningRate * step);
    return id;
  }

  int build(const std::vector<std::size_t>& rows, int depth) {
    double G = 0.0, H = 0.0;
    for (auto r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const auto minLeaf = static_cast<std::size_t>(cfg_.minLeafSize);
    if (depth >= cfg_.maxDepth || rows.size() < 2 * minLeaf) return addLeaf(G, H);

    const Split best = findSplit(rows, G, H);
    if (best.gain <= 1e-12) return addLeaf(G, H);

    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) (binned_.at(r, best.feature) <= best.bin ? lrows : rrows).push_back(r);

    const int id = static_cast<int>(tree_.feature.size());
    tree_.feature.push_back(static_cast<int>(best.feature));
    tree_.threshold.push_back(mapper_.edge(best.feature, best.bin));
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    const int l = build(lrows, depth + 1);
    const int r = build(rrows, depth + 1);
    tree_.left[static_cast<std::size_t>(id)] = l;
    tree_.right[static_cast<std::size_t>(id)] = r;
    return id;
  }

  Split findSplit(const std::vector<std::size_t>& rows, double G, double H) {
    Split best;
    const double parent = G * G / std::max(H, kMinHessian);
    const auto minLeaf = static_cast<std::size_t>(cfg_.minLeafSize);
    for (std::size_t j = 0; j < binned_.d; ++j) {
      const std::size_t nb = mapper_.numBins(j);
      if (nb < 2) continue;
      histG_.assign(nb, 0.0);
      histH_.assign(nb, 0.0);
      histN_.assign(nb, 0);
      for (auto r : rows) {
        const auto b = binned_.at(r, j);
        histG_[b] += g_[r];
        histH_[b] += h_[r];
        ++histN_[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += histG_[b];
        hl += histH_[b];
        nl += histN_[b];
        if (nl < minLeaf) continue;
        if (rows.size() - nl < minLeaf) break;
        const double gr = G - gl, hr = H - hl;
        if (hl < kMinHessian || hr < kMinHessian) continue;
        const double gain = gl * gl / hl + gr * gr / hr - parent;
        if (gain > best.gain) best = {gain, j, b};
      }
    }
    return best;
  }

  const BinnedMatrix& binned_;
  const BinMapper& mapper_;
  const BoostedTreesConfig& cfg_;
  std::span<const double> g_, h_;
  double scale_ = 1.0;
  RegressionTree tree_;
  std::vector<double> histG_, histH_;
  std::vector<std::size_t> histN_;
};

} // namespace

TreeEnsemble fitSquaredLoss(const Eigen::MatrixXd& x, std::span<const double> y, const BoostedTreesConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0 || y.size() != n) throw Error(Errc::InvalidData, "squared-loss boosting needs matching nonempty x and y");

  TreeEnsemble ens;
  ens.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  const BinMapper mapper(x, cfg.maxBins);
  const BinnedMatrix binned = binAll(x, mapper);
  TreeGrower grower(binned, mapper, cfg);

  std::vector<double> pred(n, ens.base), g(n), h(n, 1.0), row(static_cast<std::size_t>(x.cols()));
  for (int round = 0; round < cfg.numRounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) g[i] = pred[i] - y[i];
    RegressionTree tree = grower.grow(g, h, 1.0);
    if (tree.feature.size() == 1 && std::abs(tree.value[0]) < 1e-15) break;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      pred[i] += tree.predict(row);
    }
    ens.trees.push_back(std::move(tree));
  }
  for (double p : pred)
    if (!std::isfinite(p)) throw Error(Errc::NonFinite, "squared-loss boosting diverged");
  return ens;
}

std::vector<TreeEnsemble> fitSoftmax(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                                     std::uint32_t numClasses, const BoostedTreesConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t C = numClasses;
  if (n == 0 || y.size() != n) throw Error(Errc::InvalidData, "softmax boosting needs matching nonempty x and y");

  std::vector<double> prior(C, 0.0);
  for (auto c : y) prior[c] += 1.0;
  std::vector<TreeEnsemble> ens(C);
  for (std::size_t c = 0; c < C; ++c) ens[c].base = std::log(std::max(prior[c] / static_cast<double>(n), 1e-8));

  const BinMapper mapper(x, cfg.maxBins);
  const BinnedMatrix binned = binAll(x, mapper);
  TreeGrower grower(binned, mapper, cfg);

  // F is n x C row-major logits.
  std::vector<double> F(n * C), P(n * C), g(n), h(n), row(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) F[i * C + c] = ens[c].base;
  const double newtonScale = static_cast<double>(C - 1) / static_cast<double>(C);

  for (int round = 0; round < cfg.numRounds; ++round) {
    P = F;
    for (std::size_t i = 0; i < n; ++i) softmaxInPlace(std::span<double>(P).subspan(i * C, C));
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = P[i * C + c];
        g[i] = p - (y[i] == c ? 1.0 : 0.0);
        h[i] = p * (1.0 - p);
      }
      RegressionTree tree = grower.grow(g, h, newtonScale);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        F[i * C + c] += tree.predict(row);
      }
      ens[c].trees.push_back(std::move(tree));
    }
  }
  for (double f : F)
    if (!std::isfinite(f)) throw Error(Errc::NonFinite, "softmax boosting diverged");
  return ens;
}

} // namespace mdcp
