#include "mdcp/conformal.hpp"

#include "mdcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mdcp {

CalibrationBank::CalibrationBank(std::vector<std::vector<double>> scores) : scores_(std::move(scores)) {
  for (auto& s : scores_) {
    for (double v : s)
      if (!std::isfinite(v)) throw Error(Errc::NonFinite, "calibration score is not finite");
    std::sort(s.begin(), s.end());
  }
}

const std::vector<double>& CalibrationBank::at(std::size_t k) const {
  if (k >= scores_.size()) throw Error(Errc::UnknownSource, "source " + std::to_string(k) + " not in bank");
  return scores_[k];
}

std::size_t CalibrationBank::countLess(std::size_t k, double s) const {
  const auto& v = at(k);
  return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
}

std::size_t CalibrationBank::countLessEqual(std::size_t k, double s) const {
  const auto& v = at(k);
  return static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), s) - v.begin());
}

double pValueDeterministic(const CalibrationBank& bank, std::size_t k, double s) {
  const auto n = static_cast<double>(bank.n(k));
  return (1.0 + static_cast<double>(bank.countLessEqual(k, s))) / (1.0 + n);
}

double pValueRandomized(const CalibrationBank& bank, std::size_t k, double s, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw Error(Errc::BadUniform, "u must lie in [0,1]");
  const std::size_t n = bank.n(k);
  const std::size_t le = bank.countLessEqual(k, s);
  const std::size_t eq = le - bank.countLess(k, s);
  return (static_cast<double>(n - le) + (1.0 + static_cast<double>(eq)) * u) / (static_cast<double>(n) + 1.0);
}

double maxP(std::span<const double> pValues) {
  if (pValues.empty()) throw Error(Errc::EmptyVector, "maxP of an empty vector");
  return *std::max_element(pValues.begin(), pValues.end());
}

PValueMode PValueMode::withUniforms(std::vector<double> u) {
  for (double v : u)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::BadUniform, "u must lie in [0,1]");
  return {true, std::move(u)};
}

double PValueMode::pValue(const CalibrationBank& bank, std::size_t k, double s) const {
  if (!randomized) return pValueDeterministic(bank, k, s);
  if (k >= u.size()) throw Error(Errc::UnknownSource, "no uniform for source " + std::to_string(k));
  return pValueRandomized(bank, k, s, u[k]);
}

double aggregatedPValue(const CalibrationBank& bank, const PValueMode& mode, std::span<const double> scorePerSource) {
  double best = 0.0;
  for (std::size_t k = 0; k < bank.K(); ++k)
    best = std::max(best, mode.pValue(bank, k, scorePerSource[scorePerSource.size() == 1 ? 0 : k]));
  return best;
}

std::vector<std::uint32_t> classificationSet(std::span<const ScoreFunction> scores, const CalibrationBank& bank,
                                             std::span<const double> x, std::uint32_t numClasses, double alpha,
                                             const PValueMode& mode) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1]");
  if (scores.size() != 1 && scores.size() != bank.K()) throw Error(Errc::InvalidData, "need one score per source or one shared");
  std::vector<double> table(scores.size() * numClasses);
  for (std::size_t r = 0; r < scores.size(); ++r)
    for (std::uint32_t y = 0; y < numClasses; ++y) table[r * numClasses + y] = scores[r](x, static_cast<double>(y));
  return classificationSetFromTable(table, scores.size(), numClasses, bank, alpha, mode);
}

std::vector<std::uint32_t> classificationSetFromTable(std::span<const double> table, std::size_t rows,
                                                      std::uint32_t numClasses, const CalibrationBank& bank,
                                                      double alpha, const PValueMode& mode) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t y = 0; y < numClasses; ++y) {
    for (std::size_t k = 0; k < bank.K(); ++k) {
      const double s = table[(rows == 1 ? 0 : k) * numClasses + y];
      if (mode.pValue(bank, k, s) >= alpha) {
        out.push_back(y);
        break;
      }
    }
  }
  return out;
}

bool RandomizedQuantile::accepts(double h) const {
  switch (kind) {
    case Kind::MinusInfinity: return true;
    case Kind::PlusInfinity: return false;
    case Kind::Finite: return closed ? h >= value : h > value;
  }
  return false;
}

RandomizedQuantile empiricalRandomizedQuantile(const CalibrationBank& bank, std::size_t k, double alpha, double u) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::BadLevel, "alpha must lie in (0,1)");
  if (!(u >= 0.0 && u <= 1.0)) throw Error(Errc::BadUniform, "u must lie in [0,1]");
  const auto& s = bank.scores(k);
  const std::size_t n = s.size();
  const double denom = static_cast<double>(n) + 1.0;
  // Arithmetic mirrors pValueRandomized so that acceptance agrees bit-for-bit.
  if (u / denom >= alpha) return {RandomizedQuantile::Kind::MinusInfinity, 0.0, true};

  // W = -S ascending is S descending.
  std::size_t less = 0;
  std::size_t i = n;
  while (i > 0) {
    const double sv = s[i - 1];
    std::size_t m = 0;
    while (i > 0 && s[i - 1] == sv) {
      --i;
      ++m;
    }
    const double w = -sv;
    if ((static_cast<double>(less) + (1.0 + static_cast<double>(m)) * u) / denom >= alpha)
      return {RandomizedQuantile::Kind::Finite, w, true};
    if ((static_cast<double>(less + m) + 1.0 * u) / denom >= alpha) return {RandomizedQuantile::Kind::Finite, w, false};
    less += m;
  }
  return {RandomizedQuantile::Kind::PlusInfinity, 0.0, false};
}

} // namespace mdcp
