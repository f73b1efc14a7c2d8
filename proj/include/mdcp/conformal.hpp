#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mdcp {

/// Conformity score s(x, y); lower means more conforming.
using ScoreFunction = std::function<double(std::span<const double> x, double y)>;

/// Per-source sorted calibration scores.
class CalibrationBank {
public:
  CalibrationBank() = default;
  explicit CalibrationBank(std::vector<std::vector<double>> scores);

  std::size_t K() const { return scores_.size(); }
  std::size_t n(std::size_t k) const { return at(k).size(); }
  const std::vector<double>& scores(std::size_t k) const { return at(k); }

  std::size_t countLess(std::size_t k, double s) const;
  std::size_t countLessEqual(std::size_t k, double s) const;

private:
  const std::vector<double>& at(std::size_t k) const;
  std::vector<std::vector<double>> scores_;
};

/// (1 + #{S <= s}) / (1 + n).
double pValueDeterministic(const CalibrationBank& bank, std::size_t k, double s);

/// (#{S > s} + (1 + #{S = s}) u) / (n + 1).
double pValueRandomized(const CalibrationBank& bank, std::size_t k, double s, double u);

double maxP(std::span<const double> pValues);

struct PValueMode {
  bool randomized = false;
  std::vector<double> u; // one per source when randomized

  static PValueMode deterministic() { return {}; }
  static PValueMode withUniforms(std::vector<double> u);

  double pValue(const CalibrationBank& bank, std::size_t k, double s) const;
};

/// max_k p_k where p_k uses score scoreOf(k).
double aggregatedPValue(const CalibrationBank& bank, const PValueMode& mode, std::span<const double> scorePerSource);

/// {y : max_k p_k(x, y) >= alpha}. `scores` holds one function per source or a
/// single shared one.
std::vector<std::uint32_t> classificationSet(std::span<const ScoreFunction> scores, const CalibrationBank& bank,
                                             std::span<const double> x, std::uint32_t numClasses, double alpha,
                                             const PValueMode& mode);

/// Same rule on a precomputed K x C (or 1 x C when shared) table of scores, row-major.
std::vector<std::uint32_t> classificationSetFromTable(std::span<const double> table, std::size_t rows,
                                                      std::uint32_t numClasses, const CalibrationBank& bank,
                                                      double alpha, const PValueMode& mode);

/// inf{t : G_U(t) >= alpha} over W = -S, with
/// G_U(t) = (#{W < t} + (1 + #{W = t}) U) / (n + 1).
struct RandomizedQuantile {
  enum class Kind { MinusInfinity, Finite, PlusInfinity };

  Kind kind = Kind::Finite;
  double value = 0.0;
  /// Whether G_U(value) >= alpha, i.e. the acceptance region is [value, inf).
  bool closed = true;

  /// Whether h falls in {t : G_U(t) >= alpha}.
  bool accepts(double h) const;
};

RandomizedQuantile empiricalRandomizedQuantile(const CalibrationBank& bank, std::size_t k, double alpha, double u);

} // namespace mdcp
