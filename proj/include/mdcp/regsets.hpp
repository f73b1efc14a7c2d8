#pragma once

#include <functional>
#include <span>
#include <vector>

namespace mdcp {

struct YGrid {
  double yLow = 0.0;
  double yHigh = 0.0;
  std::size_t M = 0;
  double delta = 0.0;
  /// All labels were equal; the grid is the single point yLow.
  bool degenerate = false;

  double point(std::size_t j) const { return j + 1 == M ? yHigh : yLow + static_cast<double>(j) * delta; }
  std::size_t size() const { return degenerate ? 1 : M; }
};

YGrid buildGrid(std::span<const double> labels, std::size_t M = 100);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Interval&) const = default;
};

/// Sorted, disjoint closed intervals.
class IntervalUnion {
public:
  IntervalUnion() = default;
  /// Sorts and merges overlapping or touching intervals.
  static IntervalUnion fromIntervals(std::vector<Interval> parts);

  const std::vector<Interval>& intervals() const { return parts_; }
  bool empty() const { return parts_.empty(); }
  bool contains(double y) const;
  double totalLength() const;

private:
  std::vector<Interval> parts_;
};

double totalLength(const IntervalUnion& u);

/// Accepts grid points with pAgg >= alpha, turns each maximal run [jL, jR]
/// into [y_jL - delta, y_jR + delta], and merges.
IntervalUnion gridSearchSet(const YGrid& grid, const std::function<double(double)>& pAgg, double alpha);

/// Same rule on precomputed acceptance flags, one per grid point.
IntervalUnion gridSearchSet(const YGrid& grid, std::span<const bool> accepted);

} // namespace mdcp
