#include "mdcp/regsets.hpp"

#include "mdcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mdcp {

YGrid buildGrid(std::span<const double> labels, std::size_t M) {
  if (labels.empty()) throw Error(Errc::EmptyLabels, "grid needs at least one label");
  if (M < 2) throw Error(Errc::BadConfig, "grid size must be at least 2");
  const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
  YGrid g;
  g.yLow = *lo;
  g.yHigh = *hi;
  g.M = M;
  if (g.yLow == g.yHigh) {
    g.degenerate = true;
    g.delta = 0.0;
  } else {
    g.delta = (g.yHigh - g.yLow) / static_cast<double>(M - 1);
  }
  return g;
}

IntervalUnion IntervalUnion::fromIntervals(std::vector<Interval> parts) {
  std::sort(parts.begin(), parts.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  IntervalUnion u;
  for (const auto& p : parts) {
    if (p.hi < p.lo) throw Error(Errc::InvalidData, "interval with hi < lo");
    if (!u.parts_.empty() && p.lo <= u.parts_.back().hi) u.parts_.back().hi = std::max(u.parts_.back().hi, p.hi);
    else u.parts_.push_back(p);
  }
  return u;
}

bool IntervalUnion::contains(double y) const {
  const auto it = std::upper_bound(parts_.begin(), parts_.end(), y, [](double v, const Interval& iv) { return v < iv.lo; });
  return it != parts_.begin() && y <= std::prev(it)->hi;
}

double IntervalUnion::totalLength() const {
  double s = 0.0;
  for (const auto& p : parts_) s += p.hi - p.lo;
  return s;
}

double totalLength(const IntervalUnion& u) { return u.totalLength(); }

IntervalUnion gridSearchSet(const YGrid& grid, std::span<const bool> accepted) {
  if (accepted.size() != grid.size()) throw Error(Errc::InvalidData, "one acceptance flag per grid point required");
  if (grid.degenerate) {
    if (!accepted[0]) return {};
    const double c = grid.yLow;
    const double eps = std::max(std::abs(c), 1.0) * 1e-6;
    return IntervalUnion::fromIntervals({{c - eps, c + eps}});
  }
  std::vector<Interval> parts;
  std::size_t j = 0;
  while (j < grid.M) {
    if (!accepted[j]) {
      ++j;
      continue;
    }
    const std::size_t start = j;
    while (j + 1 < grid.M && accepted[j + 1]) ++j;
    parts.push_back({grid.point(start) - grid.delta, grid.point(j) + grid.delta});
    ++j;
  }
  return IntervalUnion::fromIntervals(std::move(parts));
}

IntervalUnion gridSearchSet(const YGrid& grid, const std::function<double(double)>& pAgg, double alpha) {
  const std::size_t n = grid.size();
  std::unique_ptr<bool[]> flags(new bool[n]);
  for (std::size_t j = 0; j < n; ++j) flags[j] = pAgg(grid.point(j)) >= alpha;
  return gridSearchSet(grid, std::span<const bool>(flags.get(), n));
}

} // namespace mdcp
