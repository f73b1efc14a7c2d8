#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace mdcp {

struct TaskKind {
  enum class Type { Classification, Regression };

  Type type = Type::Regression;
  std::uint32_t numClasses = 0;

  static TaskKind classification(std::uint32_t numClasses);
  static TaskKind regression() { return {}; }

  bool isClassification() const { return type == Type::Classification; }
  bool operator==(const TaskKind&) const = default;
};

using ClassLabels = std::vector<std::uint32_t>;
using RealLabels = std::vector<double>;
using Labels = std::variant<ClassLabels, RealLabels>;

/// Labeled rows from one source (or a pooled concatenation of sources).
///
/// `rowSource` and `rowIndex` record provenance: row i came from row
/// `rowIndex[i]` of source `rowSource[i]` in the original data.
struct SourceDataset {
  int sourceId = 0;
  Eigen::MatrixXd x;
  Labels y;
  std::vector<int> rowSource;
  std::vector<std::size_t> rowIndex;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(x.cols()); }

  const ClassLabels& classes() const;
  const RealLabels& reals() const;
  /// Label of row i as a double (class index for classification).
  double label(std::size_t i) const;

  /// Throws InvalidData on shape mismatch, NaN, or out-of-range classes.
  void validate(const TaskKind& task) const;
};

/// Copy of row i as a contiguous vector.
inline std::vector<double> rowVector(const Eigen::MatrixXd& x, Eigen::Index i) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(j)] = x(i, j);
  return out;
}

/// Build a source dataset with identity provenance.
SourceDataset makeSource(int sourceId, Eigen::MatrixXd x, Labels y);

/// Rows `rows` of `ds`, provenance preserved.
SourceDataset subset(const SourceDataset& ds, std::span<const std::size_t> rows);

struct SplitPlan {
  std::uint64_t seed = 0;
  double train = 0.375;
  double calib = 0.125;
  double test = 0.5;

  void validate() const;
};

class MultiSourceData {
public:
  MultiSourceData(TaskKind task, std::vector<SourceDataset> sources);

  const TaskKind& task() const { return task_; }
  std::size_t K() const { return sources_.size(); }
  std::size_t d() const { return sources_.front().d(); }
  const SourceDataset& source(std::size_t k) const { return sources_.at(k); }
  const std::vector<SourceDataset>& sources() const { return sources_; }
  std::size_t totalRows() const;
  /// w_k = n_k / n.
  std::vector<double> weights() const;

private:
  TaskKind task_;
  std::vector<SourceDataset> sources_;
};

struct Folds {
  MultiSourceData train;
  MultiSourceData calib;
  MultiSourceData test;
};

/// Per-source fold sizes: floor(train*n), floor(calib*n), remainder to test.
std::array<std::size_t, 3> foldSizes(std::size_t n, const SplitPlan& plan);

/// Deterministic per-source random split.
Folds split(const MultiSourceData& data, const SplitPlan& plan);

/// Concatenate all sources, keeping provenance in rowSource/rowIndex.
SourceDataset pool(const MultiSourceData& data);

/// CSV with header `source,y,x1,...,xd`. Sources must be 0..K-1.
MultiSourceData loadCsv(const std::filesystem::path& path, const TaskKind& task);
void saveCsv(const MultiSourceData& data, const std::filesystem::path& path);

} // namespace mdcp
