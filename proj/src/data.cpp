#include "mdcp/data.hpp"

#include "mdcp/error.hpp"
#include "mdcp/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace mdcp {

TaskKind TaskKind::classification(std::uint32_t numClasses) {
  if (numClasses < 2) throw Error(Errc::BadConfig, "classification needs at least 2 classes");
  return {Type::Classification, numClasses};
}

const ClassLabels& SourceDataset::classes() const {
  if (const auto* c = std::get_if<ClassLabels>(&y)) return *c;
  throw Error(Errc::InvalidData, "dataset holds real labels, class labels requested");
}

const RealLabels& SourceDataset::reals() const {
  if (const auto* r = std::get_if<RealLabels>(&y)) return *r;
  throw Error(Errc::InvalidData, "dataset holds class labels, real labels requested");
}

double SourceDataset::label(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v[i]); }, y);
}

void SourceDataset::validate(const TaskKind& task) const {
  const std::size_t ny = std::visit([](const auto& v) { return v.size(); }, y);
  if (ny != n()) throw Error(Errc::InvalidData, "feature rows and labels differ in length");
  if (rowSource.size() != n() || rowIndex.size() != n())
    throw Error(Errc::InvalidData, "provenance arrays do not match row count");
  if (!x.allFinite()) throw Error(Errc::InvalidData, "non-finite feature entry");
  if (task.isClassification()) {
    for (auto c : classes())
      if (c >= task.numClasses) throw Error(Errc::InvalidData, "class label out of range");
  } else {
    for (double v : reals())
      if (!std::isfinite(v)) throw Error(Errc::InvalidData, "non-finite label");
  }
}

SourceDataset makeSource(int sourceId, Eigen::MatrixXd x, Labels y) {
  SourceDataset ds;
  ds.sourceId = sourceId;
  const auto n = static_cast<std::size_t>(x.rows());
  ds.x = std::move(x);
  ds.y = std::move(y);
  ds.rowSource.assign(n, sourceId);
  ds.rowIndex.resize(n);
  std::iota(ds.rowIndex.begin(), ds.rowIndex.end(), std::size_t{0});
  return ds;
}

SourceDataset subset(const SourceDataset& ds, std::span<const std::size_t> rows) {
  SourceDataset out;
  out.sourceId = ds.sourceId;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), ds.x.cols());
  out.rowSource.reserve(rows.size());
  out.rowIndex.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = ds.x.row(static_cast<Eigen::Index>(rows[i]));
    out.rowSource.push_back(ds.rowSource[rows[i]]);
    out.rowIndex.push_back(ds.rowIndex[rows[i]]);
  }
  out.y = std::visit(
      [&](const auto& v) -> Labels {
        std::decay_t<decltype(v)> picked;
        picked.reserve(rows.size());
        for (auto r : rows) picked.push_back(v[r]);
        return picked;
      },
      ds.y);
  return out;
}

void SplitPlan::validate() const {
  for (double f : {train, calib, test})
    if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::BadFractions, "fraction outside [0,1]");
  if (std::abs(train + calib + test - 1.0) > 1e-12) throw Error(Errc::BadFractions, "fractions do not sum to 1");
}

MultiSourceData::MultiSourceData(TaskKind task, std::vector<SourceDataset> sources)
    : task_(task), sources_(std::move(sources)) {
  if (sources_.empty()) throw Error(Errc::InvalidData, "at least one source required");
  const auto d = sources_.front().d();
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    if (sources_[k].d() != d) throw Error(Errc::InvalidData, "sources disagree on feature dimension");
    sources_[k].validate(task_);
  }
}

std::size_t MultiSourceData::totalRows() const {
  std::size_t n = 0;
  for (const auto& s : sources_) n += s.n();
  return n;
}

std::vector<double> MultiSourceData::weights() const {
  const double n = static_cast<double>(totalRows());
  std::vector<double> w;
  for (const auto& s : sources_) w.push_back(static_cast<double>(s.n()) / n);
  return w;
}

std::array<std::size_t, 3> foldSizes(std::size_t n, const SplitPlan& plan) {
  // The small slack keeps exact products such as 0.3 * 10 from flooring down.
  const auto nd = static_cast<double>(n);
  const auto nTrain = static_cast<std::size_t>(std::floor(plan.train * nd + 1e-9));
  const auto nCalib = static_cast<std::size_t>(std::floor(plan.calib * nd + 1e-9));
  return {nTrain, nCalib, n - nTrain - nCalib};
}

Folds split(const MultiSourceData& data, const SplitPlan& plan) {
  plan.validate();
  std::vector<SourceDataset> tr, ca, te;
  for (std::size_t k = 0; k < data.K(); ++k) {
    const auto& src = data.source(k);
    const std::size_t n = src.n();
    if (n < 3) throw Error(Errc::EmptySource, "source " + std::to_string(k) + " has fewer than 3 rows");
    const auto [nTrain, nCalib, nTest] = foldSizes(n, plan);
    if (nCalib == 0) throw Error(Errc::EmptySource, "calibration fold of source " + std::to_string(k) + " is empty");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = Rng(plan.seed).substream(static_cast<std::uint64_t>(src.sourceId)).substream(n);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

    const std::span<const std::size_t> all(perm);
    tr.push_back(subset(src, all.subspan(0, nTrain)));
    ca.push_back(subset(src, all.subspan(nTrain, nCalib)));
    te.push_back(subset(src, all.subspan(nTrain + nCalib, nTest)));
  }
  return Folds{MultiSourceData(data.task(), std::move(tr)), MultiSourceData(data.task(), std::move(ca)),
               MultiSourceData(data.task(), std::move(te))};
}

SourceDataset pool(const MultiSourceData& data) {
  SourceDataset out;
  out.sourceId = -1;
  const auto n = data.totalRows();
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.d()));
  Eigen::Index row = 0;
  for (const auto& s : data.sources()) {
    out.x.middleRows(row, s.x.rows()) = s.x;
    row += s.x.rows();
    out.rowSource.insert(out.rowSource.end(), s.rowSource.begin(), s.rowSource.end());
    out.rowIndex.insert(out.rowIndex.end(), s.rowIndex.begin(), s.rowIndex.end());
  }
  if (data.task().isClassification()) {
    ClassLabels y;
    for (const auto& s : data.sources()) y.insert(y.end(), s.classes().begin(), s.classes().end());
    out.y = std::move(y);
  } else {
    RealLabels y;
    for (const auto& s : data.sources()) y.insert(y.end(), s.reals().begin(), s.reals().end());
    out.y = std::move(y);
  }
  return out;
}

namespace {

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parseDouble(const std::string& s, std::size_t lineNo) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::InvalidData, "line " + std::to_string(lineNo) + ": cannot parse '" + s + "'");
  }
}

} // namespace

MultiSourceData loadCsv(const std::filesystem::path& path, const TaskKind& task) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::InvalidData, "empty csv");
  const auto header = splitCsvLine(line);
  if (header.size() < 3 || header[0] != "source" || header[1] != "y")
    throw Error(Errc::InvalidData, "header must start with source,y,x1");
  const std::size_t d = header.size() - 2;

  std::map<int, std::vector<std::vector<double>>> rows;
  std::map<int, std::vector<double>> labels;
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = splitCsvLine(line);
    if (cells.size() != d + 2) throw Error(Errc::InvalidData, "line " + std::to_string(lineNo) + ": wrong column count");
    const double src = parseDouble(cells[0], lineNo);
    if (src < 0 || src != std::floor(src)) throw Error(Errc::InvalidData, "line " + std::to_string(lineNo) + ": bad source id");
    std::vector<double> xs(d);
    for (std::size_t j = 0; j < d; ++j) xs[j] = parseDouble(cells[j + 2], lineNo);
    rows[static_cast<int>(src)].push_back(std::move(xs));
    labels[static_cast<int>(src)].push_back(parseDouble(cells[1], lineNo));
  }
  if (rows.empty()) throw Error(Errc::InvalidData, "csv has no rows");

  std::vector<SourceDataset> sources;
  int expected = 0;
  for (auto& [sid, xs] : rows) {
    if (sid != expected++) throw Error(Errc::InvalidData, "source ids must be contiguous from 0");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    const auto& ys = labels[sid];
    Labels y;
    if (task.isClassification()) {
      ClassLabels c;
      for (double v : ys) {
        if (v < 0 || v != std::floor(v)) throw Error(Errc::InvalidData, "class label must be a nonnegative integer");
        c.push_back(static_cast<std::uint32_t>(v));
      }
      y = std::move(c);
    } else {
      y = ys;
    }
    sources.push_back(makeSource(sid, std::move(x), std::move(y)));
  }
  return MultiSourceData(task, std::move(sources));
}

void saveCsv(const MultiSourceData& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "source,y";
  for (std::size_t j = 0; j < data.d(); ++j) out << ",x" << (j + 1);
  out << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < data.K(); ++k) {
    const auto& s = data.source(k);
    for (std::size_t i = 0; i < s.n(); ++i) {
      out << k << ',' << s.label(i);
      for (std::size_t j = 0; j < s.d(); ++j) out << ',' << s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out << '\n';
    }
  }
}

} // namespace mdcp
