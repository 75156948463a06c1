#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tsx/common.hpp"
#include "tsx/series.hpp"

namespace tsx::features {

using series::TimeSeries;
using series::YearMonth;

struct RollingWindow {
  int length = 12;
  bool mean = true;
  bool std = true;
};

/// Which supervised features to derive from a series.
struct FeatureSpec {
  std::vector<int> lags = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<RollingWindow> rolling = {RollingWindow{}};
  bool cyclic_month = true;

  /// Months of history consumed before the first usable row.
  int warmup() const {
    int w = 0;
    for (int k : lags) w = std::max(w, k);
    for (const auto& r : rolling) w = std::max(w, r.length);
    return w;
  }

  std::vector<std::string> column_names() const {
    std::vector<int> sorted = lags;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::string> names;
    for (int k : sorted) names.push_back("lag_" + std::to_string(k));
    for (const auto& r : rolling) {
      if (r.mean) names.push_back("rollmean_" + std::to_string(r.length));
      if (r.std) names.push_back("rollstd_" + std::to_string(r.length));
    }
    if (cyclic_month) {
      names.emplace_back("month_sin");
      names.emplace_back("month_cos");
    }
    return names;
  }

  void validate() const {
    if (lags.empty()) throw ValidationError("FeatureSpec: lags must be non-empty");
    std::vector<int> sorted = lags;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ValidationError("FeatureSpec: duplicate lag");
    for (int k : lags)
      if (k < 1) throw ValidationError("FeatureSpec: lags must be positive");
    for (const auto& r : rolling) {
      if (r.length < 2) throw ValidationError("FeatureSpec: rolling windows must be >= 2");
      if (!r.mean && !r.std) throw ValidationError("FeatureSpec: rolling window with no statistic");
    }
  }
};

/// Supervised table: one row per usable month, target aligned to `times`.
/// Rows are stored row-major.
struct FeatureMatrix {
  std::vector<YearMonth> times;
  std::vector<std::string> columns;
  std::vector<double> data;
  std::vector<double> target;

  std::size_t rows() const { return times.size(); }
  std::size_t cols() const { return columns.size(); }

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols(), cols()}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols(), cols()}; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(rows());
    for (std::size_t i = 0; i < rows(); ++i) c[i] = at(i, j);
    return c;
  }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return j;
    return std::nullopt;
  }

  std::optional<std::size_t> row_of(YearMonth t) const {
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] == t) return i;
    return std::nullopt;
  }

  /// Rows [begin, end).
  FeatureMatrix slice(std::size_t begin, std::size_t end) const {
    FeatureMatrix out;
    out.columns = columns;
    out.times.assign(times.begin() + static_cast<long>(begin), times.begin() + static_cast<long>(end));
    out.target.assign(target.begin() + static_cast<long>(begin), target.begin() + static_cast<long>(end));
    out.data.assign(data.begin() + static_cast<long>(begin * cols()), data.begin() + static_cast<long>(end * cols()));
    return out;
  }

  /// Rows picked by index, in the given order (duplicates allowed).
  FeatureMatrix select(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.columns = columns;
    for (std::size_t i : idx) {
      out.times.push_back(times[i]);
      out.target.push_back(target[i]);
      const auto r = row(i);
      out.data.insert(out.data.end(), r.begin(), r.end());
    }
    return out;
  }

  std::vector<std::vector<double>> row_vectors() const {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < rows(); ++i) out.emplace_back(row(i).begin(), row(i).end());
    return out;
  }
};

inline double month_sin(int month) { return std::sin(2.0 * M_PI * month / 12.0); }
inline double month_cos(int month) { return std::cos(2.0 * M_PI * month / 12.0); }

/// Builds lag / rolling / cyclic features. Row t only reads y_{t-1} and earlier.
inline FeatureMatrix build_feature_matrix(const TimeSeries& ts, const FeatureSpec& spec) {
  spec.validate();
  const auto warm = static_cast<std::size_t>(spec.warmup());
  if (ts.size() <= warm)
    throw DataError("build_feature_matrix: series of length " + std::to_string(ts.size()) +
                    " yields no rows after a warm-up of " + std::to_string(warm));
  std::vector<int> lags = spec.lags;
  std::sort(lags.begin(), lags.end());
  const auto& y = ts.values;

  FeatureMatrix fm;
  fm.columns = spec.column_names();
  fm.data.reserve((y.size() - warm) * fm.cols());
  for (std::size_t t = warm; t < y.size(); ++t) {
    for (int k : lags) fm.data.push_back(y[t - static_cast<std::size_t>(k)]);
    for (const auto& r : spec.rolling) {
      const auto w = static_cast<std::size_t>(r.length);
      const std::span<const double> window(y.data() + t - w, w);
      if (r.mean) fm.data.push_back(tsx::mean(window));
      if (r.std) fm.data.push_back(sample_sd(window));
    }
    const YearMonth when = ts.time_at(t);
    if (spec.cyclic_month) {
      fm.data.push_back(month_sin(when.month));
      fm.data.push_back(month_cos(when.month));
    }
    fm.times.push_back(when);
    fm.target.push_back(y[t]);
  }
  return fm;
}

/// Final `test_months` rows become the test set; no shuffling.
inline std::pair<FeatureMatrix, FeatureMatrix> chronological_split(const FeatureMatrix& fm, int test_months) {
  if (test_months < 1) throw ValidationError("chronological_split: test_months must be positive");
  const auto test = static_cast<std::size_t>(test_months);
  if (test >= fm.rows())
    throw ValidationError("chronological_split: test_months " + std::to_string(test_months) +
                          " leaves no training rows out of " + std::to_string(fm.rows()));
  const std::size_t cut = fm.rows() - test;
  return {fm.slice(0, cut), fm.slice(cut, fm.rows())};
}

/// Per-column z-scoring fitted on training rows only.
struct Standardizer {
  std::vector<double> means;
  std::vector<double> scales;  // sample sd, clamped to 1 for constant columns

  std::vector<double> apply(std::span<const double> row) const {
    if (row.size() != means.size()) throw ValidationError("Standardizer: dimension mismatch");
    std::vector<double> z(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) z[j] = (row[j] - means[j]) / scales[j];
    return z;
  }

  FeatureMatrix apply(const FeatureMatrix& fm) const {
    FeatureMatrix out = fm;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - means[j]) / scales[j];
    }
    return out;
  }
};

inline Standardizer fit_standardizer(const FeatureMatrix& train) {
  if (train.rows() == 0) throw ValidationError("fit_standardizer: empty training matrix");
  Standardizer sd;
  for (std::size_t j = 0; j < train.cols(); ++j) {
    const auto c = train.column(j);
    sd.means.push_back(tsx::mean(c));
    const double s = sample_sd(c);
    sd.scales.push_back(s > 1e-12 ? s : 1.0);
  }
  return sd;
}

inline FeatureMatrix apply_standardizer(const Standardizer& sd, const FeatureMatrix& fm) { return sd.apply(fm); }

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct CvFold {
  IndexRange train;
  IndexRange test;
};

/// Expanding-window folds. The tail max(k, floor(n/(k+1))) is cut into k
/// consecutive test blocks (sizes differ by at most one, larger blocks last);
/// fold i trains on every row before its block.
inline std::vector<CvFold> expanding_cv_folds(std::size_t n_rows, std::size_t k = 5) {
  if (k < 1) throw ValidationError("expanding_cv_folds: k must be positive");
  if (n_rows < 2 * k)
    throw ValidationError("expanding_cv_folds: need at least " + std::to_string(2 * k) + " rows, got " +
                          std::to_string(n_rows));
  const std::size_t tail = std::max(k, n_rows / (k + 1));
  const std::size_t base = tail / k;
  const std::size_t extra = tail % k;
  std::vector<CvFold> folds;
  std::size_t pos = n_rows - tail;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = base + (i >= k - extra ? 1 : 0);
    folds.push_back({{0, pos}, {pos, pos + len}});
    pos += len;
  }
  return folds;
}

/// CSV export: `date,<columns...>,target` with round-trip precision.
inline void write_csv(std::ostream& out, const FeatureMatrix& fm) {
  out << "date";
  for (const auto& c : fm.columns) out << ',' << c;
  out << ",target\n";
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    out << fm.times[i].iso();
    for (double v : fm.row(i)) out << ',' << format_exact(v);
    out << ',' << format_exact(fm.target[i]) << '\n';
  }
}

inline FeatureMatrix read_csv(std::istream& in) {
  FeatureMatrix fm;
  std::string line;
  if (!std::getline(in, line)) throw DataError("feature CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header.front() != "date" || header.back() != "target")
    throw DataError("feature CSV: header must be `date,<features...>,target`");
  fm.columns.assign(header.begin() + 1, header.end() - 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size())
      throw DataError("feature CSV line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
    const auto when = series::parse_year_month(cells.front());
    if (!when) throw DataError("feature CSV line " + std::to_string(line_no) + ": malformed date");
    fm.times.push_back(*when);
    try {
      for (std::size_t j = 1; j + 1 < cells.size(); ++j) fm.data.push_back(std::stod(cells[j]));
      fm.target.push_back(std::stod(cells.back()));
    } catch (const std::exception&) {
      throw DataError("feature CSV line " + std::to_string(line_no) + ": non-numeric field");
    }
  }
  return fm;
}

}  // namespace tsx::features
