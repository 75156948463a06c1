#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsx/common.hpp"
#include "tsx/correlation.hpp"

namespace tsx::series {

/// Calendar month. Ordering and arithmetic are by absolute month count.
struct YearMonth {
  int year = 1970;
  int month = 1;  // 1..12

  constexpr int ordinal() const { return year * 12 + (month - 1); }
  static constexpr YearMonth from_ordinal(int ord) {
    const int y = ord >= 0 ? ord / 12 : (ord - 11) / 12;
    return {y, ord - y * 12 + 1};
  }
  constexpr YearMonth plus(int months) const { return from_ordinal(ordinal() + months); }
  constexpr int months_until(const YearMonth& other) const { return other.ordinal() - ordinal(); }

  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
  }

  friend constexpr bool operator==(const YearMonth&, const YearMonth&) = default;
  friend constexpr auto operator<=>(const YearMonth& a, const YearMonth& b) { return a.ordinal() <=> b.ordinal(); }
};

/// Parses `YYYY-MM` or `YYYY-MM-DD` (day ignored).
inline std::optional<YearMonth> parse_year_month(std::string_view s) {
  auto trim = [](std::string_view v) {
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t' || v.front() == '"')) v.remove_prefix(1);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '"' || v.back() == '\r')) v.remove_suffix(1);
    return v;
  };
  s = trim(s);
  if (s.size() != 7 && s.size() != 10) return std::nullopt;
  if (s[4] != '-') return std::nullopt;
  int y = 0, m = 0;
  if (std::from_chars(s.data(), s.data() + 4, y).ptr != s.data() + 4) return std::nullopt;
  if (std::from_chars(s.data() + 5, s.data() + 7, m).ptr != s.data() + 7) return std::nullopt;
  if (m < 1 || m > 12) return std::nullopt;
  if (s.size() == 10) {
    int d = 0;
    if (s[7] != '-' || std::from_chars(s.data() + 8, s.data() + 10, d).ptr != s.data() + 10) return std::nullopt;
    if (d < 1 || d > 31) return std::nullopt;
  }
  return YearMonth{y, m};
}

/// Ordered monthly observations. Values may be on the log scale.
struct TimeSeries {
  YearMonth start;
  std::vector<double> values;
  bool log_space = false;

  std::size_t size() const { return values.size(); }
  YearMonth time_at(std::size_t i) const { return start.plus(static_cast<int>(i)); }
  YearMonth end() const { return time_at(values.size() - 1); }

  /// Index of `t`, or nullopt when outside the series.
  std::optional<std::size_t> index_of(YearMonth t) const {
    const int k = start.months_until(t);
    if (k < 0 || static_cast<std::size_t>(k) >= values.size()) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  /// Sub-series [begin, end).
  TimeSeries slice(std::size_t begin, std::size_t end_idx) const {
    if (begin >= end_idx || end_idx > values.size()) throw ValidationError("TimeSeries::slice: bad range");
    return {time_at(begin), {values.begin() + static_cast<long>(begin), values.begin() + static_cast<long>(end_idx)}, log_space};
  }

  void validate() const {
    if (values.empty()) throw DataError("time series is empty");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i])) throw DataError("time series has a missing/non-finite value at index " + std::to_string(i));
  }
};

/// Parses `date,value` CSV text. A header line is detected by failing to parse line 1 as data.
inline TimeSeries parse_csv(std::istream& in) {
  TimeSeries ts;
  std::string line;
  std::size_t line_no = 0;
  std::optional<YearMonth> prev;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    const std::string where = "line " + std::to_string(line_no);
    if (comma == std::string::npos) {
      if (line_no == 1) continue;
      throw DataError(where + ": expected `date,value`");
    }
    const std::string_view date_field(line.data(), comma);
    std::string value_field = line.substr(comma + 1);
    const auto date = parse_year_month(date_field);
    if (!date) {
      if (line_no == 1 && !prev) continue;  // header
      throw DataError(where + ": malformed date '" + std::string(date_field) + "'");
    }
    while (!value_field.empty() && (value_field.back() == ' ' || value_field.back() == '\t')) value_field.pop_back();
    std::size_t vstart = value_field.find_first_not_of(" \t\"");
    std::size_t vend = value_field.find_last_not_of(" \t\"");
    if (vstart == std::string::npos) throw DataError(where + ": missing value");
    const std::string_view vtext(value_field.data() + vstart, vend - vstart + 1);
    double v = 0.0;
    const auto res = std::from_chars(vtext.data(), vtext.data() + vtext.size(), v);
    if (res.ec != std::errc() || res.ptr != vtext.data() + vtext.size() || !std::isfinite(v))
      throw DataError(where + ": non-numeric value '" + std::string(vtext) + "'");
    if (prev) {
      const int step = prev->months_until(*date);
      if (step <= 0) throw DataError(where + ": dates not strictly increasing (" + date->iso() + " after " + prev->iso() + ")");
      if (step > 1) throw DataError(where + ": gap in months (" + prev->iso() + " -> " + date->iso() + ")");
    } else {
      ts.start = *date;
    }
    prev = date;
    ts.values.push_back(v);
  }
  if (ts.values.empty()) throw DataError("no observations found");
  return ts;
}

inline TimeSeries parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

inline TimeSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return parse_csv(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Summary with n-1 standard deviation and linearly interpolated quartiles.
struct StatsSummary {
  double mean = 0, std_dev = 0, min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
  std::size_t n = 0;
};

inline StatsSummary descriptive_stats(std::span<const double> values) {
  if (values.empty()) throw ValidationError("descriptive_stats: empty series");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  StatsSummary out;
  out.n = s.size();
  out.mean = tsx::mean(values);
  out.std_dev = sample_sd(values);
  out.min = s.front();
  out.q25 = quantile_sorted(s, 0.25);
  out.median = quantile_sorted(s, 0.5);
  out.q75 = quantile_sorted(s, 0.75);
  out.max = s.back();
  return out;
}

inline StatsSummary descriptive_stats(const TimeSeries& ts) { return descriptive_stats(ts.values); }

struct LagCorrelation {
  int lag = 0;
  double pearson = 0.0;
};

/// Pearson correlation of the aligned pairs (y_t, y_{t-k}) for k = 1..max_lag.
inline std::vector<LagCorrelation> lag_correlations(std::span<const double> y, int max_lag) {
  if (max_lag < 1) throw ValidationError("lag_correlations: max_lag must be positive");
  if (y.size() <= static_cast<std::size_t>(max_lag) + 2)
    throw ValidationError("lag_correlations: max_lag " + std::to_string(max_lag) + " too large for series of length " +
                          std::to_string(y.size()));
  std::vector<LagCorrelation> out;
  for (int k = 1; k <= max_lag; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    out.push_back({k, stats::pearson(y.subspan(uk), y.first(y.size() - uk))});
  }
  return out;
}

inline std::vector<LagCorrelation> lag_correlations(const TimeSeries& ts, int max_lag) {
  return lag_correlations(ts.values, max_lag);
}

inline TimeSeries log_transform(const TimeSeries& ts) {
  if (ts.log_space) throw ValidationError("log_transform: series is already on the log scale");
  TimeSeries out = ts;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!(out.values[i] > 0.0))
      throw DataError("log_transform: non-positive value at " + ts.time_at(i).iso());
    out.values[i] = std::log(out.values[i]);
  }
  out.log_space = true;
  return out;
}

inline TimeSeries exp_transform(const TimeSeries& ts) {
  TimeSeries out = ts;
  for (double& v : out.values) v = std::exp(v);
  out.log_space = false;
  return out;
}

/// One differencing pass (x_t - x_{t-lag}) and the prefix it consumed.
struct DifferencingStage {
  int lag = 1;
  std::vector<double> input;  // full input of this stage, needed to integrate forward
};

/// Everything required to undo `difference`. Stages are in application order.
struct DifferencingRecord {
  int d = 0;
  int seasonal_d = 0;
  int period = 1;
  std::vector<DifferencingStage> stages;
};

struct Differenced {
  TimeSeries series;
  DifferencingRecord record;
};

/// Applies D seasonal passes (lag s) and then d ordinary passes.
inline Differenced difference(const TimeSeries& ts, int d, int seasonal_d = 0, int period = 1) {
  if (d < 0 || seasonal_d < 0) throw ValidationError("difference: orders must be non-negative");
  if (period < 1) throw ValidationError("difference: period must be positive");
  const std::size_t loss = static_cast<std::size_t>(d) + static_cast<std::size_t>(seasonal_d) * static_cast<std::size_t>(period);
  if (ts.size() <= loss)
    throw DataError("difference: series of length " + std::to_string(ts.size()) + " too short for " +
                    std::to_string(loss) + " differencing losses");
  Differenced out;
  out.record = {d, seasonal_d, period, {}};
  std::vector<double> cur = ts.values;
  auto pass = [&](int lag) {
    out.record.stages.push_back({lag, cur});
    std::vector<double> next(cur.size() - static_cast<std::size_t>(lag));
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = cur[i + static_cast<std::size_t>(lag)] - cur[i];
    cur = std::move(next);
  };
  for (int i = 0; i < seasonal_d; ++i) pass(period);
  for (int i = 0; i < d; ++i) pass(1);
  out.series = {ts.start.plus(static_cast<int>(loss)), std::move(cur), ts.log_space};
  return out;
}

/// Rebuilds the original series from differenced values using the recorded prefixes.
inline std::vector<double> inverse_difference(std::span<const double> diffed, const DifferencingRecord& rec) {
  std::vector<double> cur(diffed.begin(), diffed.end());
  for (auto it = rec.stages.rbegin(); it != rec.stages.rend(); ++it) {
    const auto lag = static_cast<std::size_t>(it->lag);
    std::vector<double> prev(cur.size() + lag);
    for (std::size_t i = 0; i < lag; ++i) prev[i] = it->input[i];
    for (std::size_t i = lag; i < prev.size(); ++i) prev[i] = cur[i - lag] + prev[i - lag];
    cur = std::move(prev);
  }
  return cur;
}

/// Integrates future differenced values onto the end of the recorded history.
/// Returns only the new (future) values on the undifferenced scale.
inline std::vector<double> integrate_forward(std::span<const double> future_diffed, const DifferencingRecord& rec) {
  std::vector<double> cur(future_diffed.begin(), future_diffed.end());
  for (auto it = rec.stages.rbegin(); it != rec.stages.rend(); ++it) {
    const auto lag = static_cast<std::size_t>(it->lag);
    std::vector<double> ext = it->input;
    const std::size_t n0 = ext.size();
    for (double v : cur) ext.push_back(v + ext[ext.size() - lag]);
    cur.assign(ext.begin() + static_cast<long>(n0), ext.end());
  }
  return cur;
}

/// Biased autocorrelation estimator r_k = c_k / c_0, k = 0..max_lag.
inline std::vector<double> acf(std::span<const double> y, int max_lag) {
  if (max_lag < 0) throw ValidationError("acf: max_lag must be non-negative");
  if (y.size() <= static_cast<std::size_t>(max_lag)) throw ValidationError("acf: series shorter than max_lag + 1");
  const double m = tsx::mean(y);
  double c0 = 0.0;
  for (double v : y) c0 += (v - m) * (v - m);
  if (c0 <= 0.0) throw NumericalError("acf: zero-variance series");
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1);
  for (std::size_t k = 0; k < r.size(); ++k) {
    double ck = 0.0;
    for (std::size_t t = k; t < y.size(); ++t) ck += (y[t] - m) * (y[t - k] - m);
    r[k] = ck / c0;
  }
  return r;
}

/// Partial autocorrelations at lags 1..max_lag via Durbin-Levinson.
inline std::vector<double> pacf(std::span<const double> y, int max_lag) {
  if (max_lag < 1) throw ValidationError("pacf: max_lag must be positive");
  const auto r = acf(y, max_lag);
  const auto m = static_cast<std::size_t>(max_lag);
  std::vector<double> out(m);
  std::vector<double> phi(m + 1, 0.0), prev(m + 1, 0.0);
  double v = 1.0;
  for (std::size_t k = 1; k <= m; ++k) {
    double num = r[k];
    for (std::size_t j = 1; j < k; ++j) num -= prev[j] * r[k - j];
    const double a = v > 0.0 ? num / v : 0.0;
    phi[k] = a;
    for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - a * prev[k - j];
    v *= (1.0 - a * a);
    out[k - 1] = a;
    prev = phi;
  }
  return out;
}

}  // namespace tsx::series
