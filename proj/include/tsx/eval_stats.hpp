#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tsx/common.hpp"
#include "tsx/correlation.hpp"

namespace tsx::stats {

struct MetricReport {
  double rmse = 0.0;
  double mape = 0.0;   // percent
  double smape = 0.0;  // percent, in [0, 200]
  double r2 = 0.0;     // against the mean of y
};

enum class Metric { rmse, mape, smape, r2 };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::rmse: return "rmse";
    case Metric::mape: return "mape";
    case Metric::smape: return "smape";
    case Metric::r2: return "r2";
  }
  return "?";
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw ValidationError("rmse: lengths must match and be non-zero");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double mape(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw ValidationError("mape: lengths must match and be non-zero");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw NumericalError("mape: zero actual value at element " + std::to_string(i));
    s += std::abs((y[i] - yhat[i]) / y[i]);
  }
  return 100.0 * s / static_cast<double>(y.size());
}

inline double smape(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw ValidationError("smape: lengths must match and be non-zero");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::abs(y[i]) + std::abs(yhat[i]);
    if (den == 0.0) throw NumericalError("smape: |y|+|yhat| is zero at element " + std::to_string(i));
    s += 2.0 * std::abs(y[i] - yhat[i]) / den;
  }
  return 100.0 * s / static_cast<double>(y.size());
}

inline double r_squared(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw ValidationError("r2: lengths must match and be non-zero");
  const double m = tsx::mean(y);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - m) * (y[i] - m);
  }
  if (sst == 0.0) return sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - sse / sst;
}

inline double evaluate(Metric m, std::span<const double> y, std::span<const double> yhat) {
  switch (m) {
    case Metric::rmse: return rmse(y, yhat);
    case Metric::mape: return mape(y, yhat);
    case Metric::smape: return smape(y, yhat);
    case Metric::r2: return r_squared(y, yhat);
  }
  return 0.0;
}

inline MetricReport metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ValidationError("metrics: length mismatch");
  if (y.empty()) throw ValidationError("metrics: empty input");
  return {rmse(y, yhat), mape(y, yhat), smape(y, yhat), r_squared(y, yhat)};
}

// --- Diebold-Mariano --------------------------------------------------------

struct DmResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  int horizon = 1;
  std::string loss = "squared";
  bool small_sample_corrected = true;
  bool two_sided = true;
  bool indeterminate = false;
  double mean_differential = 0.0;
};

/// DM test on a loss differential d_t. Long-run variance from autocovariances
/// up to lag h-1, Harvey-Leybourne-Newbold correction, Student-t(n-1) reference.
/// A positive statistic means the first forecast has larger losses.
inline DmResult dm_test_differential(std::span<const double> d, int horizon = 1, bool two_sided = true,
                                     bool small_sample_correction = true) {
  const std::size_t n = d.size();
  if (n < 4) throw ValidationError("dm_test: need at least 4 loss differentials");
  if (horizon < 1 || static_cast<std::size_t>(horizon) >= n) throw ValidationError("dm_test: horizon out of range");
  DmResult out;
  out.n = n;
  out.horizon = horizon;
  out.two_sided = two_sided;
  out.small_sample_corrected = small_sample_correction;
  const double nd = static_cast<double>(n);
  const double dbar = tsx::mean(d);
  out.mean_differential = dbar;
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = k; t < n; ++t) s += (d[t] - dbar) * (d[t - k] - dbar);
    return s / nd;
  };
  double v = autocov(0);
  if (v <= 0.0) {
    out.indeterminate = true;
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  for (int k = 1; k < horizon; ++k) v += 2.0 * autocov(static_cast<std::size_t>(k));
  if (v <= 0.0) v = autocov(0);
  double stat = dbar / std::sqrt(v / nd);
  if (small_sample_correction) {
    const double h = horizon;
    stat *= std::sqrt((nd + 1.0 - 2.0 * h + h * (h - 1.0) / nd) / nd);
  }
  out.statistic = stat;
  const boost::math::students_t dist(nd - 1.0);
  if (two_sided) {
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(stat)));
  } else {
    out.p_value = boost::math::cdf(boost::math::complement(dist, stat));
  }
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  return out;
}

/// Squared-error loss differential d_t = e_a^2 - e_b^2.
inline DmResult dm_test(std::span<const double> e_a, std::span<const double> e_b, int horizon = 1, bool two_sided = true) {
  if (e_a.size() != e_b.size()) throw ValidationError("dm_test: error vectors differ in length");
  std::vector<double> d(e_a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = e_a[i] * e_a[i] - e_b[i] * e_b[i];
  return dm_test_differential(d, horizon, two_sided);
}

// --- moving-block bootstrap -------------------------------------------------

struct BootstrapCi {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t block_length = 12;
  std::size_t n_resamples = 1000;
  double alpha = 0.05;
};

struct BootstrapOptions {
  std::size_t block_length = 12;
  std::size_t n_resamples = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

/// Row indices of one moving-block resample: ceil(n/L) blocks with uniform
/// starts in [0, n-L], concatenated and truncated to n.
inline std::vector<std::size_t> moving_block_indices(std::size_t n, std::size_t block_length, Rng& rng) {
  if (block_length == 0 || block_length > n) throw ValidationError("moving_block_indices: block length out of range");
  std::vector<std::size_t> idx;
  idx.reserve(n + block_length);
  const std::size_t starts = n - block_length + 1;
  while (idx.size() < n) {
    const std::size_t s = rng.index(starts);
    for (std::size_t j = 0; j < block_length; ++j) idx.push_back(s + j);
  }
  idx.resize(n);
  return idx;
}

using PairMetric = std::function<double(std::span<const double>, std::span<const double>)>;

/// Percentile CI of a paired metric. Resample r draws from stream (seed, r).
inline BootstrapCi block_bootstrap_ci(std::span<const double> y, std::span<const double> yhat, const PairMetric& metric,
                                      const BootstrapOptions& opt = {}) {
  if (y.size() != yhat.size()) throw ValidationError("block_bootstrap_ci: length mismatch");
  if (y.size() < opt.block_length || opt.block_length == 0)
    throw ValidationError("block_bootstrap_ci: series length " + std::to_string(y.size()) + " shorter than block length " +
                          std::to_string(opt.block_length));
  if (opt.n_resamples == 0) throw ValidationError("block_bootstrap_ci: need at least one resample");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ValidationError("block_bootstrap_ci: alpha must be in (0,1)");
  BootstrapCi ci;
  ci.point = metric(y, yhat);
  ci.block_length = opt.block_length;
  ci.n_resamples = opt.n_resamples;
  ci.alpha = opt.alpha;
  std::vector<double> stats(opt.n_resamples);
  std::vector<double> ys(y.size()), hs(y.size());
  for (std::size_t r = 0; r < opt.n_resamples; ++r) {
    Rng rng(derive_seed(opt.seed, r));
    const auto idx = moving_block_indices(y.size(), opt.block_length, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ys[i] = y[idx[i]];
      hs[i] = yhat[idx[i]];
    }
    stats[r] = metric(ys, hs);
  }
  std::sort(stats.begin(), stats.end());
  ci.lower = quantile_sorted(stats, opt.alpha / 2.0);
  ci.upper = quantile_sorted(stats, 1.0 - opt.alpha / 2.0);
  return ci;
}

inline BootstrapCi block_bootstrap_ci(std::span<const double> y, std::span<const double> yhat, Metric m,
                                      const BootstrapOptions& opt = {}) {
  return block_bootstrap_ci(
      y, yhat, [m](std::span<const double> a, std::span<const double> b) { return evaluate(m, a, b); }, opt);
}

}  // namespace tsx::stats
