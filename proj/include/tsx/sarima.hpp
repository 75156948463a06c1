#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsx/common.hpp"
#include "tsx/series.hpp"

namespace tsx::arima {

using series::TimeSeries;

/// SARIMA(p,d,q)x(P,D,Q)_s orders, optionally fitted on the log scale.
struct ArimaSpec {
  int p = 2, d = 1, q = 2;
  int P = 0, D = 1, Q = 0;
  int s = 12;
  bool use_log = true;

  static constexpr int kMaxOrder = 5;

  std::size_t n_coefficients() const { return static_cast<std::size_t>(p + q + P + Q); }
  // intercept + ARMA coefficients + innovation variance
  std::size_t n_params() const { return n_coefficients() + 2; }

  void validate() const {
    for (int o : {p, d, q, P, D, Q})
      if (o < 0 || o > kMaxOrder) throw ValidationError("ArimaSpec: orders must be in [0, 5]");
    if (s < 1) throw ValidationError("ArimaSpec: seasonal period must be >= 1");
  }

  std::string label() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "(%d,%d,%d)(%d,%d,%d)_%d%s", p, d, q, P, D, Q, s, use_log ? " log" : "");
    return buf;
  }

  friend bool operator==(const ArimaSpec&, const ArimaSpec&) = default;
};

/// Unpacked parameter vector. Packed order: intercept, phi, theta, Phi, Theta.
struct ArimaParams {
  double intercept = 0.0;
  std::vector<double> phi, theta, seasonal_phi, seasonal_theta;

  static ArimaParams unpack(std::span<const double> v, const ArimaSpec& spec) {
    if (v.size() != spec.n_coefficients() + 1) throw ValidationError("ArimaParams: wrong parameter count");
    ArimaParams out;
    std::size_t k = 0;
    out.intercept = v[k++];
    auto take = [&](std::vector<double>& dst, int n) {
      for (int i = 0; i < n; ++i) dst.push_back(v[k++]);
    };
    take(out.phi, spec.p);
    take(out.theta, spec.q);
    take(out.seasonal_phi, spec.P);
    take(out.seasonal_theta, spec.Q);
    return out;
  }

  std::vector<double> pack() const {
    std::vector<double> v{intercept};
    for (const auto* part : {&phi, &theta, &seasonal_phi, &seasonal_theta}) v.insert(v.end(), part->begin(), part->end());
    return v;
  }
};

/// Product of two lag polynomials given as coefficient vectors (index = power of B).
inline std::vector<double> poly_multiply(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

/// Lag polynomial 1 + sign*sum c_i B^(i*stride).
inline std::vector<double> lag_polynomial(std::span<const double> coefs, int stride, double sign) {
  std::vector<double> out(coefs.size() * static_cast<std::size_t>(stride) + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t i = 0; i < coefs.size(); ++i) out[(i + 1) * static_cast<std::size_t>(stride)] = sign * coefs[i];
  return out;
}

/// Expanded AR side phi(B)Phi(B^s) and MA side theta(B)Theta(B^s).
/// `seasonal_first` only changes the multiplication order.
struct ExpandedPolynomials {
  std::vector<double> ar;  // 1 - a_1 B - a_2 B^2 ...
  std::vector<double> ma;  // 1 + b_1 B + ...
};

inline ExpandedPolynomials expand(const ArimaParams& prm, int s, bool seasonal_first = false) {
  const auto ar_ns = lag_polynomial(prm.phi, 1, -1.0);
  const auto ar_s = lag_polynomial(prm.seasonal_phi, s, -1.0);
  const auto ma_ns = lag_polynomial(prm.theta, 1, 1.0);
  const auto ma_s = lag_polynomial(prm.seasonal_theta, s, 1.0);
  if (seasonal_first) return {poly_multiply(ar_s, ar_ns), poly_multiply(ma_s, ma_ns)};
  return {poly_multiply(ar_ns, ar_s), poly_multiply(ma_ns, ma_s)};
}

inline constexpr double kDivergence = 1e10;

/// One-step innovations e_t = w_t - c - sum a_k w_{t-k} - sum b_k e_{t-k},
/// with pre-sample w and e equal to zero. Empty result on divergence.
inline std::optional<std::vector<double>> css_residuals(const ArimaParams& prm, std::span<const double> w,
                                                        const ArimaSpec& spec, bool seasonal_first = false) {
  const auto poly = expand(prm, spec.s, seasonal_first);
  std::vector<double> e(w.size(), 0.0);
  for (std::size_t t = 0; t < w.size(); ++t) {
    double v = w[t] - prm.intercept;
    for (std::size_t k = 1; k < poly.ar.size() && k <= t; ++k) v += poly.ar[k] * w[t - k];
    for (std::size_t k = 1; k < poly.ma.size() && k <= t; ++k) v -= poly.ma[k] * e[t - k];
    if (!std::isfinite(v) || std::abs(v) > kDivergence) return std::nullopt;
    e[t] = v;
  }
  return e;
}

/// Conditional sum of squares; +inf for parameter regions with divergent recursions.
inline double css_loss(const ArimaParams& prm, std::span<const double> w, const ArimaSpec& spec,
                       bool seasonal_first = false) {
  const auto e = css_residuals(prm, w, spec, seasonal_first);
  if (!e) return std::numeric_limits<double>::infinity();
  double ss = 0.0;
  for (double v : *e) ss += v * v;
  return std::isfinite(ss) ? ss : std::numeric_limits<double>::infinity();
}

inline double css_loss(std::span<const double> packed, std::span<const double> w, const ArimaSpec& spec) {
  return css_loss(ArimaParams::unpack(packed, spec), w, spec);
}

// --- Nelder-Mead ----------------------------------------------------------

struct SimplexResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

struct SimplexOptions {
  int max_evaluations = 20000;
  double ftol = 1e-12;
  double xtol = 1e-9;
};

/// Derivative-free simplex descent (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
inline SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                                 std::span<const double> steps, const SimplexOptions& opt = {}) {
  const std::size_t n = start.size();
  SimplexResult res;
  if (n == 0) {
    res.x = start;
    res.value = f(start);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }
  std::vector<std::vector<double>> pts(n + 1, start);
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += steps[i];
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);
  std::vector<std::size_t> order(n + 1);
  bool converged = false;
  while (evals < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diam = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j) diam = std::max(diam, std::abs(pts[i][j] - pts[best][j]));
    const double spread = vals[worst] - vals[best];
    if (std::isfinite(spread) && spread <= opt.ftol * std::abs(vals[best]) + 1e-300 && diam <= opt.xtol) {
      converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
    auto along = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
      return x;
    };
    auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = std::move(xe);
        vals[worst] = fe;
      } else {
        pts[worst] = std::move(xr);
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = std::move(xr);
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    auto xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = std::move(xc);
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  const auto bi = static_cast<std::size_t>(it - vals.begin());
  res.x = pts[bi];
  res.value = vals[bi];
  res.evaluations = evals;
  res.converged = converged;
  return res;
}

// --- model ----------------------------------------------------------------

struct ArimaModel {
  ArimaSpec spec;
  ArimaParams params;
  double sigma2 = 0.0;
  double aic = 0.0;
  double css = 0.0;
  std::size_t n_eff = 0;
  bool converged = false;
  int evaluations = 0;
  std::vector<std::string> warnings;

  // State needed to forecast and invert transforms.
  TimeSeries train;                    // original scale
  series::DifferencingRecord record;   // on the (possibly log) scale
  std::vector<double> differenced;     // w_t
  std::vector<double> residuals;       // e_t
};

struct FitOptions {
  int restarts = 5;
  std::uint64_t seed = 0;
  SimplexOptions simplex;
  std::optional<std::vector<double>> start;  // packed parameter vector
};

/// CSS fit: transform, difference, then simplex descent from the zero
/// coefficient vector plus seeded random restarts in (-0.5, 0.5).
inline ArimaModel fit_sarima(const TimeSeries& ts, const ArimaSpec& spec, const FitOptions& opt = {}) {
  spec.validate();
  ts.validate();
  if (ts.log_space) throw ValidationError("fit_sarima: pass the series on its original scale");
  ArimaModel model;
  model.spec = spec;
  model.train = ts;
  const TimeSeries x = spec.use_log ? series::log_transform(ts) : ts;
  auto diffed = series::difference(x, spec.d, spec.D, spec.s);
  model.record = std::move(diffed.record);
  model.differenced = std::move(diffed.series.values);
  const auto& w = model.differenced;
  model.n_eff = w.size();

  const std::size_t k = spec.n_coefficients();
  if (w.size() < 10 * (k + 1))
    model.warnings.push_back("only " + std::to_string(w.size()) + " differenced points for " + std::to_string(k + 1) +
                             " parameters");
  const double w_mean = tsx::mean(w);
  const double w_sd = sample_sd(w);
  if (w.size() < 2 || !(w_sd > 0.0)) throw DataError("fit_sarima: differenced series is degenerate");

  auto objective = [&](std::span<const double> v) { return css_loss(v, w, spec); };
  std::vector<double> steps(k + 1, 0.1);
  steps[0] = 0.1 * w_sd;

  std::vector<std::vector<double>> starts;
  if (opt.start) {
    if (opt.start->size() != k + 1) throw ValidationError("fit_sarima: start vector has wrong length");
    starts.push_back(*opt.start);
  }
  std::vector<double> zero(k + 1, 0.0);
  zero[0] = w_mean;
  starts.push_back(zero);
  Rng rng(opt.seed);
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<double> s(k + 1);
    s[0] = w_mean;
    for (std::size_t j = 1; j <= k; ++j) s[j] = rng.uniform(-0.5, 0.5);
    starts.push_back(std::move(s));
  }

  SimplexResult best;
  for (const auto& s0 : starts) {
    auto r = nelder_mead(objective, s0, steps, opt.simplex);
    // one restart from the incumbent guards against simplex collapse
    if (std::isfinite(r.value)) {
      auto r2 = nelder_mead(objective, r.x, steps, opt.simplex);
      r2.evaluations += r.evaluations;
      if (r2.value <= r.value) r = std::move(r2);
    }
    model.evaluations += r.evaluations;
    if (r.value < best.value) best = std::move(r);
  }
  if (!std::isfinite(best.value)) throw NumericalError("fit_sarima: every start diverged for " + spec.label());
  model.converged = best.converged;
  if (!best.converged) model.warnings.push_back("simplex did not converge within the evaluation budget");
  model.params = ArimaParams::unpack(best.x, spec);
  model.css = best.value;
  model.residuals = *css_residuals(model.params, w, spec);
  model.sigma2 = best.value / static_cast<double>(model.n_eff);
  if (!(model.sigma2 > 0.0)) throw NumericalError("fit_sarima: zero innovation variance");
  model.aic = static_cast<double>(model.n_eff) * std::log(model.sigma2) + 2.0 * static_cast<double>(spec.n_params());
  return model;
}

/// Multi-step forecast on the original scale: future innovations are zero,
/// then differencing and the log are inverted.
inline std::vector<double> forecast(const ArimaModel& model, int horizon) {
  if (horizon < 1) throw ValidationError("forecast: horizon must be >= 1");
  const auto poly = expand(model.params, model.spec.s);
  std::vector<double> w = model.differenced;
  std::vector<double> e = model.residuals;
  const std::size_t n = w.size();
  for (int h = 0; h < horizon; ++h) {
    const std::size_t t = w.size();
    double v = model.params.intercept;
    for (std::size_t k = 1; k < poly.ar.size() && k <= t; ++k) v -= poly.ar[k] * w[t - k];
    for (std::size_t k = 1; k < poly.ma.size() && k <= t; ++k) v += poly.ma[k] * e[t - k];
    w.push_back(v);
    e.push_back(0.0);
  }
  auto levels = series::integrate_forward(std::span<const double>(w).subspan(n), model.record);
  if (model.spec.use_log)
    for (double& v : levels) v = std::exp(v);
  return levels;
}

/// One-step-ahead predictions with frozen parameters for indices [first, n) of
/// `full`, which must extend the training series. Prediction at t uses
/// observations up to t-1 only.
inline std::vector<double> one_step_ahead(const ArimaModel& model, const TimeSeries& full, std::size_t first) {
  if (full.start != model.train.start) throw ValidationError("one_step_ahead: series must start where training did");
  const TimeSeries x = model.spec.use_log ? series::log_transform(full) : full;
  const auto diffed = series::difference(x, model.spec.d, model.spec.D, model.spec.s);
  const std::size_t loss = x.size() - diffed.series.size();
  if (first < loss || first >= full.size()) throw ValidationError("one_step_ahead: first index out of range");
  const auto e = css_residuals(model.params, diffed.series.values, model.spec);
  if (!e) throw NumericalError("one_step_ahead: recursion diverged");
  std::vector<double> out;
  for (std::size_t t = first; t < full.size(); ++t) {
    const double v = x.values[t] - (*e)[t - loss];
    out.push_back(model.spec.use_log ? std::exp(v) : v);
  }
  return out;
}

struct RankedFit {
  ArimaSpec spec;
  ArimaModel model;
};

struct SkippedFit {
  ArimaSpec spec;
  std::string reason;
};

struct OrderSelection {
  std::vector<RankedFit> ranked;  // ascending AIC
  std::vector<SkippedFit> skipped;
};

/// Fits every candidate and ranks by AIC; ties go to the smaller model.
inline OrderSelection select_order(const TimeSeries& ts, std::span<const ArimaSpec> candidates, const FitOptions& opt = {}) {
  if (candidates.empty()) throw ValidationError("select_order: no candidates");
  OrderSelection out;
  for (const auto& spec : candidates) {
    try {
      out.ranked.push_back({spec, fit_sarima(ts, spec, opt)});
    } catch (const std::exception& e) {
      out.skipped.push_back({spec, e.what()});
    }
  }
  if (out.ranked.empty()) {
    std::string msg = "select_order: all candidates failed:";
    for (const auto& s : out.skipped) msg += " " + s.spec.label() + ": " + s.reason + ";";
    throw NumericalError(msg);
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const RankedFit& a, const RankedFit& b) {
    if (a.model.aic != b.model.aic) return a.model.aic < b.model.aic;
    return a.spec.n_params() < b.spec.n_params();
  });
  return out;
}

inline nlohmann::json to_json(const ArimaSpec& s) {
  return {{"p", s.p}, {"d", s.d}, {"q", s.q}, {"P", s.P}, {"D", s.D}, {"Q", s.Q}, {"s", s.s}, {"use_log", s.use_log}};
}

inline ArimaSpec spec_from_json(const nlohmann::json& j) {
  ArimaSpec s;
  s.p = j.value("p", s.p);
  s.d = j.value("d", s.d);
  s.q = j.value("q", s.q);
  s.P = j.value("P", s.P);
  s.D = j.value("D", s.D);
  s.Q = j.value("Q", s.Q);
  s.s = j.value("s", s.s);
  s.use_log = j.value("use_log", s.use_log);
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ArimaModel& m) {
  return {{"format", "tsx-sarima"},
          {"version", 1},
          {"spec", to_json(m.spec)},
          {"intercept", m.params.intercept},
          {"phi", m.params.phi},
          {"theta", m.params.theta},
          {"seasonal_phi", m.params.seasonal_phi},
          {"seasonal_theta", m.params.seasonal_theta},
          {"sigma2", m.sigma2},
          {"aic", m.aic},
          {"n_eff", m.n_eff},
          {"converged", m.converged}};
}

}  // namespace tsx::arima
