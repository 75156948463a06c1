#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsx/common.hpp"
#include "tsx/correlation.hpp"
#include "tsx/eval_stats.hpp"
#include "tsx/features.hpp"
#include "tsx/gbt.hpp"

namespace tsx::explain {

using features::FeatureMatrix;
using features::Standardizer;
using series::YearMonth;

/// Black-box model: feature row -> prediction.
using Predictor = std::function<double(std::span<const double>)>;

inline Predictor predictor_of(const gbt::GbtModel& model) {
  return [&model](std::span<const double> row) { return model.predict(row); };
}

/// Additive explanation of one prediction: baseline_value + sum(phi) == prediction.
struct Attribution {
  std::vector<std::string> features;
  std::vector<double> phi;
  double baseline_value = 0.0;
  double prediction = 0.0;
  std::optional<YearMonth> time;

  double local_accuracy_gap() const {
    double s = baseline_value;
    for (double v : phi) s += v;
    return std::abs(s - prediction);
  }
};

enum class BackgroundMode { global_mean, seasonal_month_mean, explicit_rows };

inline std::string to_string(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::global_mean: return "global_mean";
    case BackgroundMode::seasonal_month_mean: return "seasonal_month_mean";
    case BackgroundMode::explicit_rows: return "explicit_rows";
  }
  return "?";
}

inline BackgroundMode background_mode_from_string(const std::string& s) {
  if (s == "global_mean") return BackgroundMode::global_mean;
  if (s == "seasonal" || s == "seasonal_month_mean") return BackgroundMode::seasonal_month_mean;
  if (s == "explicit_rows") return BackgroundMode::explicit_rows;
  throw ValidationError("unknown background mode '" + s + "'");
}

/// Reference inputs that stand in for "feature absent".
struct Background {
  BackgroundMode mode = BackgroundMode::global_mean;
  std::vector<std::vector<double>> rows;

  std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }

  void validate(std::size_t expected_dim) const {
    if (rows.empty()) throw ValidationError("Background: no rows");
    for (const auto& r : rows)
      if (r.size() != expected_dim)
        throw ValidationError("Background: row has " + std::to_string(r.size()) + " values, expected " +
                              std::to_string(expected_dim));
  }

  std::vector<double> mean_row() const {
    std::vector<double> m(dim(), 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < m.size(); ++j) m[j] += r[j];
    for (double& v : m) v /= static_cast<double>(rows.size());
    return m;
  }

  static Background global_mean(const FeatureMatrix& train) {
    if (train.rows() == 0) throw ValidationError("Background::global_mean: empty training matrix");
    Background bg;
    bg.mode = BackgroundMode::global_mean;
    std::vector<double> m(train.cols(), 0.0);
    for (std::size_t j = 0; j < train.cols(); ++j) m[j] = tsx::mean(train.column(j));
    bg.rows.push_back(std::move(m));
    return bg;
  }

  static Background explicit_rows(std::vector<std::vector<double>> rows) {
    Background bg;
    bg.mode = BackgroundMode::explicit_rows;
    bg.rows = std::move(rows);
    return bg;
  }
};

/// Every training row whose calendar month equals `month`.
inline Background seasonal_background(const FeatureMatrix& train, int month) {
  if (month < 1 || month > 12) throw ValidationError("seasonal_background: month must be in 1..12");
  Background bg;
  bg.mode = BackgroundMode::seasonal_month_mean;
  for (std::size_t i = 0; i < train.rows(); ++i)
    if (train.times[i].month == month) bg.rows.emplace_back(train.row(i).begin(), train.row(i).end());
  if (bg.rows.empty()) throw ValidationError("seasonal_background: no training rows for month " + std::to_string(month));
  return bg;
}

// --- permutation SHAP ---------------------------------------------------------

/// Monte-Carlo Shapley estimate. For each of `m` seeded permutations the
/// features are switched from the baseline vector to the instance in
/// permutation order and the marginal deltas are averaged. Multi-row
/// backgrounds are collapsed to their mean row first.
inline Attribution permutation_shap(const Predictor& predict, std::span<const double> instance, const Background& bg,
                                    int m_permutations, std::uint64_t seed,
                                    const std::vector<std::string>& names = {}) {
  if (m_permutations < 1) throw ValidationError("permutation_shap: need at least one permutation");
  bg.validate(instance.size());
  const std::size_t p = instance.size();
  const auto base = bg.mean_row();
  Attribution a;
  a.features = names.empty() ? std::vector<std::string>(p) : names;
  if (a.features.size() != p) throw ValidationError("permutation_shap: name count mismatch");
  a.phi.assign(p, 0.0);
  a.baseline_value = predict(base);
  a.prediction = predict(instance);
  Rng rng(seed);
  std::vector<double> z(p);
  for (int k = 0; k < m_permutations; ++k) {
    const auto perm = rng.permutation(p);
    z = base;
    double prev = a.baseline_value;
    for (std::size_t i : perm) {
      z[i] = instance[i];
      const double cur = predict(z);
      a.phi[i] += cur - prev;
      prev = cur;
    }
  }
  for (double& v : a.phi) v /= static_cast<double>(m_permutations);
  return a;
}

// --- exact TreeSHAP (interventional) -------------------------------------------

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Shapley values of one tree for the game v(S) = tree(x_S, b_notS).
// Each root-to-leaf path is reachable under S iff every feature where x and b
// split differently is present (x side) or absent (b side); the leaf's game
// is then a unanimity-style game with closed-form Shapley weights.
class PairwiseTreeShap {
 public:
  PairwiseTreeShap(const gbt::Tree& tree, std::span<const double> x, std::span<const double> b, std::span<double> phi,
                   double scale)
      : tree_(tree), x_(x), b_(b), phi_(phi), scale_(scale), state_(x.size(), 0) {}

  void run() { walk(0); }

 private:
  static constexpr signed char kFree = 0, kPresent = 1, kAbsent = 2;

  void walk(std::size_t node) {
    const auto& n = tree_.nodes[node];
    if (n.is_leaf()) {
      settle(n.value);
      return;
    }
    const auto f = static_cast<std::size_t>(n.feature);
    const auto x_child = static_cast<std::size_t>(x_[f] < n.threshold ? n.left : n.right);
    const auto b_child = static_cast<std::size_t>(b_[f] < n.threshold ? n.left : n.right);
    if (x_child == b_child) {
      walk(x_child);
      return;
    }
    const signed char saved = state_[f];
    if (saved != kAbsent) {
      state_[f] = kPresent;
      if (saved == kFree) present_.push_back(f);
      walk(x_child);
      if (saved == kFree) present_.pop_back();
      state_[f] = saved;
    }
    if (saved != kPresent) {
      state_[f] = kAbsent;
      if (saved == kFree) absent_.push_back(f);
      walk(b_child);
      if (saved == kFree) absent_.pop_back();
      state_[f] = saved;
    }
  }

  void settle(double value) {
    const int a = static_cast<int>(present_.size());
    const int c = static_cast<int>(absent_.size());
    if (a + c == 0) return;
    const double total = factorial(a + c);
    const double v = scale_ * value;
    if (a > 0) {
      const double w = factorial(a - 1) * factorial(c) / total;
      for (std::size_t i : present_) phi_[i] += v * w;
    }
    if (c > 0) {
      const double w = factorial(a) * factorial(c - 1) / total;
      for (std::size_t j : absent_) phi_[j] -= v * w;
    }
  }

  const gbt::Tree& tree_;
  std::span<const double> x_, b_;
  std::span<double> phi_;
  double scale_;
  std::vector<signed char> state_;
  std::vector<std::size_t> present_, absent_;
};

}  // namespace detail

/// Shapley values of one tree against one background row, accumulated into phi.
inline void tree_shap_single(const gbt::Tree& tree, std::span<const double> x, std::span<const double> b,
                             std::span<double> phi, double scale = 1.0) {
  detail::PairwiseTreeShap(tree, x, b, phi, scale).run();
}

/// Exact interventional Shapley values of the ensemble, averaged over the
/// background rows and scaled by the learning rate.
inline Attribution tree_shap(const gbt::GbtModel& model, std::span<const double> instance, const Background& bg) {
  if (instance.size() != model.n_features()) throw ValidationError("tree_shap: instance dimension mismatch");
  bg.validate(model.n_features());
  Attribution a;
  a.features = model.columns;
  a.phi.assign(instance.size(), 0.0);
  a.prediction = model.predict(instance);
  const double scale = model.learning_rate / static_cast<double>(bg.rows.size());
  double base = 0.0;
  for (const auto& b : bg.rows) {
    base += model.predict(b);
    for (const auto& t : model.trees) tree_shap_single(t, instance, b, a.phi, scale);
  }
  a.baseline_value = base / static_cast<double>(bg.rows.size());
  return a;
}

// --- summaries -----------------------------------------------------------------

struct FeatureScore {
  std::string feature;
  double value = 0.0;
};

inline void sort_scores(std::vector<FeatureScore>& s) {
  std::stable_sort(s.begin(), s.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.feature < b.feature;
  });
}

/// Mean |phi| per feature in feature order (unsorted).
inline std::vector<double> mean_abs_phi(std::span<const Attribution> attrs) {
  if (attrs.empty()) throw ValidationError("shap_global_summary: no attributions");
  const auto& names = attrs.front().features;
  std::vector<double> m(names.size(), 0.0);
  for (const auto& a : attrs) {
    if (a.features != names) throw ValidationError("shap_global_summary: inconsistent feature sets");
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += std::abs(a.phi[j]);
  }
  for (double& v : m) v /= static_cast<double>(attrs.size());
  return m;
}

/// Features ranked by mean |phi| (descending, ties by name).
inline std::vector<FeatureScore> shap_global_summary(std::span<const Attribution> attrs) {
  const auto m = mean_abs_phi(attrs);
  std::vector<FeatureScore> out;
  for (std::size_t j = 0; j < m.size(); ++j) out.push_back({attrs.front().features[j], m[j]});
  sort_scores(out);
  return out;
}

struct DependencePoint {
  YearMonth time;
  double value = 0.0;
  double phi = 0.0;
  double color = 0.0;
};

/// (feature value, phi, colour value) per attribution, attribution i paired with row i, ordered by time.
inline std::vector<DependencePoint> dependence_data(std::span<const Attribution> attrs, const FeatureMatrix& rows,
                                                    const std::string& feature, const std::string& color_feature) {
  const auto fi = rows.column_index(feature);
  const auto ci = rows.column_index(color_feature);
  if (!fi) throw ValidationError("dependence_data: unknown feature '" + feature + "'");
  if (!ci) throw ValidationError("dependence_data: unknown feature '" + color_feature + "'");
  if (attrs.empty()) return {};
  if (attrs.size() != rows.rows()) throw ValidationError("dependence_data: attributions and rows differ in count");
  std::vector<DependencePoint> out;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (attrs[i].phi.size() != rows.cols()) throw ValidationError("dependence_data: attribution dimension mismatch");
    out.push_back({rows.times[i], rows.at(i, *fi), attrs[i].phi[*fi], rows.at(i, *ci)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return out;
}

// --- LIME ------------------------------------------------------------------------

struct LimeOptions {
  std::size_t n_samples = 5000;
  double kernel_width_factor = 0.75;  // sigma = factor * sqrt(p)
  std::uint64_t seed = 0;
  double ridge = 1e-10;
};

struct LimeExplanation {
  std::vector<std::string> features;
  double intercept = 0.0;
  std::vector<double> coefficients;         // slope per raw feature unit
  std::vector<double> scaled_coefficients;  // slope per training standard deviation
  std::vector<double> contributions;        // scaled coefficient * standardized instance value
  double kernel_width = 0.0;
  double surrogate_r2 = 0.0;
  std::size_t n_samples = 0;
  double prediction = 0.0;
  std::optional<YearMonth> time;

  std::size_t top_feature() const {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scaled_coefficients.size(); ++j)
      if (std::abs(scaled_coefficients[j]) > std::abs(scaled_coefficients[best])) best = j;
    return best;
  }

  std::size_t top_positive_feature() const {
    return static_cast<std::size_t>(std::max_element(scaled_coefficients.begin(), scaled_coefficients.end()) -
                                    scaled_coefficients.begin());
  }
};

namespace detail {

// Solves (A + ridge*D) x = rhs for symmetric A by Cholesky, where D is the
// identity with the first `unpenalized` diagonal entries zeroed. Throws when
// not positive definite.
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> rhs, std::size_t n, double ridge,
                                          std::size_t unpenalized = 0) {
  for (std::size_t i = unpenalized; i < n; ++i) a[i * n + i] += ridge;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw NumericalError("lime: weighted design is singular");
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * rhs[k];
    rhs[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * rhs[k];
    rhs[i] = s / a[i * n + i];
  }
  return rhs;
}

}  // namespace detail

/// Local weighted linear surrogate. Perturbations draw every feature
/// independently (with replacement) from its training column; weights are
/// exp(-d^2 / sigma^2) with d measured in standardized units.
inline LimeExplanation lime_explain(const Predictor& predict, std::span<const double> instance, const FeatureMatrix& train,
                                    const Standardizer& sd, const LimeOptions& opt = {}) {
  if (train.rows() == 0) throw ValidationError("lime_explain: empty training matrix");
  if (!(opt.kernel_width_factor > 0.0)) throw ValidationError("lime_explain: kernel_width_factor must be positive");
  if (opt.n_samples < 2) throw ValidationError("lime_explain: need at least two samples");
  const std::size_t p = train.cols();
  if (instance.size() != p || sd.means.size() != p) throw ValidationError("lime_explain: dimension mismatch");

  LimeExplanation ex;
  ex.features = train.columns;
  ex.kernel_width = opt.kernel_width_factor * std::sqrt(static_cast<double>(p));
  ex.n_samples = opt.n_samples;
  ex.prediction = predict(instance);
  const auto zx = sd.apply(instance);

  const std::size_t n = opt.n_samples;
  const std::size_t q = p + 1;
  std::vector<double> zs(n * p), ys(n), d2(n);
  std::vector<double> raw(p);
  Rng rng(opt.seed);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < p; ++j) raw[j] = train.at(rng.index(train.rows()), j);
    ys[s] = predict(raw);
    double dist = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double z = (raw[j] - sd.means[j]) / sd.scales[j];
      zs[s * p + j] = z;
      dist += (z - zx[j]) * (z - zx[j]);
    }
    d2[s] = dist;
  }
  const double dmin = *std::min_element(d2.begin(), d2.end());
  const double sigma2 = ex.kernel_width * ex.kernel_width;
  std::vector<double> w(n);
  double wsum = 0.0;
  for (std::size_t s = 0; s < n; ++s) wsum += (w[s] = std::exp(-(d2[s] - dmin) / sigma2));
  for (double& v : w) v /= wsum;

  // Normal equations on [1, z] with normalized weights.
  std::vector<double> ata(q * q, 0.0), aty(q, 0.0);
  std::vector<double> row(q);
  for (std::size_t s = 0; s < n; ++s) {
    row[0] = 1.0;
    for (std::size_t j = 0; j < p; ++j) row[j + 1] = zs[s * p + j];
    for (std::size_t i = 0; i < q; ++i) {
      aty[i] += w[s] * row[i] * ys[s];
      for (std::size_t k = 0; k <= i; ++k) ata[i * q + k] += w[s] * row[i] * row[k];
    }
  }
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t k = i + 1; k < q; ++k) ata[i * q + k] = ata[k * q + i];
  const auto beta = detail::cholesky_solve(ata, aty, q, opt.ridge, 1);

  double ybar = 0.0;
  for (std::size_t s = 0; s < n; ++s) ybar += w[s] * ys[s];
  double sse = 0.0, sst = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double fit = beta[0];
    for (std::size_t j = 0; j < p; ++j) fit += beta[j + 1] * zs[s * p + j];
    sse += w[s] * (ys[s] - fit) * (ys[s] - fit);
    sst += w[s] * (ys[s] - ybar) * (ys[s] - ybar);
  }
  // A (numerically) constant response is fitted exactly by the intercept.
  ex.surrogate_r2 = sst > 1e-24 * std::max(1.0, ybar * ybar) ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : 1.0;

  ex.intercept = beta[0];
  for (std::size_t j = 0; j < p; ++j) {
    const double scaled = beta[j + 1];
    ex.scaled_coefficients.push_back(scaled);
    ex.coefficients.push_back(scaled / sd.scales[j]);
    ex.contributions.push_back(scaled * zx[j]);
    ex.intercept -= scaled * sd.means[j] / sd.scales[j];
  }
  return ex;
}

struct KernelSweepEntry {
  double factor = 0.0;
  double median_r2 = 0.0;
  std::vector<double> r2;  // per instance
};

struct KernelSweep {
  std::vector<KernelSweepEntry> entries;
  double top_feature_agreement = 1.0;
  std::vector<std::vector<LimeExplanation>> explanations;  // [factor][instance]
};

/// LIME per instance per kernel factor. Instance i uses the seed stream (seed, i),
/// shared across factors so only the kernel changes.
inline KernelSweep kernel_width_sweep(const Predictor& predict, const FeatureMatrix& instances, const FeatureMatrix& train,
                                      const Standardizer& sd, std::span<const double> factors, std::size_t n_samples,
                                      std::uint64_t seed) {
  if (factors.empty()) throw ValidationError("kernel_width_sweep: no kernel factors");
  KernelSweep out;
  for (double f : factors) {
    KernelSweepEntry e;
    e.factor = f;
    std::vector<LimeExplanation> exps;
    for (std::size_t i = 0; i < instances.rows(); ++i) {
      auto ex = lime_explain(predict, instances.row(i), train, sd, {n_samples, f, derive_seed(seed, i), 1e-10});
      ex.time = instances.times[i];
      e.r2.push_back(ex.surrogate_r2);
      exps.push_back(std::move(ex));
    }
    e.median_r2 = e.r2.empty() ? 0.0 : tsx::median(e.r2);
    out.entries.push_back(std::move(e));
    out.explanations.push_back(std::move(exps));
  }
  if (instances.rows() > 0) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < instances.rows(); ++i) {
      const std::size_t top = out.explanations.front()[i].top_feature();
      bool same = true;
      for (const auto& per_factor : out.explanations) same = same && per_factor[i].top_feature() == top;
      agree += same ? 1 : 0;
    }
    out.top_feature_agreement = static_cast<double>(agree) / static_cast<double>(instances.rows());
  }
  return out;
}

// --- permutation importance ----------------------------------------------------

struct ImportanceEntry {
  std::string feature;
  double mean_increase = 0.0;
  double std_dev = 0.0;
};

/// Error metric over (targets, predictions); RMSE by default.
using ErrorMetric = std::function<double(std::span<const double>, std::span<const double>)>;

/// Increase in the error metric when one column is shuffled. Shuffle
/// (feature j, repeat r) uses stream (seed, j, r).
inline std::vector<ImportanceEntry> permutation_importance(const Predictor& predict, const FeatureMatrix& test,
                                                           int n_repeats, std::uint64_t seed,
                                                           const ErrorMetric& metric = stats::rmse) {
  if (test.rows() < 2) throw ValidationError("permutation_importance: need at least two rows");
  if (n_repeats < 1) throw ValidationError("permutation_importance: n_repeats must be >= 1");
  std::vector<double> pred(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) pred[i] = predict(test.row(i));
  const double base = metric(test.target, pred);
  std::vector<ImportanceEntry> out;
  std::vector<double> row(test.cols());
  for (std::size_t j = 0; j < test.cols(); ++j) {
    const auto col = test.column(j);
    std::vector<double> inc;
    for (int r = 0; r < n_repeats; ++r) {
      Rng rng(derive_seed(seed, j, static_cast<std::uint64_t>(r)));
      const auto perm = rng.permutation(test.rows());
      for (std::size_t i = 0; i < test.rows(); ++i) {
        const auto src = test.row(i);
        std::copy(src.begin(), src.end(), row.begin());
        row[j] = col[perm[i]];
        pred[i] = predict(row);
      }
      inc.push_back(metric(test.target, pred) - base);
    }
    out.push_back({test.columns[j], tsx::mean(inc), sample_sd(inc)});
  }
  std::stable_sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    if (a.mean_increase != b.mean_increase) return a.mean_increase > b.mean_increase;
    return a.feature < b.feature;
  });
  return out;
}

// --- explanation stability ---------------------------------------------------

using ModelFactory = std::function<gbt::GbtModel(const FeatureMatrix&)>;

struct StabilityOptions {
  std::size_t n_bootstrap = 20;
  std::size_t block_length = 12;
  BackgroundMode background = BackgroundMode::global_mean;
  std::uint64_t seed = 0;
};

struct StabilityResult {
  double mean_spearman = 0.0;
  std::vector<double> pairwise;
  std::vector<std::vector<double>> importances;  // mean |phi| per bootstrap, feature order
};

inline double rank_agreement(std::span<const double> a, std::span<const double> b) {
  const bool ca = std::all_of(a.begin(), a.end(), [&](double v) { return v == a.front(); });
  const bool cb = std::all_of(b.begin(), b.end(), [&](double v) { return v == b.front(); });
  if (ca || cb) return ca && cb ? 1.0 : 0.0;
  return stats::spearman(a, b);
}

/// Background for a test instance under a stability mode.
inline Background background_for(const FeatureMatrix& train, BackgroundMode mode, const YearMonth& when) {
  if (mode == BackgroundMode::seasonal_month_mean) {
    for (std::size_t i = 0; i < train.rows(); ++i)
      if (train.times[i].month == when.month) return seasonal_background(train, when.month);
  }
  return Background::global_mean(train);
}

/// Block-bootstraps the training rows, refits, recomputes the global TreeSHAP
/// importance on the fixed test rows, and averages pairwise Spearman
/// correlations of the importance vectors.
inline StabilityResult explanation_stability(const ModelFactory& factory, const FeatureMatrix& train,
                                             const FeatureMatrix& test, const StabilityOptions& opt = {}) {
  if (opt.n_bootstrap < 2) throw ValidationError("explanation_stability: need at least two bootstrap samples");
  if (test.rows() == 0) throw ValidationError("explanation_stability: empty test set");
  StabilityResult out;
  for (std::size_t b = 0; b < opt.n_bootstrap; ++b) {
    Rng rng(derive_seed(opt.seed, b));
    const auto idx = stats::moving_block_indices(train.rows(), std::min(opt.block_length, train.rows()), rng);
    const FeatureMatrix resampled = train.select(idx);
    const gbt::GbtModel model = factory(resampled);
    std::vector<Attribution> attrs;
    const Background global = Background::global_mean(resampled);
    for (std::size_t i = 0; i < test.rows(); ++i) {
      const Background bg = opt.background == BackgroundMode::global_mean
                                ? global
                                : background_for(resampled, opt.background, test.times[i]);
      attrs.push_back(tree_shap(model, test.row(i), bg));
    }
    out.importances.push_back(mean_abs_phi(attrs));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < out.importances.size(); ++i)
    for (std::size_t j = i + 1; j < out.importances.size(); ++j) {
      out.pairwise.push_back(rank_agreement(out.importances[i], out.importances[j]));
      s += out.pairwise.back();
    }
  out.mean_spearman = s / static_cast<double>(out.pairwise.size());
  return out;
}

}  // namespace tsx::explain
