#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsx/airpassengers.hpp"
#include "tsx/common.hpp"
#include "tsx/correlation.hpp"
#include "tsx/eval_stats.hpp"
#include "tsx/explain.hpp"
#include "tsx/features.hpp"
#include "tsx/gbt.hpp"
#include "tsx/sarima.hpp"
#include "tsx/series.hpp"
#include "tsx/svg.hpp"

namespace tsx::report {

using nlohmann::json;
using series::TimeSeries;
using series::YearMonth;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

// --- configuration ------------------------------------------------------------

struct ExplainSettings {
  int permutations = 50;
  std::size_t lime_samples = 5000;
  std::vector<double> kernel_factors = {0.5, 0.75, 1.0};
  double lime_kernel_factor = 0.75;
  explain::BackgroundMode background = explain::BackgroundMode::global_mean;
  std::string lime_instance = "1959-07";
  int importance_repeats = 10;
  std::size_t stability_bootstraps = 20;
  std::string dependence_feature = "lag_12";
  std::string dependence_color = "lag_1";
};

struct BootstrapSettings {
  std::size_t block_length = 12;
  std::size_t resamples = 1000;
  double alpha = 0.05;
};

struct PipelineConfig {
  std::string input = std::string(data::kBuiltinAirPassengers);
  features::FeatureSpec features;
  std::string target_transform = "log_growth";  // or "level"
  int test_months = 24;
  gbt::GbtHyperParams gbt;
  arima::ArimaSpec arima;
  int arima_restarts = 5;
  ExplainSettings explain;
  BootstrapSettings bootstrap;
  std::string output_dir = "report";
  std::uint64_t seed = 42;

  void validate() const {
    if (input.empty()) throw ValidationError("config: input must be a path or " + std::string(data::kBuiltinAirPassengers));
    features.validate();
    if (target_transform != "log_growth" && target_transform != "level")
      throw ValidationError("config: target_transform must be 'log_growth' or 'level'");
    if (test_months < 1) throw ValidationError("config: test_months must be >= 1, got " + std::to_string(test_months));
    gbt.validate();
    arima.validate();
    if (arima_restarts < 0) throw ValidationError("config: arima restarts must be >= 0");
    if (explain.permutations < 1) throw ValidationError("config: explain.permutations must be >= 1");
    if (explain.lime_samples < 10) throw ValidationError("config: explain.lime_samples must be >= 10");
    if (explain.kernel_factors.empty()) throw ValidationError("config: explain.kernel_factors must be non-empty");
    for (double f : explain.kernel_factors)
      if (!(f > 0.0)) throw ValidationError("config: kernel factors must be positive");
    if (!(explain.lime_kernel_factor > 0.0)) throw ValidationError("config: explain.lime_kernel_factor must be positive");
    if (!series::parse_year_month(explain.lime_instance))
      throw ValidationError("config: explain.lime_instance must be YYYY-MM");
    if (explain.importance_repeats < 1) throw ValidationError("config: explain.importance_repeats must be >= 1");
    if (explain.stability_bootstraps < 2) throw ValidationError("config: explain.stability_bootstraps must be >= 2");
    const auto cols = features.column_names();
    for (const auto* name : {&explain.dependence_feature, &explain.dependence_color})
      if (std::find(cols.begin(), cols.end(), *name) == cols.end())
        throw ValidationError("config: unknown feature '" + *name + "'");
    if (bootstrap.block_length < 1) throw ValidationError("config: bootstrap.block_length must be >= 1");
    if (bootstrap.resamples < 1) throw ValidationError("config: bootstrap.resamples must be >= 1");
    if (!(bootstrap.alpha > 0.0 && bootstrap.alpha < 1.0)) throw ValidationError("config: bootstrap.alpha must be in (0,1)");
  }
};

// Sub-seeds for each randomized stage.
enum class Stream : std::uint64_t { gbt = 1, arima = 2, shap = 3, lime = 4, importance = 5, bootstrap = 6, stability = 7 };

inline std::uint64_t stream_seed(const PipelineConfig& c, Stream s) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(s));
}

inline json to_json(const features::FeatureSpec& f) {
  json rolling = json::array();
  for (const auto& r : f.rolling) rolling.push_back({{"length", r.length}, {"mean", r.mean}, {"std", r.std}});
  return {{"lags", f.lags}, {"rolling", rolling}, {"cyclic_month", f.cyclic_month}};
}

inline json to_json(const gbt::GbtHyperParams& h) {
  return {{"n_trees", h.n_trees},       {"max_depth", h.max_depth},
          {"learning_rate", h.learning_rate}, {"row_subsample", h.row_subsample},
          {"col_subsample", h.col_subsample}, {"l2_leaf", h.l2_leaf},
          {"min_split_gain", h.min_split_gain}, {"min_samples_leaf", h.min_samples_leaf}};
}

/// Config as JSON. The output directory is excluded when `with_output` is
/// false so that the bundle does not depend on where it is written.
inline json to_json(const PipelineConfig& c, bool with_output = true) {
  json arima = arima::to_json(c.arima);
  arima["restarts"] = c.arima_restarts;
  json j = {{"input", c.input},
            {"features", to_json(c.features)},
            {"target_transform", c.target_transform},
            {"test_months", c.test_months},
            {"gbt", to_json(c.gbt)},
            {"arima", arima},
            {"explain",
             {{"permutations", c.explain.permutations},
              {"lime_samples", c.explain.lime_samples},
              {"kernel_factors", c.explain.kernel_factors},
              {"lime_kernel_factor", c.explain.lime_kernel_factor},
              {"background", explain::to_string(c.explain.background)},
              {"lime_instance", c.explain.lime_instance},
              {"importance_repeats", c.explain.importance_repeats},
              {"stability_bootstraps", c.explain.stability_bootstraps},
              {"dependence_feature", c.explain.dependence_feature},
              {"dependence_color", c.explain.dependence_color}}},
            {"bootstrap",
             {{"block_length", c.bootstrap.block_length},
              {"resamples", c.bootstrap.resamples},
              {"alpha", c.bootstrap.alpha}}},
            {"seed", c.seed}};
  if (with_output) j["output_dir"] = c.output_dir;
  return j;
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const json& j) {
  using detail::read;
  PipelineConfig c;
  detail::check_keys(j, "",
                     {"input", "features", "target_transform", "test_months", "gbt", "arima", "explain", "bootstrap",
                      "output_dir", "seed"});
  read(j, "input", c.input, "");
  read(j, "target_transform", c.target_transform, "");
  read(j, "test_months", c.test_months, "");
  read(j, "output_dir", c.output_dir, "");
  read(j, "seed", c.seed, "");
  if (j.contains("features")) {
    const auto& f = j["features"];
    detail::check_keys(f, "features", {"lags", "rolling", "cyclic_month"});
    read(f, "lags", c.features.lags, "features");
    read(f, "cyclic_month", c.features.cyclic_month, "features");
    if (f.contains("rolling")) {
      if (!f["rolling"].is_array()) throw ValidationError("config: 'features.rolling' must be an array");
      c.features.rolling.clear();
      for (const auto& r : f["rolling"]) {
        detail::check_keys(r, "features.rolling[]", {"length", "mean", "std"});
        features::RollingWindow w;
        read(r, "length", w.length, "features.rolling[]");
        read(r, "mean", w.mean, "features.rolling[]");
        read(r, "std", w.std, "features.rolling[]");
        c.features.rolling.push_back(w);
      }
    }
  }
  if (j.contains("gbt")) {
    const auto& g = j["gbt"];
    detail::check_keys(g, "gbt",
                       {"n_trees", "max_depth", "learning_rate", "row_subsample", "col_subsample", "l2_leaf",
                        "min_split_gain", "min_samples_leaf"});
    read(g, "n_trees", c.gbt.n_trees, "gbt");
    read(g, "max_depth", c.gbt.max_depth, "gbt");
    read(g, "learning_rate", c.gbt.learning_rate, "gbt");
    read(g, "row_subsample", c.gbt.row_subsample, "gbt");
    read(g, "col_subsample", c.gbt.col_subsample, "gbt");
    read(g, "l2_leaf", c.gbt.l2_leaf, "gbt");
    read(g, "min_split_gain", c.gbt.min_split_gain, "gbt");
    read(g, "min_samples_leaf", c.gbt.min_samples_leaf, "gbt");
  }
  if (j.contains("arima")) {
    const auto& a = j["arima"];
    detail::check_keys(a, "arima", {"p", "d", "q", "P", "D", "Q", "s", "use_log", "restarts"});
    read(a, "p", c.arima.p, "arima");
    read(a, "d", c.arima.d, "arima");
    read(a, "q", c.arima.q, "arima");
    read(a, "P", c.arima.P, "arima");
    read(a, "D", c.arima.D, "arima");
    read(a, "Q", c.arima.Q, "arima");
    read(a, "s", c.arima.s, "arima");
    read(a, "use_log", c.arima.use_log, "arima");
    read(a, "restarts", c.arima_restarts, "arima");
  }
  if (j.contains("explain")) {
    const auto& e = j["explain"];
    detail::check_keys(e, "explain",
                       {"permutations", "lime_samples", "kernel_factors", "lime_kernel_factor", "background",
                        "lime_instance", "importance_repeats", "stability_bootstraps", "dependence_feature",
                        "dependence_color"});
    read(e, "permutations", c.explain.permutations, "explain");
    read(e, "lime_samples", c.explain.lime_samples, "explain");
    read(e, "kernel_factors", c.explain.kernel_factors, "explain");
    read(e, "lime_kernel_factor", c.explain.lime_kernel_factor, "explain");
    std::string bg = explain::to_string(c.explain.background);
    read(e, "background", bg, "explain");
    c.explain.background = explain::background_mode_from_string(bg);
    if (c.explain.background == explain::BackgroundMode::explicit_rows)
      throw ValidationError("config: explain.background must be global_mean or seasonal_month_mean");
    read(e, "lime_instance", c.explain.lime_instance, "explain");
    read(e, "importance_repeats", c.explain.importance_repeats, "explain");
    read(e, "stability_bootstraps", c.explain.stability_bootstraps, "explain");
    read(e, "dependence_feature", c.explain.dependence_feature, "explain");
    read(e, "dependence_color", c.explain.dependence_color, "explain");
  }
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    detail::check_keys(b, "bootstrap", {"block_length", "resamples", "alpha"});
    read(b, "block_length", c.bootstrap.block_length, "bootstrap");
    read(b, "resamples", c.bootstrap.resamples, "bootstrap");
    read(b, "alpha", c.bootstrap.alpha, "bootstrap");
  }
  c.gbt.seed = stream_seed(c, Stream::gbt);
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline PipelineConfig default_config() {
  PipelineConfig c;
  c.gbt.seed = stream_seed(c, Stream::gbt);
  return c;
}

/// Replaces the master seed and re-derives the dependent model seed.
inline void reseed(PipelineConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.gbt.seed = stream_seed(c, Stream::gbt);
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const PipelineConfig& c) { return fnv1a_hex(to_json(c, false).dump()); }

// --- stage labelling ----------------------------------------------------------

/// Runs `fn`, prefixing any library error with the stage name while keeping
/// its category.
template <class F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(name + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(name + ": " + e.what());
  }
}

// --- pipeline stages ------------------------------------------------------------

inline TimeSeries load_input(const std::string& input) {
  if (input == data::kBuiltinAirPassengers) return data::air_passengers();
  return series::load_csv(input);
}

/// Series the feature matrix is built from.
inline TimeSeries model_series(const TimeSeries& ts, const std::string& transform) {
  if (transform == "level") return ts;
  const TimeSeries logged = series::log_transform(ts);
  if (logged.size() < 2) throw DataError("log_growth: need at least two observations");
  TimeSeries g;
  g.start = ts.start.plus(1);
  g.log_space = true;
  for (std::size_t i = 1; i < logged.size(); ++i) g.values.push_back(logged.values[i] - logged.values[i - 1]);
  return g;
}

/// Maps a model-scale prediction for month `t` back to a level.
inline double to_level(const TimeSeries& ts, const std::string& transform, YearMonth t, double pred) {
  if (transform == "level") return pred;
  const auto i = ts.index_of(t);
  if (!i || *i == 0) throw DataError("to_level: no observation before " + t.iso());
  return ts.values[*i - 1] * std::exp(pred);
}

struct Prepared {
  TimeSeries series;
  TimeSeries modelled;
  features::FeatureMatrix matrix;
  features::FeatureMatrix train;
  features::FeatureMatrix test;
  features::Standardizer standardizer;
  std::size_t test_start = 0;  // index of the first test month in `series`
};

inline Prepared prepare(const PipelineConfig& c) {
  Prepared p;
  p.series = stage("load", [&] { return load_input(c.input); });
  stage("featurize", [&] {
    p.modelled = model_series(p.series, c.target_transform);
    p.matrix = features::build_feature_matrix(p.modelled, c.features);
    return 0;
  });
  stage("split", [&] {
    auto [tr, te] = features::chronological_split(p.matrix, c.test_months);
    p.train = std::move(tr);
    p.test = std::move(te);
    p.standardizer = features::fit_standardizer(p.train);
    p.test_start = *p.series.index_of(p.test.times.front());
    return 0;
  });
  return p;
}

struct Models {
  gbt::GbtModel gbt;
  gbt::TrainingTrace trace;
  arima::ArimaModel arima;
};

inline Models train_models(const Prepared& p, const PipelineConfig& c) {
  Models m;
  m.gbt = stage("train gbt", [&] { return gbt::fit_gbt(p.train, c.gbt, &m.trace); });
  m.arima = stage("train sarima", [&] {
    arima::FitOptions opt;
    opt.restarts = c.arima_restarts;
    opt.seed = stream_seed(c, Stream::arima);
    return arima::fit_sarima(p.series.slice(0, p.test_start), c.arima, opt);
  });
  return m;
}

struct ForecastRow {
  YearMonth time;
  double actual = 0.0;
  double gbt = 0.0;
  double sarima = 0.0;            // one step ahead
  double sarima_multistep = 0.0;  // from the end of training
};

inline std::vector<ForecastRow> make_forecasts(const Prepared& p, const Models& m, const PipelineConfig& c) {
  return stage("forecast", [&] {
    const auto gbt_pred = m.gbt.predict_batch(p.test);
    const auto one = arima::one_step_ahead(m.arima, p.series, p.test_start);
    const auto multi = arima::forecast(m.arima, static_cast<int>(p.test.rows()));
    std::vector<ForecastRow> rows;
    for (std::size_t i = 0; i < p.test.rows(); ++i) {
      ForecastRow r;
      r.time = p.test.times[i];
      r.actual = p.series.values[p.test_start + i];
      r.gbt = to_level(p.series, c.target_transform, r.time, gbt_pred[i]);
      r.sarima = one[i];
      r.sarima_multistep = multi[i];
      rows.push_back(r);
    }
    return rows;
  });
}

struct ModelEvaluation {
  std::string model;
  stats::MetricReport point;
  stats::BootstrapCi rmse_ci;
  stats::BootstrapCi mape_ci;
};

struct Evaluation {
  std::vector<ModelEvaluation> models;  // gbt, sarima, sarima_multistep
  stats::DmResult dm;                   // sarima vs gbt, one step
};

inline Evaluation evaluate(const std::vector<ForecastRow>& rows, const PipelineConfig& c) {
  return stage("evaluate", [&] {
    std::vector<double> y, g, s, sm, eg, es;
    for (const auto& r : rows) {
      y.push_back(r.actual);
      g.push_back(r.gbt);
      s.push_back(r.sarima);
      sm.push_back(r.sarima_multistep);
      eg.push_back(r.actual - r.gbt);
      es.push_back(r.actual - r.sarima);
    }
    stats::BootstrapOptions bo;
    bo.block_length = std::min(c.bootstrap.block_length, y.size());
    bo.n_resamples = c.bootstrap.resamples;
    bo.alpha = c.bootstrap.alpha;
    bo.seed = stream_seed(c, Stream::bootstrap);
    Evaluation ev;
    const std::pair<const char*, const std::vector<double>*> cols[] = {
        {"gbt", &g}, {"sarima", &s}, {"sarima_multistep", &sm}};
    for (const auto& [name, pred] : cols) {
      ModelEvaluation me;
      me.model = name;
      me.point = stats::metrics(y, *pred);
      me.rmse_ci = stats::block_bootstrap_ci(y, *pred, stats::Metric::rmse, bo);
      me.mape_ci = stats::block_bootstrap_ci(y, *pred, stats::Metric::mape, bo);
      ev.models.push_back(me);
    }
    ev.dm = stats::dm_test(es, eg, 1, true);
    return ev;
  });
}

struct Explanations {
  std::vector<explain::Attribution> tree;         // exact, one per test row
  std::vector<explain::Attribution> permutation;  // sampled, one per test row
  double pearson = 0.0;                           // pooled over all rows and features
  double max_local_gap = 0.0;                     // over both attribution sets
  std::vector<explain::FeatureScore> tree_ranking;
  std::vector<explain::FeatureScore> permutation_ranking;
  std::vector<explain::DependencePoint> dependence;
  explain::KernelSweep sweep;
  explain::LimeExplanation lime;
  std::vector<explain::ImportanceEntry> importance;
  explain::StabilityResult stability_global;
  explain::StabilityResult stability_seasonal;
};

inline explain::Background background_for_row(const Prepared& p, const PipelineConfig& c, YearMonth when) {
  return explain::background_for(p.train, c.explain.background, when);
}

inline Explanations explain_all(const Prepared& p, const Models& m, const PipelineConfig& c, bool with_stability = true) {
  Explanations ex;
  const auto predict = explain::predictor_of(m.gbt);
  stage("shap", [&] {
    const auto shap_seed = stream_seed(c, Stream::shap);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < p.test.rows(); ++i) {
      const auto bg = background_for_row(p, c, p.test.times[i]);
      auto t = explain::tree_shap(m.gbt, p.test.row(i), bg);
      auto s = explain::permutation_shap(predict, p.test.row(i), bg, c.explain.permutations, derive_seed(shap_seed, i),
                                         p.test.columns);
      t.time = s.time = p.test.times[i];
      ex.max_local_gap = std::max({ex.max_local_gap, t.local_accuracy_gap(), s.local_accuracy_gap()});
      a.insert(a.end(), t.phi.begin(), t.phi.end());
      b.insert(b.end(), s.phi.begin(), s.phi.end());
      ex.tree.push_back(std::move(t));
      ex.permutation.push_back(std::move(s));
    }
    ex.pearson = stats::pearson(a, b);
    ex.tree_ranking = explain::shap_global_summary(ex.tree);
    ex.permutation_ranking = explain::shap_global_summary(ex.permutation);
    ex.dependence = explain::dependence_data(ex.tree, p.test, c.explain.dependence_feature, c.explain.dependence_color);
    return 0;
  });
  stage("lime", [&] {
    const auto lime_seed = stream_seed(c, Stream::lime);
    ex.sweep = explain::kernel_width_sweep(predict, p.test, p.train, p.standardizer, c.explain.kernel_factors,
                                           c.explain.lime_samples, lime_seed);
    const auto when = *series::parse_year_month(c.explain.lime_instance);
    const auto row = p.test.row_of(when);
    if (!row) throw ValidationError("lime instance " + when.iso() + " is not in the test period");
    ex.lime = explain::lime_explain(predict, p.test.row(*row), p.train, p.standardizer,
                                    {c.explain.lime_samples, c.explain.lime_kernel_factor, derive_seed(lime_seed, 0, 1), 1e-10});
    ex.lime.time = when;
    return 0;
  });
  stage("permutation importance", [&] {
    ex.importance = explain::permutation_importance(predict, p.test, c.explain.importance_repeats,
                                                    stream_seed(c, Stream::importance));
    return 0;
  });
  if (with_stability) {
    stage("stability", [&] {
      const auto hp = c.gbt;
      const explain::ModelFactory factory = [hp](const features::FeatureMatrix& tr) { return gbt::fit_gbt(tr, hp); };
      explain::StabilityOptions so;
      so.n_bootstrap = c.explain.stability_bootstraps;
      so.block_length = c.bootstrap.block_length;
      so.seed = stream_seed(c, Stream::stability);
      so.background = explain::BackgroundMode::global_mean;
      ex.stability_global = explain::explanation_stability(factory, p.train, p.test, so);
      so.background = explain::BackgroundMode::seasonal_month_mean;
      ex.stability_seasonal = explain::explanation_stability(factory, p.train, p.test, so);
      return 0;
    });
  }
  return ex;
}

// --- bundle ---------------------------------------------------------------------

struct ReportBundle {
  PipelineConfig config;
  std::string config_hash;
  series::StatsSummary summary;
  std::vector<series::LagCorrelation> lag_correlations;
  std::size_t n_rows = 0, n_train = 0, n_test = 0;
  YearMonth first_row, test_start;
  std::vector<double> gbt_trace;
  std::size_t gbt_trees = 0;
  json sarima;
  std::vector<ForecastRow> forecasts;
  Evaluation evaluation;
  Explanations explanations;
  std::vector<std::string> features;
  TimeSeries series;  // for the forecast figure

  const ModelEvaluation& model(const std::string& name) const {
    for (const auto& m : evaluation.models)
      if (m.model == name) return m;
    throw ValidationError("bundle has no model '" + name + "'");
  }
};

inline ReportBundle run_pipeline(const PipelineConfig& c) {
  c.validate();
  ReportBundle b;
  b.config = c;
  b.config_hash = config_hash(c);
  const Prepared p = prepare(c);
  b.series = p.series;
  b.summary = series::descriptive_stats(p.series);
  b.lag_correlations = stage("stats", [&] { return series::lag_correlations(p.series, 24); });
  b.n_rows = p.matrix.rows();
  b.n_train = p.train.rows();
  b.n_test = p.test.rows();
  b.first_row = p.matrix.times.front();
  b.test_start = p.test.times.front();
  b.features = p.matrix.columns;
  const Models m = train_models(p, c);
  b.gbt_trace = m.trace.rmse;
  b.gbt_trees = m.gbt.trees.size();
  b.sarima = arima::to_json(m.arima);
  b.sarima["warnings"] = m.arima.warnings;
  b.forecasts = make_forecasts(p, m, c);
  b.evaluation = evaluate(b.forecasts, c);
  b.explanations = explain_all(p, m, c);
  return b;
}

namespace detail {

inline json ci_json(const stats::BootstrapCi& ci) {
  return {{"point", ci.point}, {"lower", ci.lower}, {"upper", ci.upper}};
}

inline json scores_json(const std::vector<explain::FeatureScore>& s) {
  json a = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) a.push_back({{"rank", i + 1}, {"feature", s[i].feature}, {"mean_abs_phi", s[i].value}});
  return a;
}

inline json attribution_json(const explain::Attribution& a) {
  return {{"time", a.time ? a.time->iso() : ""},
          {"baseline", a.baseline_value},
          {"prediction", a.prediction},
          {"phi", a.phi}};
}

inline json lime_json(const explain::LimeExplanation& l) {
  return {{"time", l.time ? l.time->iso() : ""},
          {"kernel_width", l.kernel_width},
          {"n_samples", l.n_samples},
          {"surrogate_r2", l.surrogate_r2},
          {"prediction", l.prediction},
          {"intercept", l.intercept},
          {"coefficients", l.coefficients},
          {"scaled_coefficients", l.scaled_coefficients},
          {"contributions", l.contributions},
          {"top_feature", l.features.empty() ? "" : l.features[l.top_feature()]}};
}

inline json stability_json(const explain::StabilityResult& s) {
  return {{"mean_spearman", s.mean_spearman}, {"n_pairs", s.pairwise.size()}, {"importances", s.importances}};
}

}  // namespace detail

inline json to_json(const ReportBundle& b) {
  const auto& ex = b.explanations;
  json forecasts = json::array();
  for (const auto& r : b.forecasts)
    forecasts.push_back({{"time", r.time.iso()},
                         {"actual", r.actual},
                         {"gbt", r.gbt},
                         {"sarima", r.sarima},
                         {"sarima_multistep", r.sarima_multistep}});
  json metrics = json::array();
  for (const auto& m : b.evaluation.models)
    metrics.push_back({{"model", m.model},
                       {"rmse", detail::ci_json(m.rmse_ci)},
                       {"mape", detail::ci_json(m.mape_ci)},
                       {"smape", m.point.smape},
                       {"r2", m.point.r2}});
  const auto& dm = b.evaluation.dm;
  json lags = json::array();
  for (const auto& l : b.lag_correlations) lags.push_back({{"lag", l.lag}, {"r", l.pearson}});
  json importance = json::array();
  for (const auto& e : ex.importance)
    importance.push_back({{"feature", e.feature}, {"mean_increase", e.mean_increase}, {"std", e.std_dev}});
  json tree = json::array(), perm = json::array();
  for (const auto& a : ex.tree) tree.push_back(detail::attribution_json(a));
  for (const auto& a : ex.permutation) perm.push_back(detail::attribution_json(a));
  json dependence = json::array();
  for (const auto& d : ex.dependence)
    dependence.push_back({{"time", d.time.iso()}, {"value", d.value}, {"phi", d.phi}, {"color", d.color}});
  json sweep = json::array();
  for (const auto& e : ex.sweep.entries) sweep.push_back({{"factor", e.factor}, {"median_r2", e.median_r2}, {"r2", e.r2}});

  return {
      {"schema_version", kSchemaVersion},
      {"provenance", {{"tool", "tsx"}, {"version", kVersion}, {"seed", b.config.seed}, {"config_hash", b.config_hash}}},
      {"config", to_json(b.config, false)},
      {"data",
       {{"n_observations", b.summary.n},
        {"mean", b.summary.mean},
        {"sd", b.summary.std_dev},
        {"min", b.summary.min},
        {"q25", b.summary.q25},
        {"median", b.summary.median},
        {"q75", b.summary.q75},
        {"max", b.summary.max},
        {"lag_correlations", lags},
        {"n_rows", b.n_rows},
        {"n_train", b.n_train},
        {"n_test", b.n_test},
        {"first_row", b.first_row.iso()},
        {"test_start", b.test_start.iso()},
        {"features", b.features}}},
      {"models", {{"gbt", {{"trees", b.gbt_trees}, {"train_rmse", b.gbt_trace}}}, {"sarima", b.sarima}}},
      {"forecasts", forecasts},
      {"metrics", metrics},
      {"dm_test",
       {{"model_a", "sarima"},
        {"model_b", "gbt"},
        {"statistic", dm.statistic},
        {"p_value", dm.p_value},
        {"n", dm.n},
        {"horizon", dm.horizon},
        {"loss", dm.loss},
        {"two_sided", dm.two_sided},
        {"small_sample_corrected", dm.small_sample_corrected},
        {"indeterminate", dm.indeterminate},
        {"mean_differential", dm.mean_differential}}},
      {"shap",
       {{"background", explain::to_string(b.config.explain.background)},
        {"ranking", detail::scores_json(ex.tree_ranking)},
        {"permutation_ranking", detail::scores_json(ex.permutation_ranking)},
        {"tree_vs_permutation_pearson", ex.pearson},
        {"max_local_accuracy_gap", ex.max_local_gap},
        {"tree", tree},
        {"permutation", perm},
        {"dependence",
         {{"feature", b.config.explain.dependence_feature},
          {"color", b.config.explain.dependence_color},
          {"points", dependence}}}}},
      {"lime",
       {{"kernel_sweep", sweep},
        {"top_feature_agreement", ex.sweep.top_feature_agreement},
        {"instance", detail::lime_json(ex.lime)}}},
      {"permutation_importance", importance},
      {"stability",
       {{"global_mean", detail::stability_json(ex.stability_global)},
        {"seasonal_month_mean", detail::stability_json(ex.stability_seasonal)}}}};
}

inline std::string bundle_text(const ReportBundle& b) { return to_json(b).dump(2) + "\n"; }

// --- CSV tables -------------------------------------------------------------------

inline std::string forecasts_csv(const std::vector<ForecastRow>& rows) {
  std::ostringstream out;
  out << "date,actual,gbt,sarima,sarima_multistep\n";
  for (const auto& r : rows)
    out << r.time.iso() << ',' << format_exact(r.actual) << ',' << format_exact(r.gbt) << ',' << format_exact(r.sarima)
        << ',' << format_exact(r.sarima_multistep) << '\n';
  return out.str();
}

inline std::string metrics_csv(const Evaluation& ev) {
  std::ostringstream out;
  out << "model,rmse,rmse_lower,rmse_upper,mape,mape_lower,mape_upper,smape,r2\n";
  for (const auto& m : ev.models)
    out << m.model << ',' << format_exact(m.rmse_ci.point) << ',' << format_exact(m.rmse_ci.lower) << ','
        << format_exact(m.rmse_ci.upper) << ',' << format_exact(m.mape_ci.point) << ',' << format_exact(m.mape_ci.lower)
        << ',' << format_exact(m.mape_ci.upper) << ',' << format_exact(m.point.smape) << ',' << format_exact(m.point.r2)
        << '\n';
  return out.str();
}

/// Long-format attribution table: one line per (month, feature).
inline std::string attributions_csv(const std::vector<explain::Attribution>& attrs, const std::string& method,
                                    bool header = true) {
  std::ostringstream out;
  if (header) out << "date,method,feature,phi,baseline,prediction\n";
  for (const auto& a : attrs)
    for (std::size_t j = 0; j < a.phi.size(); ++j)
      out << (a.time ? a.time->iso() : "") << ',' << method << ',' << a.features[j] << ',' << format_exact(a.phi[j])
          << ',' << format_exact(a.baseline_value) << ',' << format_exact(a.prediction) << '\n';
  return out.str();
}

// --- figures ----------------------------------------------------------------------

struct FigureSet {
  std::vector<std::string> written;  // file names relative to the output directory
  std::vector<json> omitted;         // {"figure": ..., "reason": ...}
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::string join_values(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += format_g(x) + " ";
  if (!s.empty()) s.pop_back();
  return s;
}

/// Horizontal bar chart; each bar carries data-label / data-value.
inline std::string bar_chart(const std::string& title, const std::string& figure, const std::vector<std::string>& labels,
                             const std::vector<double>& values, const std::string& axis_label) {
  const double left = 130, right = 30, top = 40, bar = 18, gap = 6;
  const double height = top + static_cast<double>(labels.size()) * (bar + gap) + 40;
  const double width = 640;
  svg::Document doc(width, height);
  doc.text(width / 2, 22, title, "middle", 14);
  double lo = 0.0, hi = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1.0;
  const svg::Scale x{lo, hi, left, width - right};
  const double zero = x(0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = top + static_cast<double>(i) * (bar + gap);
    const double x0 = std::min(zero, x(values[i])), x1 = std::max(zero, x(values[i]));
    doc.element("rect", {{"x", svg::Document::px(x0)},
                         {"y", svg::Document::px(y)},
                         {"width", svg::Document::px(std::max(x1 - x0, 0.5))},
                         {"height", svg::Document::px(bar)},
                         {"fill", values[i] >= 0 ? "#d6604d" : "#4393c3"},
                         {"data-figure", figure},
                         {"data-label", labels[i]},
                         {"data-value", format_g(values[i])}});
    doc.text(left - 6, y + bar * 0.7, labels[i], "end");
  }
  const double axis_y = top + static_cast<double>(labels.size()) * (bar + gap);
  doc.line(left, axis_y, width - right, axis_y, "#333");
  doc.line(zero, top - 4, zero, axis_y, "#333");
  doc.text(left, axis_y + 16, format_g(lo, 4), "middle", 10);
  doc.text(width - right, axis_y + 16, format_g(hi, 4), "middle", 10);
  doc.text((left + width - right) / 2, axis_y + 32, axis_label, "middle");
  return doc.str(title);
}

inline std::string forecast_chart(const ReportBundle& b) {
  const double width = 760, height = 380, left = 60, right = 20, top = 40, bottom = 50;
  svg::Document doc(width, height);
  doc.text(width / 2, 22, "Observed series with hold-out forecasts", "middle", 14);
  const auto& s = b.series;
  std::vector<double> all = s.values;
  for (const auto& r : b.forecasts) {
    all.push_back(r.gbt);
    all.push_back(r.sarima);
  }
  const auto [ylo, yhi] = svg::padded_range(all);
  const svg::Scale x{0.0, static_cast<double>(s.size() - 1), left, width - right};
  const svg::Scale y{ylo, yhi, height - bottom, top};
  auto pos = [&](YearMonth t) { return static_cast<double>(s.start.months_until(t)); };

  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < s.size(); ++i) pts.emplace_back(x(static_cast<double>(i)), y(s.values[i]));
  doc.polyline(pts, "#222", {{"data-series", "actual"}, {"data-start", s.start.iso()}, {"data-values", join_values(s.values)}});

  const std::pair<const char*, const char*> models[] = {{"sarima", "#d62728"}, {"gbt", "#2ca02c"}};
  for (const auto& [name, color] : models) {
    std::vector<double> v;
    pts.clear();
    for (const auto& r : b.forecasts) {
      const double val = std::string(name) == "gbt" ? r.gbt : r.sarima;
      v.push_back(val);
      pts.emplace_back(x(pos(r.time)), y(val));
    }
    doc.polyline(pts, color,
                 {{"data-series", name},
                  {"data-start", b.forecasts.empty() ? "" : b.forecasts.front().time.iso()},
                  {"data-values", join_values(v)}});
  }
  doc.line(left, height - bottom, width - right, height - bottom, "#333");
  doc.line(left, top, left, height - bottom, "#333");
  doc.text(left, height - bottom + 16, s.start.iso(), "middle", 10);
  doc.text(width - right, height - bottom + 16, s.end().iso(), "middle", 10);
  doc.text(left - 6, y(yhi) + 4, format_g(yhi, 4), "end", 10);
  doc.text(left - 6, y(ylo), format_g(ylo, 4), "end", 10);
  doc.text(width - right - 150, top + 10, "actual", "start");
  doc.text(width - right - 150, top + 26, "SARIMA (red)", "start");
  doc.text(width - right - 150, top + 42, "GBT (green)", "start");
  return doc.str("Observed series with hold-out forecasts");
}

inline std::string dependence_chart(const ReportBundle& b) {
  const auto& pts = b.explanations.dependence;
  const auto& feature = b.config.explain.dependence_feature;
  const auto& color = b.config.explain.dependence_color;
  const std::string title = "SHAP dependence: " + feature + " (colour: " + color + ")";
  const double width = 560, height = 400, left = 70, right = 20, top = 40, bottom = 50;
  svg::Document doc(width, height);
  doc.text(width / 2, 22, title, "middle", 14);
  std::vector<double> xs, ys, cs;
  for (const auto& p : pts) {
    xs.push_back(p.value);
    ys.push_back(p.phi);
    cs.push_back(p.color);
  }
  const auto [x0, x1] = svg::padded_range(xs);
  const auto [y0, y1] = svg::padded_range(ys);
  const auto [c0, c1] = std::minmax_element(cs.begin(), cs.end());
  const svg::Scale x{x0, x1, left, width - right};
  const svg::Scale y{y0, y1, height - bottom, top};
  for (const auto& p : pts) {
    const double t = *c1 > *c0 ? (p.color - *c0) / (*c1 - *c0) : 0.5;
    doc.element("circle", {{"cx", svg::Document::px(x(p.value))},
                           {"cy", svg::Document::px(y(p.phi))},
                           {"r", "4"},
                           {"fill", svg::diverging_color(t)},
                           {"data-time", p.time.iso()},
                           {"data-value", format_g(p.value)},
                           {"data-phi", format_g(p.phi)},
                           {"data-color", format_g(p.color)}});
  }
  doc.line(left, height - bottom, width - right, height - bottom, "#333");
  doc.line(left, top, left, height - bottom, "#333");
  doc.text((left + width - right) / 2, height - 14, feature, "middle");
  doc.text(14, (top + height - bottom) / 2, "phi", "middle");
  return doc.str(title);
}

}  // namespace detail

/// Writes the five figures into `outdir`; figures without data are listed in
/// `omitted` instead.
inline FigureSet emit_figures(const ReportBundle& b, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec || !std::filesystem::is_directory(outdir)) throw DataError("cannot create output directory '" + outdir.string() + "'");
  FigureSet fs;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_text(outdir / name, text);
    fs.written.push_back(name);
  };
  auto omit = [&](const std::string& name, const std::string& reason) {
    fs.omitted.push_back({{"figure", name}, {"reason", reason}});
  };
  const auto& ex = b.explanations;

  if (b.forecasts.empty() || b.series.size() < 2)
    omit("forecast.svg", "no forecasts");
  else
    put("forecast.svg", detail::forecast_chart(b));

  if (ex.tree_ranking.empty()) {
    omit("shap_summary.svg", "empty attribution list");
  } else {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& s : ex.tree_ranking) {
      labels.push_back(s.feature);
      values.push_back(s.value);
    }
    put("shap_summary.svg", detail::bar_chart("Global SHAP importance (mean |phi|)", "shap", labels, values, "mean |phi|"));
  }

  if (ex.dependence.empty())
    omit("shap_dependence.svg", "no dependence points");
  else
    put("shap_dependence.svg", detail::dependence_chart(b));

  if (ex.lime.features.empty()) {
    omit("lime.svg", "no LIME explanation");
  } else {
    const std::string when = ex.lime.time ? ex.lime.time->iso() : "instance";
    put("lime.svg", detail::bar_chart("LIME contributions, " + when, "lime", ex.lime.features, ex.lime.contributions,
                                      "contribution (standardized units)"));
  }

  if (ex.importance.empty()) {
    omit("permutation_importance.svg", "no permutation importance");
  } else {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& e : ex.importance) {
      labels.push_back(e.feature);
      values.push_back(e.mean_increase);
    }
    put("permutation_importance.svg",
        detail::bar_chart("Permutation importance", "importance", labels, values, "increase in RMSE (model scale)"));
  }
  return fs;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes report.json, the CSV tables, the figures and manifest.json.
/// Only the manifest carries a timestamp.
inline std::vector<std::string> write_bundle(const ReportBundle& b, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec || !std::filesystem::is_directory(outdir)) throw DataError("cannot create output directory '" + outdir.string() + "'");
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_text(outdir / name, text);
    files.push_back(name);
  };
  put("report.json", bundle_text(b));
  put("forecasts.csv", forecasts_csv(b.forecasts));
  put("metrics.csv", metrics_csv(b.evaluation));
  put("attributions_tree.csv", attributions_csv(b.explanations.tree, "tree"));
  put("attributions_permutation.csv", attributions_csv(b.explanations.permutation, "permutation"));
  const auto figs = emit_figures(b, outdir);
  files.insert(files.end(), figs.written.begin(), figs.written.end());
  const json manifest = {{"tool", "tsx"},
                         {"version", kVersion},
                         {"created_utc", utc_timestamp()},
                         {"config_hash", b.config_hash},
                         {"seed", b.config.seed},
                         {"files", files},
                         {"omitted_figures", figs.omitted}};
  detail::write_text(outdir / "manifest.json", manifest.dump(2) + "\n");
  files.push_back("manifest.json");
  return files;
}

}  // namespace tsx::report
