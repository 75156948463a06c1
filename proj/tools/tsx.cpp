// tsx: command-line front end for the forecasting / explanation pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsx/report.hpp"
#include "tsx/selftest.hpp"

namespace {

using nlohmann::json;
using namespace tsx;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kValidation = 1, kData = 2, kNumerical = 3 };

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
};

report::PipelineConfig resolve_config(const GlobalOptions& g) {
  auto c = g.config.empty() ? report::default_config() : report::load_config(g.config);
  if (g.seed) report::reseed(c, *g.seed);
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

// Writes to <out>/<name> when --out is given, otherwise to stdout.
void emit(const GlobalOptions& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::error_code ec;
  fs::create_directories(g.out, ec);
  const fs::path path = fs::path(g.out) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
  std::cerr << "wrote " << path.string() << "\n";
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) s += (s.empty() ? "" : ",") + c;
  return s + "\n";
}

int cmd_stats(const GlobalOptions& g, int max_lag) {
  const auto c = resolve_config(g);
  const auto ts = report::load_input(c.input);
  const auto st = series::descriptive_stats(ts);
  const auto lags = series::lag_correlations(ts, max_lag);
  if (g.format == "csv") {
    std::string out = "statistic,value\n";
    const std::pair<const char*, double> rows[] = {{"n", static_cast<double>(st.n)}, {"mean", st.mean}, {"sd", st.std_dev},
                                                   {"min", st.min}, {"q25", st.q25}, {"median", st.median},
                                                   {"q75", st.q75}, {"max", st.max}};
    for (const auto& [k, v] : rows) out += csv_row({k, format_exact(v)});
    for (const auto& l : lags) out += csv_row({"lag_corr_" + std::to_string(l.lag), format_exact(l.pearson)});
    emit(g, "stats.csv", out);
  } else {
    json lj = json::array();
    for (const auto& l : lags) lj.push_back({{"lag", l.lag}, {"r", l.pearson}});
    const json j = {{"start", ts.start.iso()}, {"end", ts.end().iso()}, {"n", st.n},        {"mean", st.mean},
                    {"sd", st.std_dev},        {"min", st.min},         {"q25", st.q25},    {"median", st.median},
                    {"q75", st.q75},           {"max", st.max},         {"lag_correlations", lj}};
    emit(g, "stats.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_featurize(const GlobalOptions& g) {
  const auto c = resolve_config(g);
  const auto p = report::prepare(c);
  std::ostringstream out;
  features::write_csv(out, p.matrix);
  emit(g, "features.csv", out.str());
  return kOk;
}

int cmd_train(const GlobalOptions& g) {
  const auto c = resolve_config(g);
  const auto p = report::prepare(c);
  const auto m = report::train_models(p, c);
  auto gj = gbt::to_json(m.gbt);
  auto aj = arima::to_json(m.arima);
  aj["warnings"] = m.arima.warnings;
  if (g.out.empty()) {
    std::cout << json{{"gbt_trees", m.gbt.trees.size()},
                      {"gbt_final_train_rmse", m.trace.rmse.empty() ? 0.0 : m.trace.rmse.back()},
                      {"sarima", aj}}
                     .dump(2)
              << "\n";
  } else {
    emit(g, "gbt_model.json", gj.dump() + "\n");
    emit(g, "sarima_model.json", aj.dump(2) + "\n");
  }
  return kOk;
}

int cmd_forecast(const GlobalOptions& g) {
  const auto c = resolve_config(g);
  const auto p = report::prepare(c);
  const auto m = report::train_models(p, c);
  const auto rows = report::make_forecasts(p, m, c);
  if (g.format == "csv") {
    emit(g, "forecasts.csv", report::forecasts_csv(rows));
  } else {
    json a = json::array();
    for (const auto& r : rows)
      a.push_back({{"time", r.time.iso()}, {"actual", r.actual}, {"gbt", r.gbt}, {"sarima", r.sarima},
                   {"sarima_multistep", r.sarima_multistep}});
    emit(g, "forecasts.json", a.dump(2) + "\n");
  }
  return kOk;
}

int cmd_evaluate(const GlobalOptions& g) {
  const auto c = resolve_config(g);
  const auto p = report::prepare(c);
  const auto m = report::train_models(p, c);
  const auto ev = report::evaluate(report::make_forecasts(p, m, c), c);
  if (g.format == "csv") {
    emit(g, "metrics.csv", report::metrics_csv(ev));
  } else {
    json a = json::array();
    for (const auto& me : ev.models)
      a.push_back({{"model", me.model},
                   {"rmse", {{"point", me.rmse_ci.point}, {"lower", me.rmse_ci.lower}, {"upper", me.rmse_ci.upper}}},
                   {"mape", {{"point", me.mape_ci.point}, {"lower", me.mape_ci.lower}, {"upper", me.mape_ci.upper}}},
                   {"smape", me.point.smape},
                   {"r2", me.point.r2}});
    const json j = {{"metrics", a},
                    {"dm_test", {{"statistic", ev.dm.statistic}, {"p_value", ev.dm.p_value}, {"n", ev.dm.n}}}};
    emit(g, "evaluation.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_explain(const GlobalOptions& g) {
  const auto c = resolve_config(g);
  const auto p = report::prepare(c);
  const auto m = report::train_models(p, c);
  const auto ex = report::explain_all(p, m, c, false);
  if (g.format == "csv") {
    emit(g, "attributions.csv",
         report::attributions_csv(ex.tree, "tree") + report::attributions_csv(ex.permutation, "permutation", false));
  } else {
    json ranking = json::array();
    for (const auto& s : ex.tree_ranking) ranking.push_back({{"feature", s.feature}, {"mean_abs_phi", s.value}});
    json imp = json::array();
    for (const auto& e : ex.importance) imp.push_back({{"feature", e.feature}, {"mean_increase", e.mean_increase}});
    const json j = {{"shap_ranking", ranking},
                    {"tree_vs_permutation_pearson", ex.pearson},
                    {"permutation_importance", imp},
                    {"lime",
                     {{"time", c.explain.lime_instance},
                      {"surrogate_r2", ex.lime.surrogate_r2},
                      {"features", ex.lime.features},
                      {"contributions", ex.lime.contributions}}}};
    emit(g, "explanations.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_report(const GlobalOptions& g) {
  auto c = resolve_config(g);
  const auto bundle = report::run_pipeline(c);
  const auto files = report::write_bundle(bundle, c.output_dir);
  std::cerr << "wrote " << files.size() << " files to " << c.output_dir << "\n";
  const auto& gm = bundle.model("gbt");
  const auto& sm = bundle.model("sarima");
  std::printf("gbt    RMSE %.3f  MAPE %.3f%%\n", gm.point.rmse, gm.point.mape);
  std::printf("sarima RMSE %.3f  MAPE %.3f%%\n", sm.point.rmse, sm.point.mape);
  std::printf("DM statistic %.4f  p %.4f\n", bundle.evaluation.dm.statistic, bundle.evaluation.dm.p_value);
  std::printf("top SHAP feature %s\n", bundle.explanations.tree_ranking.front().feature.c_str());
  return kOk;
}

int cmd_selftest(std::size_t instances, std::uint64_t seed) {
  const auto r = selftest::run(instances, seed);
  std::printf("treeshap vs enumeration      %zu instances  max err %.3e (tol 1e-9)\n", r.shap.instances,
              r.shap.max_tree_error);
  std::printf("permutation shap (m=2000)    max err %.3e (tol 0.02)\n", r.shap.max_permutation_error);
  std::printf("local accuracy               max gap %.3e (tol 1e-6)\n", r.shap.max_local_gap);
  std::printf("diebold-mariano reference    max err %.3e (tol 1e-9)\n", r.dm_error);
  std::printf("lime linear recovery         max err %.3e (tol 1e-6)\n",
              std::max(r.lime.max_coefficient_error, r.lime.intercept_error));
  std::printf("%s\n", r.passed() ? "selftest passed" : "selftest FAILED");
  return r.passed() ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable time-series forecasting: GBT, SARIMA, SHAP, LIME"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "JSON pipeline configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--format", g.format, "table format")->check(CLI::IsMember({"json", "csv"}));

  int max_lag = 24;
  auto* stats = app.add_subcommand("stats", "descriptive statistics and lag correlations");
  stats->add_option("--max-lag", max_lag, "largest lag")->check(CLI::Range(1, 120));
  auto* featurize = app.add_subcommand("featurize", "write the supervised feature matrix");
  auto* train = app.add_subcommand("train", "fit GBT and SARIMA on the training period");
  auto* fc = app.add_subcommand("forecast", "hold-out forecasts");
  auto* expl = app.add_subcommand("explain", "SHAP, LIME and permutation importance");
  auto* eval = app.add_subcommand("evaluate", "metrics, bootstrap intervals and the DM test");
  auto* rep = app.add_subcommand("report", "full pipeline: bundle, tables, figures");
  std::size_t instances = 100;
  std::uint64_t st_seed = 20240611;
  auto* st = app.add_subcommand("selftest", "brute-force oracle checks");
  st->add_option("--instances", instances, "random ensembles")->check(CLI::Range(1, 100000));
  st->add_option("--oracle-seed", st_seed, "seed of the random ensembles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*stats) return cmd_stats(g, max_lag);
    if (*featurize) return cmd_featurize(g);
    if (*train) return cmd_train(g);
    if (*fc) return cmd_forecast(g);
    if (*expl) return cmd_explain(g);
    if (*eval) return cmd_evaluate(g);
    if (*rep) return cmd_report(g);
    if (*st) return cmd_selftest(instances, st_seed);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
