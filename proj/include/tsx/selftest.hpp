#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tsx/common.hpp"
#include "tsx/eval_stats.hpp"
#include "tsx/explain.hpp"
#include "tsx/gbt.hpp"
#include "tsx/shapley_oracle.hpp"

namespace tsx::selftest {

/// Random tree over p features. Each internal node splits with probability
/// 0.8 below the root; thresholds and inputs live in [0, 1).
inline gbt::Tree random_tree(Rng& rng, std::size_t p, int max_depth) {
  gbt::Tree t;
  struct Pending {
    std::size_t node;
    int depth;
  };
  t.nodes.emplace_back();
  std::vector<Pending> stack{{0, 0}};
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const bool split = cur.depth < max_depth && (cur.depth == 0 || rng.uniform() < 0.8);
    if (!split) {
      t.nodes[cur.node].value = rng.uniform(-1.0, 1.0);
      continue;
    }
    auto& n = t.nodes[cur.node];
    n.feature = static_cast<int>(rng.index(p));
    n.threshold = rng.uniform();
    n.left = static_cast<int>(t.nodes.size());
    n.right = n.left + 1;
    t.nodes.emplace_back();
    t.nodes.emplace_back();
    stack.push_back({static_cast<std::size_t>(t.nodes[cur.node].right), cur.depth + 1});
    stack.push_back({static_cast<std::size_t>(t.nodes[cur.node].left), cur.depth + 1});
  }
  return t;
}

inline gbt::GbtModel random_ensemble(Rng& rng, std::size_t p, int max_depth, std::size_t n_trees) {
  gbt::GbtModel m;
  m.base_score = rng.uniform(-1.0, 1.0);
  m.learning_rate = 0.1;
  for (std::size_t j = 0; j < p; ++j) m.columns.push_back("x" + std::to_string(j));
  for (std::size_t k = 0; k < n_trees; ++k) m.trees.push_back(random_tree(rng, p, max_depth));
  return m;
}

/// Random point; about one coordinate in ten is placed exactly on a split
/// threshold of the ensemble to exercise ties.
inline std::vector<double> random_point(Rng& rng, const gbt::GbtModel& m) {
  std::vector<double> x(m.n_features());
  for (auto& v : x) v = rng.uniform();
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf() && rng.uniform() < 0.1) x[static_cast<std::size_t>(n.feature)] = n.threshold;
  return x;
}

struct ShapOracleResult {
  std::size_t instances = 0;
  double max_tree_error = 0.0;         // TreeSHAP vs enumeration, max-norm
  double max_permutation_error = 0.0;  // permutation SHAP vs enumeration, max-norm
  double max_local_gap = 0.0;
};

/// Compares TreeSHAP and permutation SHAP with brute-force Shapley values on
/// random ensembles (p <= 8, depth <= 3, one background row).
inline ShapOracleResult shap_oracle_suite(std::size_t n_instances, std::uint64_t seed, int m_permutations = 2000) {
  ShapOracleResult r;
  for (std::size_t i = 0; i < n_instances; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t p = 2 + rng.index(7);
    const int depth = 1 + static_cast<int>(rng.index(3));
    const std::size_t n_trees = 1 + rng.index(5);
    const auto model = random_ensemble(rng, p, depth, n_trees);
    const auto x = random_point(rng, model);
    const auto b = random_point(rng, model);
    const auto bg = explain::Background::explicit_rows({b});
    const auto exact = oracle::interventional_shapley([&](std::span<const double> z) { return model.predict(z); }, x, b);
    const auto tree = explain::tree_shap(model, x, bg);
    const auto perm =
        explain::permutation_shap(explain::predictor_of(model), x, bg, m_permutations, derive_seed(seed, i, 1));
    for (std::size_t j = 0; j < p; ++j) {
      r.max_tree_error = std::max(r.max_tree_error, std::abs(tree.phi[j] - exact[j]));
      r.max_permutation_error = std::max(r.max_permutation_error, std::abs(perm.phi[j] - exact[j]));
    }
    r.max_local_gap = std::max({r.max_local_gap, tree.local_accuracy_gap(), perm.local_accuracy_gap()});
    ++r.instances;
  }
  return r;
}

/// Fixed loss differential with hand-checked DM values.
inline const std::vector<double>& dm_reference_differential() {
  static const std::vector<double> d = {1.5, -0.3, 2.2, 0.7, -1.1, 0.4, 1.9, -0.6};
  return d;
}

struct DmReference {
  int horizon;
  double statistic;     // with small-sample correction
  double p_two_sided;   // Student-t, n-1 degrees of freedom
  double p_one_sided;
};

inline constexpr DmReference kDmReference[] = {
    {1, 1.373303208561993, 0.2120275020677908, 0.1060137510338954},
    {2, 2.2862479256337855, 0.056117024618710154, 0.028058512309355077},
};

inline double dm_oracle_error() {
  double err = 0.0;
  for (const auto& ref : kDmReference) {
    const auto two = stats::dm_test_differential(dm_reference_differential(), ref.horizon, true);
    const auto one = stats::dm_test_differential(dm_reference_differential(), ref.horizon, false);
    err = std::max({err, std::abs(two.statistic - ref.statistic), std::abs(two.p_value - ref.p_two_sided),
                    std::abs(one.p_value - ref.p_one_sided)});
  }
  return err;
}

struct LimeRecovery {
  double max_coefficient_error = 0.0;
  double intercept_error = 0.0;
  double r2 = 0.0;
};

/// LIME on an exactly linear black box must return its coefficients.
inline LimeRecovery lime_linear_recovery(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t p = 5, n = 60;
  features::FeatureMatrix train;
  for (std::size_t j = 0; j < p; ++j) train.columns.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    train.times.push_back(series::YearMonth{2000, 1}.plus(static_cast<int>(i)));
    for (std::size_t j = 0; j < p; ++j) train.data.push_back(rng.normal() * static_cast<double>(j + 1) + static_cast<double>(j));
    train.target.push_back(0.0);
  }
  const std::vector<double> beta = {1.5, -2.0, 0.25, 0.0, 3.0};
  const double intercept = 0.7;
  const explain::Predictor f = [&](std::span<const double> x) {
    double s = intercept;
    for (std::size_t j = 0; j < p; ++j) s += beta[j] * x[j];
    return s;
  };
  const auto sd = features::fit_standardizer(train);
  const auto ex = explain::lime_explain(f, train.row(7), train, sd, {2000, 0.75, derive_seed(seed, 1), 1e-10});
  LimeRecovery r;
  for (std::size_t j = 0; j < p; ++j)
    r.max_coefficient_error = std::max(r.max_coefficient_error, std::abs(ex.coefficients[j] - beta[j]));
  r.intercept_error = std::abs(ex.intercept - intercept);
  r.r2 = ex.surrogate_r2;
  return r;
}

struct Report {
  ShapOracleResult shap;
  double dm_error = 0.0;
  LimeRecovery lime;

  bool passed() const {
    return shap.max_tree_error <= 1e-9 && shap.max_permutation_error <= 0.02 && shap.max_local_gap < 1e-6 &&
           dm_error <= 1e-9 && lime.max_coefficient_error <= 1e-6 && lime.intercept_error <= 1e-6;
  }
};

inline Report run(std::size_t n_instances = 100, std::uint64_t seed = 20240611) {
  return {shap_oracle_suite(n_instances, seed), dm_oracle_error(), lime_linear_recovery(seed)};
}

}  // namespace tsx::selftest
