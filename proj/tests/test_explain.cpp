#include <gtest/gtest.h>

#include <cmath>

#include "tsx/airpassengers.hpp"
#include "tsx/correlation.hpp"
#include "tsx/explain.hpp"
#include "tsx/selftest.hpp"
#include "tsx/shapley_oracle.hpp"

using namespace tsx;
using explain::Attribution;
using explain::Background;
using features::FeatureMatrix;

namespace {

gbt::Tree stump(int feature, double threshold, double lo, double hi) {
  gbt::Tree t;
  t.nodes.resize(3);
  t.nodes[0].feature = feature;
  t.nodes[0].threshold = threshold;
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[1].value = lo;
  t.nodes[2].value = hi;
  return t;
}

gbt::GbtModel model_of(std::vector<gbt::Tree> trees, std::size_t p, double lr = 1.0) {
  gbt::GbtModel m;
  m.learning_rate = lr;
  for (std::size_t j = 0; j < p; ++j) m.columns.push_back("x" + std::to_string(j));
  m.trees = std::move(trees);
  return m;
}

FeatureMatrix uniform_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix fm;
  for (std::size_t j = 0; j < p; ++j) fm.columns.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    fm.times.push_back(series::YearMonth{2000, 1}.plus(static_cast<int>(i)));
    for (std::size_t j = 0; j < p; ++j) fm.data.push_back(rng.uniform());
    fm.target.push_back(0.0);
  }
  return fm;
}

struct Fixture {
  FeatureMatrix train, test;
  gbt::GbtModel model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    auto split = features::chronological_split(
        features::build_feature_matrix(data::air_passengers(), features::FeatureSpec{}), 24);
    out.train = std::move(split.first);
    out.test = std::move(split.second);
    gbt::GbtHyperParams hp;
    hp.n_trees = 150;
    hp.seed = 42;
    out.model = gbt::fit_gbt(out.train, hp);
    return out;
  }();
  return f;
}

}  // namespace

TEST(PermutationShap, LinearModelIsExact) {
  const std::vector<double> w = {2.0, -1.0, 0.5};
  const explain::Predictor f = [&](std::span<const double> x) { return w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + 4.0; };
  const std::vector<double> x = {1.0, 2.0, 3.0};
  const auto bg = Background::explicit_rows({{0.5, 0.5, 0.5}});
  const auto a = explain::permutation_shap(f, x, bg, 10, 1);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.phi[j], w[j] * (x[j] - 0.5), 1e-12);
  EXPECT_LT(a.local_accuracy_gap(), 1e-12);
}

TEST(PermutationShap, InstanceEqualToBaseline) {
  const explain::Predictor f = [](std::span<const double> x) { return x[0] * x[1] + std::sin(x[2]); };
  const std::vector<double> x = {0.3, 0.7, 1.1};
  const auto a = explain::permutation_shap(f, x, Background::explicit_rows({x}), 50, 3);
  for (double v : a.phi) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.baseline_value, a.prediction);
}

TEST(PermutationShap, MatchesEnumerationOnInteraction) {
  const explain::Predictor f = [](std::span<const double> x) { return x[0] * x[1] + x[2] * x[2] * x[0]; };
  const std::vector<double> x = {1.0, 2.0, -1.0}, b = {0.0, 0.5, 0.25};
  const auto exact = oracle::interventional_shapley(f, x, b);
  const auto a = explain::permutation_shap(f, x, Background::explicit_rows({b}), 4000, 9);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.phi[j], exact[j], 0.02);
}

TEST(PermutationShap, Validation) {
  const explain::Predictor f = [](std::span<const double> x) { return x[0]; };
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_THROW(explain::permutation_shap(f, x, Background::explicit_rows({{1.0}}), 5, 1), ValidationError);
  EXPECT_THROW(explain::permutation_shap(f, x, Background::explicit_rows({{1.0, 2.0}}), 0, 1), ValidationError);
  EXPECT_THROW(explain::permutation_shap(f, x, Background{}, 5, 1), ValidationError);
}

TEST(TreeShap, StumpAttributesEverythingToSplitFeature) {
  const auto m = model_of({stump(0, 0.5, -1.0, 3.0)}, 2);
  const std::vector<double> x = {0.9, 0.1}, b = {0.1, 0.9};
  const auto a = explain::tree_shap(m, x, Background::explicit_rows({b}));
  EXPECT_DOUBLE_EQ(a.phi[0], 4.0);
  EXPECT_DOUBLE_EQ(a.phi[1], 0.0);
  EXPECT_DOUBLE_EQ(a.baseline_value, -1.0);
  EXPECT_DOUBLE_EQ(a.prediction, 3.0);
}

TEST(TreeShap, MatchesEnumerationOnRandomEnsembles) {
  const auto r = selftest::shap_oracle_suite(120, 77, 200);
  EXPECT_EQ(r.instances, 120u);
  EXPECT_LE(r.max_tree_error, 1e-9);
  EXPECT_LT(r.max_local_gap, 1e-6);
}

TEST(TreeShap, MultiRowBackgroundAveragesPairs) {
  Rng rng(5);
  const auto m = selftest::random_ensemble(rng, 4, 3, 4);
  const auto x = selftest::random_point(rng, m);
  const std::vector<std::vector<double>> rows = {selftest::random_point(rng, m), selftest::random_point(rng, m),
                                                 selftest::random_point(rng, m)};
  const auto a = explain::tree_shap(m, x, Background::explicit_rows(rows));
  const auto f = [&](std::span<const double> z) { return m.predict(z); };
  std::vector<double> expected(4, 0.0);
  for (const auto& b : rows) {
    const auto e = oracle::interventional_shapley(f, x, b);
    for (std::size_t j = 0; j < 4; ++j) expected[j] += e[j] / 3.0;
  }
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.phi[j], expected[j], 1e-12);
  EXPECT_LT(a.local_accuracy_gap(), 1e-12);
}

TEST(TreeShap, DummyFeatureGetsZero) {
  Rng rng(6);
  auto m = selftest::random_ensemble(rng, 3, 3, 5);
  m.columns.push_back("unused");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x = selftest::random_point(rng, m), b = selftest::random_point(rng, m);
    x[3] = rng.uniform();
    b[3] = rng.uniform();
    EXPECT_EQ(explain::tree_shap(m, x, Background::explicit_rows({b})).phi[3], 0.0);
  }
}

TEST(TreeShap, SymmetricFeaturesShareCredit) {
  const auto m = model_of({stump(0, 0.5, 0.0, 1.0), stump(1, 0.5, 0.0, 1.0)}, 2, 0.5);
  const std::vector<double> x = {0.8, 0.8}, b = {0.2, 0.2};
  const auto a = explain::tree_shap(m, x, Background::explicit_rows({b}));
  EXPECT_DOUBLE_EQ(a.phi[0], a.phi[1]);
  EXPECT_DOUBLE_EQ(a.phi[0] + a.phi[1], 1.0);
}

TEST(TreeShap, AdditiveAcrossEnsembles) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = selftest::random_ensemble(rng, 5, 3, 3);
    const auto b = selftest::random_ensemble(rng, 5, 3, 2);
    auto ab = a;
    ab.trees.insert(ab.trees.end(), b.trees.begin(), b.trees.end());
    const auto x = selftest::random_point(rng, ab);
    const auto bg = Background::explicit_rows({selftest::random_point(rng, ab)});
    const auto pa = explain::tree_shap(a, x, bg), pb = explain::tree_shap(b, x, bg), pab = explain::tree_shap(ab, x, bg);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(pab.phi[j], pa.phi[j] + pb.phi[j], 1e-12);
  }
}

TEST(TreeShap, DimensionMismatch) {
  const auto m = model_of({stump(0, 0.5, 0.0, 1.0)}, 2);
  const std::vector<double> x = {0.1};
  EXPECT_THROW(explain::tree_shap(m, x, Background::explicit_rows({{0.0, 0.0}})), ValidationError);
}

TEST(TreeShap, FixtureAgreesWithPermutationShap) {
  const auto& f = fixture();
  const auto bg = Background::global_mean(f.train);
  std::vector<double> t, p;
  for (std::size_t i = 0; i < f.test.rows(); i += 4) {
    const auto a = explain::tree_shap(f.model, f.test.row(i), bg);
    const auto b = explain::permutation_shap(explain::predictor_of(f.model), f.test.row(i), bg, 200, i);
    EXPECT_LT(a.local_accuracy_gap(), 1e-8);
    EXPECT_LT(b.local_accuracy_gap(), 1e-8);
    t.insert(t.end(), a.phi.begin(), a.phi.end());
    p.insert(p.end(), b.phi.begin(), b.phi.end());
  }
  EXPECT_GT(stats::pearson(t, p), 0.95);
}

TEST(GlobalSummary, RanksByMeanAbsolutePhi) {
  Attribution a, b;
  a.features = b.features = {"a", "b", "c"};
  a.phi = {1.0, -3.0, 0.0};
  b.phi = {-1.0, 1.0, 2.0};
  const std::vector<Attribution> attrs = {a, b};
  const auto s = explain::shap_global_summary(attrs);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].feature, "b");
  EXPECT_DOUBLE_EQ(s[0].value, 2.0);
  // tie at 1.0 broken by name
  EXPECT_EQ(s[1].feature, "a");
  EXPECT_EQ(s[2].feature, "c");
}

TEST(GlobalSummary, Errors) {
  EXPECT_THROW(explain::shap_global_summary(std::vector<Attribution>{}), ValidationError);
  Attribution a, b;
  a.features = {"a"};
  a.phi = {1.0};
  b.features = {"b"};
  b.phi = {1.0};
  EXPECT_THROW(explain::shap_global_summary(std::vector<Attribution>{a, b}), ValidationError);
}

TEST(Dependence, EmptyAndColourColumn) {
  auto fm = uniform_matrix(4, 2, 1);
  EXPECT_TRUE(explain::dependence_data({}, fm, "x0", "x1").empty());
  EXPECT_THROW(explain::dependence_data({}, fm, "nope", "x1"), ValidationError);
  std::vector<Attribution> attrs(4);
  for (std::size_t i = 0; i < 4; ++i) {
    attrs[i].features = fm.columns;
    attrs[i].phi = {static_cast<double>(i), 0.0};
  }
  const auto pts = explain::dependence_data(attrs, fm, "x0", "x0");
  ASSERT_EQ(pts.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(pts[i].color, pts[i].value);
    EXPECT_EQ(pts[i].phi, static_cast<double>(i));
    EXPECT_EQ(pts[i].time, fm.times[i]);
  }
  attrs.pop_back();
  EXPECT_THROW(explain::dependence_data(attrs, fm, "x0", "x1"), ValidationError);
}

TEST(Lime, RecoversLinearModel) {
  const auto r = selftest::lime_linear_recovery(31);
  EXPECT_LE(r.max_coefficient_error, 1e-6);
  EXPECT_LE(r.intercept_error, 1e-6);
  EXPECT_NEAR(r.r2, 1.0, 1e-9);
}

TEST(Lime, ConstantModel) {
  const auto train = uniform_matrix(30, 3, 2);
  const auto sd = features::fit_standardizer(train);
  const explain::Predictor f = [](std::span<const double>) { return 3.0; };
  const auto ex = explain::lime_explain(f, train.row(0), train, sd, {500, 0.75, 4, 1e-8});
  for (double c : ex.coefficients) EXPECT_NEAR(c, 0.0, 1e-9);
  EXPECT_NEAR(ex.intercept, 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(ex.surrogate_r2, 1.0);
}

TEST(Lime, ContributionsUseStandardizedInstance) {
  const auto train = uniform_matrix(40, 2, 3);
  const auto sd = features::fit_standardizer(train);
  const explain::Predictor f = [](std::span<const double> x) { return 5.0 * x[0] - x[1]; };
  const auto ex = explain::lime_explain(f, train.row(3), train, sd, {1000, 1.0, 5, 1e-8});
  const auto z = sd.apply(train.row(3));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_DOUBLE_EQ(ex.contributions[j], ex.scaled_coefficients[j] * z[j]);
    EXPECT_NEAR(ex.coefficients[j] * sd.scales[j], ex.scaled_coefficients[j], 1e-12);
  }
  EXPECT_EQ(ex.top_feature(), 0u);
  EXPECT_EQ(ex.top_positive_feature(), 0u);
}

TEST(Lime, Validation) {
  const auto train = uniform_matrix(10, 2, 4);
  const auto sd = features::fit_standardizer(train);
  const explain::Predictor f = [](std::span<const double> x) { return x[0]; };
  EXPECT_THROW(explain::lime_explain(f, train.row(0), train, sd, {100, 0.0, 1, 1e-8}), ValidationError);
  EXPECT_THROW(explain::lime_explain(f, train.row(0), train, sd, {1, 0.75, 1, 1e-8}), ValidationError);
  const std::vector<double> short_row = {1.0};
  EXPECT_THROW(explain::lime_explain(f, short_row, train, sd), ValidationError);
}

TEST(Lime, DeterministicForSeed) {
  const auto& f = fixture();
  const auto sd = features::fit_standardizer(f.train);
  const auto pred = explain::predictor_of(f.model);
  const auto a = explain::lime_explain(pred, f.test.row(6), f.train, sd, {800, 0.75, 12, 1e-8});
  const auto b = explain::lime_explain(pred, f.test.row(6), f.train, sd, {800, 0.75, 12, 1e-8});
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.surrogate_r2, b.surrogate_r2);
}

TEST(KernelSweep, SingleFactorAgreesWithItself) {
  const auto& f = fixture();
  const auto sd = features::fit_standardizer(f.train);
  const std::vector<double> factors = {0.75};
  const auto sw =
      explain::kernel_width_sweep(explain::predictor_of(f.model), f.test, f.train, sd, factors, 300, 5);
  ASSERT_EQ(sw.entries.size(), 1u);
  EXPECT_EQ(sw.entries[0].r2.size(), f.test.rows());
  EXPECT_DOUBLE_EQ(sw.top_feature_agreement, 1.0);
  for (double r : sw.entries[0].r2) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
  EXPECT_THROW(explain::kernel_width_sweep(explain::predictor_of(f.model), f.test, f.train, sd, {}, 300, 5),
               ValidationError);
}

TEST(PermutationImportance, UnusedFeatureIsZero) {
  auto fm = uniform_matrix(50, 3, 7);
  for (std::size_t i = 0; i < fm.rows(); ++i) fm.target[i] = 2.0 * fm.at(i, 0);
  const explain::Predictor perfect = [](std::span<const double> x) { return 2.0 * x[0]; };
  const auto imp = explain::permutation_importance(perfect, fm, 5, 11);
  ASSERT_EQ(imp.size(), 3u);
  EXPECT_EQ(imp[0].feature, "x0");
  EXPECT_GT(imp[0].mean_increase, 0.0);
  for (std::size_t k = 1; k < 3; ++k) {
    EXPECT_EQ(imp[k].mean_increase, 0.0);
    EXPECT_EQ(imp[k].std_dev, 0.0);
  }
}

TEST(PermutationImportance, Validation) {
  auto fm = uniform_matrix(1, 2, 7);
  const explain::Predictor f = [](std::span<const double> x) { return x[0]; };
  EXPECT_THROW(explain::permutation_importance(f, fm, 5, 1), ValidationError);
  fm = uniform_matrix(5, 2, 7);
  EXPECT_THROW(explain::permutation_importance(f, fm, 0, 1), ValidationError);
}

TEST(SeasonalBackground, FixtureJuly) {
  const auto& f = fixture();
  const auto bg = explain::seasonal_background(f.train, 7);
  EXPECT_EQ(bg.rows.size(), 9u);
  EXPECT_EQ(bg.mode, explain::BackgroundMode::seasonal_month_mean);
  EXPECT_THROW(explain::seasonal_background(f.train, 13), ValidationError);
  EXPECT_THROW(explain::seasonal_background(f.train, 0), ValidationError);
}

TEST(SeasonalBackground, MissingMonth) {
  FeatureMatrix fm = uniform_matrix(3, 1, 1);  // Jan..Mar
  EXPECT_EQ(explain::seasonal_background(fm, 2).rows.size(), 1u);
  EXPECT_THROW(explain::seasonal_background(fm, 8), ValidationError);
  // falls back to the global mean when the month is absent
  const auto bg = explain::background_for(fm, explain::BackgroundMode::seasonal_month_mean, {2001, 8});
  EXPECT_EQ(bg.mode, explain::BackgroundMode::global_mean);
}

TEST(BackgroundMode, Names) {
  for (auto m : {explain::BackgroundMode::global_mean, explain::BackgroundMode::seasonal_month_mean,
                 explain::BackgroundMode::explicit_rows})
    EXPECT_EQ(explain::background_mode_from_string(explain::to_string(m)), m);
  EXPECT_EQ(explain::background_mode_from_string("seasonal"), explain::BackgroundMode::seasonal_month_mean);
  EXPECT_THROW(explain::background_mode_from_string("median"), ValidationError);
}

TEST(Stability, FullLengthBlocksReproduceTheSample) {
  const auto& f = fixture();
  gbt::GbtHyperParams hp;
  hp.n_trees = 30;
  hp.seed = 1;
  const explain::ModelFactory factory = [&](const FeatureMatrix& tr) { return gbt::fit_gbt(tr, hp); };
  explain::StabilityOptions opt;
  opt.n_bootstrap = 3;
  opt.block_length = f.train.rows();
  const auto r = explain::explanation_stability(factory, f.train, f.test, opt);
  EXPECT_EQ(r.pairwise.size(), 3u);
  EXPECT_DOUBLE_EQ(r.mean_spearman, 1.0);
}

TEST(Stability, TwoBootstrapsGiveOnePair) {
  const auto& f = fixture();
  gbt::GbtHyperParams hp;
  hp.n_trees = 30;
  const explain::ModelFactory factory = [&](const FeatureMatrix& tr) { return gbt::fit_gbt(tr, hp); };
  explain::StabilityOptions opt;
  opt.n_bootstrap = 2;
  opt.background = explain::BackgroundMode::seasonal_month_mean;
  const auto r = explain::explanation_stability(factory, f.train, f.test, opt);
  ASSERT_EQ(r.pairwise.size(), 1u);
  EXPECT_EQ(r.mean_spearman, r.pairwise[0]);
  EXPECT_GE(r.mean_spearman, -1.0);
  EXPECT_LE(r.mean_spearman, 1.0);
  opt.n_bootstrap = 1;
  EXPECT_THROW(explain::explanation_stability(factory, f.train, f.test, opt), ValidationError);
}

TEST(RankAgreement, ConstantVectors) {
  const std::vector<double> c = {1.0, 1.0, 1.0}, v = {1.0, 2.0, 3.0};
  EXPECT_EQ(explain::rank_agreement(c, c), 1.0);
  EXPECT_EQ(explain::rank_agreement(c, v), 0.0);
  EXPECT_DOUBLE_EQ(explain::rank_agreement(v, v), 1.0);
}
