#include <gtest/gtest.h>

#include <cmath>

#include "tsx/airpassengers.hpp"
#include "tsx/sarima.hpp"

using namespace tsx;
using arima::ArimaParams;
using arima::ArimaSpec;
using series::TimeSeries;

namespace {

ArimaSpec plain(int p, int d, int q) {
  ArimaSpec s;
  s.p = p;
  s.d = d;
  s.q = q;
  s.P = s.D = s.Q = 0;
  s.use_log = false;
  return s;
}

TimeSeries wrap(std::vector<double> v) {
  TimeSeries ts;
  ts.start = {1900, 1};
  ts.values = std::move(v);
  return ts;
}

std::vector<double> simulate_ar(std::vector<double> phi, std::size_t n, std::uint64_t seed, double mean = 10.0) {
  Rng rng(seed);
  std::vector<double> x(n + 200, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double v = rng.normal();
    for (std::size_t k = 0; k < phi.size(); ++k)
      if (t > k) v += phi[k] * x[t - k - 1];
    x[t] = v;
  }
  std::vector<double> out(x.end() - static_cast<std::ptrdiff_t>(n), x.end());
  for (double& v : out) v += mean;
  return out;
}

double mape(std::span<const double> y, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs((y[i] - f[i]) / y[i]);
  return 100.0 * s / static_cast<double>(y.size());
}

}  // namespace

TEST(ArimaSpec, Validation) {
  ArimaSpec s;
  s.p = 6;
  EXPECT_THROW(s.validate(), ValidationError);
  s = {};
  s.s = 0;
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_NO_THROW(ArimaSpec{}.validate());
  EXPECT_EQ(ArimaSpec{}.label(), "(2,1,2)(0,1,0)_12 log");
}

TEST(ArimaParams, PackRoundTrip) {
  ArimaSpec s;
  s.P = 1;
  s.Q = 1;
  const std::vector<double> v = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const auto prm = ArimaParams::unpack(v, s);
  EXPECT_EQ(prm.phi, (std::vector<double>{0.2, 0.3}));
  EXPECT_EQ(prm.theta, (std::vector<double>{0.4, 0.5}));
  EXPECT_EQ(prm.seasonal_phi, (std::vector<double>{0.6}));
  EXPECT_EQ(prm.seasonal_theta, (std::vector<double>{0.7}));
  EXPECT_EQ(prm.pack(), v);
  EXPECT_THROW(ArimaParams::unpack(std::vector<double>{1.0}, s), ValidationError);
}

TEST(Polynomials, SeasonalExpansion) {
  ArimaParams prm;
  prm.phi = {0.5};
  prm.seasonal_phi = {0.2};
  const auto poly = arima::expand(prm, 4);
  const std::vector<double> expected = {1.0, -0.5, 0.0, 0.0, -0.2, 0.1};
  ASSERT_EQ(poly.ar.size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(poly.ar[k], expected[k], 1e-15);
  EXPECT_EQ(poly.ma, (std::vector<double>{1.0}));
}

TEST(CssLoss, WhiteNoiseIsSumOfSquares) {
  const std::vector<double> w = {1.0, -2.0, 0.5, 3.0};
  ArimaParams prm;
  prm.intercept = 0.5;
  EXPECT_DOUBLE_EQ(arima::css_loss(prm, w, plain(0, 0, 0)), 0.25 + 6.25 + 0.0 + 6.25);
}

TEST(CssLoss, MinimizedNearTrueAr1) {
  const auto x = simulate_ar({0.6}, 600, 3, 0.0);
  const auto spec = plain(1, 0, 0);
  double best_phi = 0.0, best = INFINITY;
  for (int i = -95; i <= 95; ++i) {
    ArimaParams prm;
    prm.phi = {i / 100.0};
    const double l = arima::css_loss(prm, x, spec);
    if (l < best) best = l, best_phi = i / 100.0;
  }
  EXPECT_NEAR(best_phi, 0.6, 0.05);
}

TEST(CssLoss, ZeroThetaReducesToPureAr) {
  const auto x = simulate_ar({0.4, 0.2}, 200, 5, 0.0);
  ArimaParams ar;
  ar.intercept = 0.1;
  ar.phi = {0.4, 0.2};
  ArimaParams arma = ar;
  arma.theta = {0.0, 0.0};
  EXPECT_EQ(arima::css_loss(ar, x, plain(2, 0, 0)), arima::css_loss(arma, x, plain(2, 0, 2)));
}

TEST(CssLoss, DivergenceGivesInfinity) {
  std::vector<double> w(400, 1.0);
  ArimaParams prm;
  prm.theta = {1.5};
  EXPECT_TRUE(std::isinf(arima::css_loss(prm, w, plain(0, 0, 1))));
}

TEST(CssLoss, SeasonalOrderCommutes) {
  Rng rng(17);
  const auto x = simulate_ar({0.3}, 240, 7, 0.0);
  ArimaSpec spec = plain(2, 0, 1);
  spec.P = 1;
  spec.Q = 1;
  for (int trial = 0; trial < 200; ++trial) {
    ArimaParams prm;
    prm.intercept = rng.uniform(-0.5, 0.5);
    prm.phi = {rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)};
    prm.theta = {rng.uniform(-0.5, 0.5)};
    prm.seasonal_phi = {rng.uniform(-0.5, 0.5)};
    prm.seasonal_theta = {rng.uniform(-0.5, 0.5)};
    const double a = arima::css_loss(prm, x, spec, false);
    const double b = arima::css_loss(prm, x, spec, true);
    if (std::isinf(a)) {
      EXPECT_TRUE(std::isinf(b));
      continue;
    }
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
  }
}

TEST(NelderMead, Rosenbrock) {
  auto f = [](std::span<const double> v) {
    return 100.0 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1.0 - v[0], 2);
  };
  const std::vector<double> steps = {0.1, 0.1};
  const auto r = arima::nelder_mead(f, {-1.2, 1.0}, steps);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
}

TEST(FitSarima, WhiteNoiseClosedForm) {
  Rng rng(8);
  std::vector<double> v(300);
  for (double& x : v) x = 5.0 + 2.0 * rng.normal();
  const auto m = arima::fit_sarima(wrap(v), plain(0, 0, 0));
  const double mu = tsx::mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  EXPECT_NEAR(m.params.intercept, mu, 1e-5);
  EXPECT_NEAR(m.sigma2, ss / 300.0, 1e-8 * ss);
  EXPECT_GT(m.sigma2, 0.0);
  EXPECT_EQ(m.n_eff, 300u);
}

TEST(FitSarima, RecoversAr2) {
  const auto x = simulate_ar({0.5, -0.3}, 2000, 21);
  const auto m = arima::fit_sarima(wrap(x), plain(2, 0, 0), {5, 1, {}, {}});
  ASSERT_EQ(m.params.phi.size(), 2u);
  EXPECT_NEAR(m.params.phi[0], 0.5, 0.05);
  EXPECT_NEAR(m.params.phi[1], -0.3, 0.05);
  EXPECT_TRUE(m.converged);
}

TEST(FitSarima, FixtureConverges) {
  const auto train = data::air_passengers().slice(0, 120);
  const auto m = arima::fit_sarima(train, ArimaSpec{}, {5, 42, {}, {}});
  EXPECT_TRUE(m.converged);
  EXPECT_TRUE(std::isfinite(m.aic));
  EXPECT_GT(m.sigma2, 0.0);
  EXPECT_EQ(m.n_eff, 120u - 13u);
  EXPECT_EQ(m.params.phi.size(), 2u);
  EXPECT_EQ(m.params.theta.size(), 2u);
  EXPECT_TRUE(m.warnings.empty());
}

TEST(FitSarima, ShortSeriesWarns) {
  const auto m = arima::fit_sarima(wrap(simulate_ar({0.5}, 30, 2)), plain(1, 0, 1));
  EXPECT_FALSE(m.warnings.empty());
}

TEST(FitSarima, DegenerateInput) {
  EXPECT_THROW(arima::fit_sarima(wrap(std::vector<double>(50, 3.0)), plain(1, 0, 0)), DataError);
  auto logged = wrap(std::vector<double>(50, 3.0));
  logged.log_space = true;
  EXPECT_THROW(arima::fit_sarima(logged, plain(1, 0, 0)), ValidationError);
}

TEST(FitSarima, NestedModelCssNeverWorse) {
  const auto x = simulate_ar({0.6, -0.2}, 300, 9);
  const auto small = arima::fit_sarima(wrap(x), plain(1, 0, 0));
  arima::FitOptions opt;
  opt.start = std::vector<double>{small.params.intercept, small.params.phi[0], 0.0};
  const auto big = arima::fit_sarima(wrap(x), plain(2, 0, 0), opt);
  EXPECT_LE(big.css, small.css + 1e-6);
  EXPECT_LE(big.aic, small.aic + 2.0 + 1e-6);
}

TEST(Forecast, WhiteNoiseIsFlat) {
  Rng rng(4);
  std::vector<double> v(120);
  for (double& x : v) x = 50.0 + rng.normal();
  const auto m = arima::fit_sarima(wrap(v), plain(0, 0, 0));
  for (double f : arima::forecast(m, 12)) EXPECT_DOUBLE_EQ(f, m.params.intercept);
}

TEST(Forecast, WhiteNoiseOnLogScaleBackTransforms) {
  Rng rng(6);
  std::vector<double> v(120);
  for (double& x : v) x = 50.0 * std::exp(0.05 * rng.normal());
  auto spec = plain(0, 0, 0);
  spec.use_log = true;
  const auto m = arima::fit_sarima(wrap(v), spec);
  for (double f : arima::forecast(m, 6)) EXPECT_DOUBLE_EQ(f, std::exp(m.params.intercept));
}

TEST(Forecast, RandomWalkRepeatsLastValue) {
  std::vector<double> v;
  for (int i = 0; i < 41; ++i) v.push_back(i % 2 ? 7.0 : 5.0);
  const auto m = arima::fit_sarima(wrap(v), plain(0, 1, 0));
  EXPECT_NEAR(m.params.intercept, 0.0, 1e-6);
  for (double f : arima::forecast(m, 10)) EXPECT_NEAR(f, 5.0, 1e-5);
}

TEST(Forecast, HorizonMustBePositive) {
  const auto m = arima::fit_sarima(wrap(simulate_ar({0.5}, 100, 1)), plain(1, 0, 0));
  EXPECT_THROW(arima::forecast(m, 0), ValidationError);
}

// Reference: statsmodels SARIMAX(2,1,2)x(0,1,0,12), CSS, log scale, 1949-1958,
// 24-step forecast scored on 1959-1960 gives MAPE 13.8%.
TEST(Forecast, FixtureHorizon24MatchesReferenceFit) {
  const auto full = data::air_passengers();
  const auto m = arima::fit_sarima(full.slice(0, 120), ArimaSpec{}, {5, 42, {}, {}});
  const auto f = arima::forecast(m, 24);
  ASSERT_EQ(f.size(), 24u);
  const std::span<const double> actual(full.values.data() + 120, 24);
  const double err = mape(actual, f);
  EXPECT_NEAR(err, 13.8, 1.5);
  for (double v : f) EXPECT_GT(v, 0.0);
}

TEST(OneStepAhead, FixtureHoldOut) {
  const auto full = data::air_passengers();
  const auto m = arima::fit_sarima(full.slice(0, 120), ArimaSpec{}, {5, 42, {}, {}});
  const auto f = arima::one_step_ahead(m, full, 120);
  ASSERT_EQ(f.size(), 24u);
  EXPECT_LE(mape(std::span<const double>(full.values.data() + 120, 24), f), 10.0);
}

TEST(OneStepAhead, ReconstructsSeriesWithResiduals) {
  const auto train = data::air_passengers().slice(0, 120);
  const auto m = arima::fit_sarima(train, ArimaSpec{}, {5, 42, {}, {}});
  const std::size_t loss = 13;
  const auto fitted = arima::one_step_ahead(m, train, loss);
  ASSERT_EQ(fitted.size(), m.residuals.size());
  for (std::size_t i = 0; i < fitted.size(); ++i)
    EXPECT_NEAR(std::log(fitted[i]) + m.residuals[i], std::log(train.values[loss + i]), 1e-8);
}

TEST(OneStepAhead, UsesOnlyPastObservations) {
  const auto full = data::air_passengers();
  const auto m = arima::fit_sarima(full.slice(0, 120), ArimaSpec{}, {5, 42, {}, {}});
  const auto ref = arima::one_step_ahead(m, full, 120);
  auto bumped = full;
  bumped.values[130] *= 2.0;
  const auto f = arima::one_step_ahead(m, bumped, 120);
  for (std::size_t i = 0; i <= 10; ++i) EXPECT_EQ(f[i], ref[i]);
  EXPECT_NE(f[11], ref[11]);
}

TEST(OneStepAhead, RangeChecks) {
  const auto full = data::air_passengers();
  const auto m = arima::fit_sarima(full.slice(0, 120), ArimaSpec{}, {1, 42, {}, {}});
  EXPECT_THROW(arima::one_step_ahead(m, full, 5), ValidationError);
  EXPECT_THROW(arima::one_step_ahead(m, full, 144), ValidationError);
  EXPECT_THROW(arima::one_step_ahead(m, full.slice(1, 144), 20), ValidationError);
}

TEST(SelectOrder, PrefersTrueAr1) {
  const auto x = simulate_ar({0.8}, 500, 13);
  const std::vector<ArimaSpec> cands = {plain(0, 0, 1), plain(1, 0, 0)};
  const auto sel = arima::select_order(wrap(x), cands);
  ASSERT_EQ(sel.ranked.size(), 2u);
  EXPECT_EQ(sel.ranked.front().spec, plain(1, 0, 0));
  EXPECT_LE(sel.ranked[0].model.aic, sel.ranked[1].model.aic);
}

TEST(SelectOrder, SingleCandidate) {
  const std::vector<ArimaSpec> cands = {plain(1, 0, 0)};
  const auto sel = arima::select_order(wrap(simulate_ar({0.5}, 100, 2)), cands);
  ASSERT_EQ(sel.ranked.size(), 1u);
  EXPECT_EQ(sel.ranked[0].spec, cands[0]);
  EXPECT_TRUE(sel.skipped.empty());
}

TEST(SelectOrder, AllFail) {
  const std::vector<ArimaSpec> cands = {plain(1, 0, 0), plain(0, 0, 1)};
  try {
    arima::select_order(wrap(std::vector<double>(40, 1.0)), cands);
    FAIL() << "expected an error";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1,0,0)"), std::string::npos);
    EXPECT_NE(msg.find("(0,0,1)"), std::string::npos);
  }
  EXPECT_THROW(arima::select_order(wrap({1, 2, 3}), std::vector<ArimaSpec>{}), ValidationError);
}

TEST(SelectOrder, SkipsFailingCandidates) {
  auto bad = plain(0, 0, 0);
  bad.use_log = true;
  std::vector<double> x = simulate_ar({0.5}, 200, 3, 0.0);
  const std::vector<ArimaSpec> cands = {bad, plain(1, 0, 0)};
  const auto sel = arima::select_order(wrap(x), cands);
  EXPECT_EQ(sel.ranked.size(), 1u);
  ASSERT_EQ(sel.skipped.size(), 1u);
  EXPECT_FALSE(sel.skipped[0].reason.empty());
}

TEST(Serialization, SpecRoundTrip) {
  ArimaSpec s;
  s.P = 1;
  s.use_log = false;
  EXPECT_EQ(arima::spec_from_json(arima::to_json(s)), s);
  EXPECT_THROW(arima::spec_from_json(nlohmann::json{{"p", 9}}), ValidationError);
}
