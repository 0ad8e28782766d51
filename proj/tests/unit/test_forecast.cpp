#include <doctest.h>

#include <cmath>
#include <random>

#include "wwps/error.hpp"
#include "wwps/forecast.hpp"

using namespace wwps;
using namespace wwps::forecast;

namespace {

QuantileForecast fc(std::vector<double> v) {
  QuantileForecast f;
  f.values = std::move(v);
  return f;
}

}  // namespace

TEST_CASE("pinball loss") {
  CHECK(pinball(10.0, 8.0, 0.9) == doctest::Approx(1.8));
  CHECK(pinball(10.0, 12.0, 0.9) == doctest::Approx(0.2));
  CHECK(pinball(5.0, 5.0, 0.3) == 0.0);
}

TEST_CASE("crps is twice the mean pinball") {
  const std::vector<double> alphas = {0.25, 0.5, 0.75};
  const std::vector<QuantileForecast> f = {fc({1, 2, 3}), fc({4, 5, 7})};
  const std::vector<double> y = {2.5, 3.0};
  double sum = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) sum += pinball(y[i], f[i].values[j], alphas[j]);
  CHECK(metric_crps(f, y, alphas) == doctest::Approx(2.0 * sum / 6.0));
  // median error
  CHECK(metric_mae(f, y, alphas) == doctest::Approx((0.5 + 2.0) / 2.0));
}

TEST_CASE("calibration and sharpness") {
  const std::vector<double> alphas = {0.25, 0.5, 0.75};
  const std::vector<QuantileForecast> f = {fc({1, 2, 3}), fc({1, 2, 5}), fc({1, 2, 3}), fc({1, 2, 3})};
  const std::vector<double> y = {0.0, 1.5, 2.5, 4.0};
  const auto cal = metric_calibration(f, y, alphas);
  CHECK(cal[0] == doctest::Approx(0.25 - 0.25));
  CHECK(cal[1] == doctest::Approx(0.5 - 0.5));
  CHECK(cal[2] == doctest::Approx(0.75 - 0.75));
  const auto sh = metric_sharpness(f, y, alphas);
  REQUIRE(sh.size() == 1);
  CHECK(sh[0] == doctest::Approx((2 + 4 + 2 + 2) / 4.0));
}

TEST_CASE("crossing repair sorts") {
  std::vector<double> v = {3, 1, 2};
  repair_crossings(v);
  CHECK(v == std::vector<double>{1, 2, 3});
}

TEST_CASE("linear quantile regression recovers a line") {
  FeatureTable t;
  t.horizon = 1;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t i = 0; i < 3000; ++i) {
    features::FeatureRow r;
    for (auto& l : r.lags) l = g(rng);
    r.lag24h = g(rng);
    r.target = 100.0 + 3.0 * r.lags[0] + g(rng) * 0.01;
    t.launch.push_back(i);
    t.rows.push_back(r);
  }
  ForecastConfig cfg;
  const ColumnSet cols = {features::kLag1};
  const auto m = fit_lqr(t, 0.5, cfg, cols);
  auto x = t.rows[0].to_array();
  x[features::kLag1] = 2.0;
  CHECK(m.predict(x) == doctest::Approx(106.0).epsilon(1e-3));
  const auto back = LinearQuantileModel::from_json(m.to_json());
  CHECK(back.predict(x) == m.predict(x));
  // upper quantile sits above the median
  const auto hi = fit_lqr(t, 0.9, cfg, cols);
  CHECK(hi.predict(x) > m.predict(x));
}

TEST_CASE("too few rows") {
  FeatureTable t;
  t.rows.resize(10);
  t.launch.resize(10);
  CHECK_THROWS_AS(fit_gbt_quantile(t, 0.5, GbtParams{}, 500), InsufficientDataError);
}

TEST_CASE("persistence repeats the last value") {
  UniformSeries s;
  s.values = {1, 2, 3, 4};
  const auto p = persistence(s, 3, 5);
  CHECK(p == std::vector<double>(5, 4.0));
}

TEST_CASE("hourly climatology") {
  UniformSeries s;
  s.start = make_time(2014, 1, 6);
  for (std::size_t i = 0; i < 720 * 8; ++i) {
    const int hour = static_cast<int>((i * 2 / 60) % 24);
    s.values.push_back(hour * 100.0);
  }
  const std::vector<double> a = {0.1, 0.5, 0.9};
  const auto cb = cond_by_hour(s, a);
  const auto f = cb.forecast(make_time(2014, 2, 1, 7, 30));
  CHECK(f == std::vector<double>(3, 700.0));
  const auto back = CondByHour::from_json(cb.to_json());
  CHECK(back.forecast(make_time(2014, 2, 1, 7, 30)) == f);
}

TEST_CASE("family names") {
  for (auto f : {Family::kLqr, Family::kGbt, Family::kPersistence, Family::kCondByHour})
    CHECK(parse_family(family_name(f)) == f);
  CHECK_THROWS(parse_family("nope"));
}
