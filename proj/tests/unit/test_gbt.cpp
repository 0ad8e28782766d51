#include <doctest.h>

#include <random>

#include "wwps/error.hpp"
#include "wwps/gbt.hpp"
#include "wwps/isotonic.hpp"
#include "wwps/model_io.hpp"

using namespace wwps;

TEST_CASE("type 7 quantile") {
  CHECK(gbt::quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(gbt::quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(gbt::quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(gbt::quantile({10, 20}, 0.25) == doctest::Approx(12.5));
}

TEST_CASE("squared loss recovers a step") {
  Matrix x(400, 2);
  std::vector<double> y;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < 400; ++i) {
    x.at(i, 0) = u(rng);
    x.at(i, 1) = u(rng);
    y.push_back(x.at(i, 0) > 0.5 ? 10.0 : 0.0);
  }
  GbtParams hp{100, 2, 0.3, 5, 32};
  const auto ens = gbt::fit(gbt::BinnedMatrix(x, hp.max_bins), y, hp, gbt::Loss::kSquared);
  std::array<double, 2> lo{0.2, 0.5}, hi{0.8, 0.5};
  CHECK(ens.predict(lo) == doctest::Approx(0.0).epsilon(0.05).scale(10));
  CHECK(ens.predict(hi) == doctest::Approx(10.0).epsilon(0.05));
  const auto back = gbt::Ensemble::from_json(ens.to_json());
  CHECK(back.predict(hi) == ens.predict(hi));
}

TEST_CASE("quantile loss covers alpha") {
  Matrix x(4000, 1);
  std::vector<double> y;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t i = 0; i < 4000; ++i) {
    x.at(i, 0) = static_cast<double>(i % 10);
    y.push_back(x.at(i, 0) + g(rng));
  }
  GbtParams hp{200, 2, 0.1, 20, 16};
  const gbt::BinnedMatrix bx(x, hp.max_bins);
  for (double alpha : {0.1, 0.5, 0.9}) {
    const auto ens = gbt::fit(bx, y, hp, gbt::Loss::kQuantile, alpha);
    std::size_t below = 0;
    for (std::size_t i = 0; i < 4000; ++i) below += y[i] <= ens.predict(x.row(i)) ? 1 : 0;
    CHECK(static_cast<double>(below) / 4000.0 == doctest::Approx(alpha).epsilon(0.03).scale(1));
  }
}

TEST_CASE("binning caps at 256 and keeps order") {
  Matrix x(1000, 1);
  for (std::size_t i = 0; i < 1000; ++i) x.at(i, 0) = static_cast<double>(i);
  const gbt::BinnedMatrix b(x, 256);
  CHECK(b.bin_count(0) <= 256);
  for (std::size_t i = 1; i < 1000; ++i) CHECK(b.bin(i, 0) >= b.bin(i - 1, 0));
}

TEST_CASE("isotonic regression") {
  CHECK(isotonic_increasing(std::vector<double>{3, 1, 2}) == std::vector<double>{2, 2, 2});
  CHECK(isotonic_increasing(std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
  const auto w = isotonic_increasing(std::vector<double>{1, 3, 2, 4}, std::vector<double>{1, 1, 3, 1});
  CHECK(w[1] == doctest::Approx(2.25));
  CHECK(w[2] == doctest::Approx(2.25));
}

TEST_CASE("sealed documents") {
  const nlohmann::json payload = {{"a", 1}, {"b", {1.5, 2.5}}};
  const auto doc = seal(payload, "thing");
  CHECK(doc.at("schema_version") == kSchemaVersion);
  CHECK(unseal(doc, "thing") == payload);
  auto bad = doc;
  bad["payload"]["a"] = 2;
  CHECK_THROWS_AS(unseal(bad, "thing"), ChecksumError);
  CHECK_THROWS_AS(unseal(doc, "other"), SchemaMismatchError);
  auto old = doc;
  old["schema_version"] = 0;
  CHECK_THROWS_AS(unseal(old, "thing"), Error);
}
