#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "wwps/error.hpp"
#include "wwps/synth.hpp"

using namespace wwps;
using namespace wwps::synth;

namespace {

Simulation small_run(std::uint64_t seed, std::size_t days = 3) {
  RunConfig cfg;
  auto in = generate_intake(cfg.plant, cfg.intake, days, seed);
  auto av = generate_availability(cfg.intake, in.size(), seed);
  BaselineController bc(cfg.plant);
  return simulate_plant(in, av, bc.as_controller(), cfg.plant, 6.0);
}

}  // namespace

TEST_CASE("pump curve shape") {
  PlantConfig p;
  CHECK(ground_truth_outflow(0.0, 5.0, p) == 0.0);
  // balance pumps at rated power carry the maximum intake at the set-point
  CHECK(ground_truth_outflow(p.balance_pumps * p.rated_power_kw, p.setpoint_m, p) ==
        doctest::Approx(p.intake_max_m3h));
  double prev = 0.0;
  for (double kw = 10; kw <= 550; kw += 10) {
    const double q = ground_truth_outflow(kw, 6.0, p);
    CHECK(q > prev);
    prev = q;
    CHECK(ground_truth_outflow(kw, 7.0, p) > q);
    CHECK(ground_truth_power(q, 6.0, p) == doctest::Approx(kw).epsilon(1e-9));
  }
  CHECK_THROWS_AS(ground_truth_outflow(-1.0, 5.0, p), DomainError);
}

TEST_CASE("mass balance step") {
  PlantConfig p;
  // 1000 m3/h net over 2 minutes into 1000 m2 raises the level by 1/30 m
  CHECK(mass_balance_step(5.0, 3000.0, 2000.0, p) == doctest::Approx(5.0 + 1.0 / 30.0));
  bool clipped = false;
  CHECK(mass_balance_step(0.01, 0.0, 5000.0, p, &clipped) == 0.0);
  CHECK(clipped);
  CHECK(mass_balance_step(7.99, 14000.0, 0.0, p, &clipped) == p.tank_max_m);
  CHECK(clipped);
}

TEST_CASE("closure over clip-free windows") {
  RunConfig cfg;
  const auto sim = small_run(11);
  const double dt = cfg.plant.step_hours();
  double worst = 0.0;
  std::size_t start = 0;
  while (start + 1 < sim.records.size()) {
    std::size_t end = start;
    double net = 0.0;
    while (end + 1 < sim.records.size() && !sim.clipped[end]) {
      net += (sim.records[end].intake_m3h - sim.records[end].outflow_m3h) * dt / cfg.plant.tank_area_m2;
      ++end;
    }
    if (end > start) {
      const double dh = sim.records[end].level_m - sim.records[start].level_m;
      worst = std::max(worst, std::abs(dh - net) / std::max(1.0, std::abs(net)));
    }
    start = end + 1;
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("intake generation is seeded and bounded") {
  RunConfig cfg;
  auto a = generate_intake(cfg.plant, cfg.intake, 2, 5);
  auto b = generate_intake(cfg.plant, cfg.intake, 2, 5);
  auto c = generate_intake(cfg.plant, cfg.intake, 2, 6);
  CHECK(a.size() == 2 * 720);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  a.validate();
  for (double v : a.values) {
    CHECK(v >= cfg.plant.intake_min_m3h);
    CHECK(v <= cfg.plant.intake_max_m3h);
  }
  CHECK_THROWS_AS(generate_intake(cfg.plant, cfg.intake, 0, 5), ValidationError);
}

TEST_CASE("availability keeps three pumps") {
  RunConfig cfg;
  cfg.intake.outage_rate_per_day = 5.0;
  for (const auto& f : generate_availability(cfg.intake, 5000, 3)) {
    int on = 0;
    for (bool b : f) on += b ? 1 : 0;
    CHECK(on >= 3);
  }
}

TEST_CASE("baseline controller holds the set-point") {
  const auto sim = small_run(2, 4);
  double s = 0.0;
  for (const auto& r : sim.records) {
    s += r.level_m;
    for (std::size_t i = 0; i < kPumps; ++i) {
      if (!r.online[i]) CHECK(r.power_kw[i] == 0.0);
    }
  }
  const double mean = s / static_cast<double>(sim.records.size());
  CHECK(mean > 5.8);
  CHECK(mean < 6.2);
}

TEST_CASE("irregular sampling follows the interval mix") {
  RunConfig cfg;
  const auto sim = small_run(4, 10);
  const auto irr = irregularize(sim.records, cfg.plant, cfg.intake, 4);
  const auto h = interval_histogram(irr);
  CHECK(h[0] == doctest::Approx(0.689).epsilon(0.05));
  CHECK(h[1] == doctest::Approx(0.161).epsilon(0.15));
  for (std::size_t i = 1; i < irr.size(); ++i) CHECK(irr[i].timestamp > irr[i - 1].timestamp);
  CHECK(irregularize(sim.records, cfg.plant, cfg.intake, 4) == irr);
}

TEST_CASE("csv round trip") {
  RunConfig cfg;
  const auto sim = small_run(8, 1);
  const auto path = std::filesystem::temp_directory_path() / "wwps_synth_rt.csv";
  write_csv(sim.records, path);
  const auto back = read_csv(path, cfg.plant);
  REQUIRE(back.size() == sim.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == quantize(sim.records[i]));
  std::filesystem::remove(path);
}
