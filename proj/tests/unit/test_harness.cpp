#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "wwps/error.hpp"
#include "wwps/harness.hpp"

using namespace wwps;
using namespace wwps::harness;
namespace fs = std::filesystem;

namespace {

// present[i] false punches a hole into the record grid.
features::UniformRecords grid(const std::vector<bool>& present) {
  features::UniformRecords u;
  u.start = make_time(2014, 1, 6);
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (!present[i]) {
      u.records.emplace_back(std::nullopt);
      continue;
    }
    synth::RawRecord r;
    r.timestamp = u.start + std::chrono::seconds(120 * static_cast<std::int64_t>(i));
    r.intake_m3h = 4000.0 + static_cast<double>(i);
    r.level_m = 6.0;
    r.online = {true, true, true, true, true};
    r.power_kw = {60, 0, 0, 0, 0};
    u.records.emplace_back(r);
  }
  return u;
}

std::vector<std::optional<ForecastBlock>> blocks(std::size_t n) {
  ForecastBlock b;
  b.fill(4500.0);
  return std::vector<std::optional<ForecastBlock>>(n, b);
}

std::vector<bool> runs(std::initializer_list<std::size_t> lengths) {
  std::vector<bool> p;
  for (std::size_t len : lengths) {
    p.insert(p.end(), len, true);
    p.push_back(false);
  }
  return p;
}

}  // namespace

TEST_CASE("episode segmentation") {
  HarnessConfig hc;
  SUBCASE("one long run, uncapped") {
    const auto g = grid(runs({1000}));
    const auto sets = make_episodes(g, blocks(g.records.size()), hc, 20, 0);
    CHECK(sets.train.size() + sets.test.size() == 1);
    CHECK(sets.train.size() == 1);
    CHECK(sets.train[0].size() == 1000);
  }
  SUBCASE("short runs are discarded") {
    const auto g = grid(runs({150, 400, 199, 300}));
    const auto sets = make_episodes(g, blocks(g.records.size()), hc, 20, 0);
    CHECK(sets.train.size() == 1);
    CHECK(sets.test.size() == 1);
    CHECK(sets.train[0].size() == 400);
    CHECK(sets.test[0].size() == 300);
    CHECK(sets.train[0].start_index == 151);
  }
  SUBCASE("ten runs split eight to two in time order") {
    const auto g = grid(runs({250, 250, 250, 250, 250, 250, 250, 250, 250, 250}));
    const auto sets = make_episodes(g, blocks(g.records.size()), hc, 20, 0);
    REQUIRE(sets.train.size() == 8);
    REQUIRE(sets.test.size() == 2);
    CHECK(sets.train.back().start_index < sets.test.front().start_index);
  }
  SUBCASE("cap cuts near-equal pieces") {
    const auto g = grid(runs({1500}));
    const auto sets = make_episodes(g, blocks(g.records.size()), hc, 20, 720);
    REQUIRE(sets.train.size() + sets.test.size() == 3);
    for (const auto& e : sets.train) CHECK(e.size() == 500);
    for (const auto& e : sets.test) CHECK(e.size() == 500);
  }
  SUBCASE("missing forecasts end a run") {
    const auto g = grid(runs({1000}));
    auto b = blocks(g.records.size());
    b[600].reset();
    const auto sets = make_episodes(g, b, hc, 20, 0);
    CHECK(sets.train.size() == 1);
    CHECK(sets.test.size() == 1);
    CHECK(sets.train[0].size() == 600);
    CHECK(sets.test[0].size() == 399);
  }
  SUBCASE("perfect block holds the observed future") {
    const auto g = grid(runs({300}));
    const auto sets = make_episodes(g, blocks(g.records.size()), hc, 20, 0);
    const auto& s = sets.train[0].steps[10];
    for (std::size_t k = 0; k < 20; ++k)
      for (std::size_t q = 0; q < 3; ++q) CHECK(s.perfect[q * 20 + k] == 4000.0 + 11.0 + static_cast<double>(k));
  }
  CHECK_THROWS_AS(make_episodes(grid(runs({100})), blocks(101), hc, 20, 0), InsufficientDataError);
}

TEST_CASE("initial level randomization stays in range") {
  HarnessConfig hc;
  std::mt19937_64 rng(1);
  double lo = 10, hi = -10;
  for (int i = 0; i < 5000; ++i) {
    const double v = randomize_initial_level(hc, rng);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 3.0);
  CHECK(hi <= 7.0);
  CHECK(lo < 3.05);
  CHECK(hi > 6.95);
}

TEST_CASE("episode accounting") {
  const auto g = grid(runs({400}));
  auto sets = make_episodes(g, blocks(g.records.size()), HarnessConfig{}, 20, 0);
  Episode ep = sets.train[0];
  Env env;
  env.reward = emulator::RewardConfig::from(PpoConfig{}, env.plant);
  // start near the alarm level with a heavy intake so alarms occur early
  ep.steps[0].level_m = 7.19;
  for (auto& s : ep.steps) s.intake_m3h = 13000.0;
  const auto r = run_episode(ep, env, Scenario::kBaseline, nullptr, 1.0, 0.4, 0, true);
  REQUIRE(r.trace.size() == r.steps);
  CHECK(r.crossings <= r.occurrences);
  CHECK(r.crossings >= 1);
  CHECK(r.early_alarms >= 1);
  CHECK(r.early_alarms <= 2);
  double e = 0.0;
  for (const auto& t : r.trace) e += t.power_kw * env.plant.step_hours() / 1000.0;
  CHECK(r.energy_mwh == doctest::Approx(e));
  CHECK(r.trace.back().cumulative_mwh == doctest::Approx(r.energy_mwh));
  std::size_t occ = 0;
  for (const auto& t : r.trace) occ += t.level_m > 7.2 ? 1 : 0;
  CHECK(occ == r.occurrences);
  CHECK_THROWS_AS(run_episode(ep, env, Scenario::kWithForecast, nullptr, 1, 0.4), ValidationError);
}

TEST_CASE("deterministic evaluation repeats exactly") {
  const auto g = grid(runs({300}));
  const auto sets = make_episodes(g, blocks(g.records.size()), HarnessConfig{}, 20, 0);
  Env env;
  env.reward = emulator::RewardConfig::from(PpoConfig{}, env.plant);
  PpoConfig pc;
  std::mt19937_64 rng(4);
  const agent::Policy pol(pc, rng);
  const auto a = run_episode(sets.train[0], env, Scenario::kWithForecast, &pol, 1, 0.4, 0, true);
  const auto b = run_episode(sets.train[0], env, Scenario::kWithForecast, &pol, 1, 0.4, 0, true);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].level_m == b.trace[i].level_m);
  CHECK(a.energy_mwh == b.energy_mwh);
}

TEST_CASE("trailing checkpoints") {
  CHECK(trailing({25, 50, 75, 100, 125, 150, 175, 200, 225, 250}, 0.2) == std::vector<std::size_t>{225, 250});
  CHECK(trailing({25}, 0.2) == std::vector<std::size_t>{25});
}

TEST_CASE("training resumes to the same result") {
  const auto g = grid(runs({400, 400, 400}));
  const auto sets = make_episodes(g, blocks(g.records.size()), HarnessConfig{}, 20, 0);
  RunConfig cfg;
  cfg.ppo.iterations = 6;
  cfg.ppo.timesteps_per_update = 100;
  cfg.ppo.batch_size = 50;
  cfg.ppo.hidden = {8, 8};
  cfg.harness.checkpoint_every = 2;
  cfg.harness.test_subset_max_steps = 50;
  Env env;
  env.reward = emulator::RewardConfig::from(cfg.ppo, env.plant);
  const fs::path base = fs::temp_directory_path() / "wwps_resume_test";
  fs::remove_all(base);

  TrainOptions a;
  a.out_dir = base / "a";
  const auto ra = train(env, sets, cfg, a, 5);
  CHECK_FALSE(ra.diverged);
  CHECK(ra.log.size() == 6);
  CHECK(list_checkpoints(a.out_dir) == std::vector<std::size_t>{2, 4, 6});

  TrainOptions b;
  b.out_dir = base / "b";
  b.stop_after = 3;  // stops past the checkpoint at 2; resume restarts from there
  train(env, sets, cfg, b, 5);
  b.stop_after = 0;
  b.resume = true;
  const auto rb = train(env, sets, cfg, b, 5);
  REQUIRE(rb.log.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(rb.log[i].mean_reward == ra.log[i].mean_reward);
  const auto ca = load_checkpoint(checkpoint_path(a.out_dir, 6));
  const auto cb = load_checkpoint(checkpoint_path(b.out_dir, 6));
  CHECK(ca.policy.actor().params() == cb.policy.actor().params());

  TrainOptions c = b;
  c.c2 = 0.9;
  CHECK_THROWS_AS(train(env, sets, cfg, c, 5), ValidationError);
  fs::remove_all(base);
}
