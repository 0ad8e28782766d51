#pragma once

// Episodes cut from the plant history, the train/test loop around the PPO
// learner and the scenario comparisons against the conventional controller.

#include <array>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wwps/agent.hpp"
#include "wwps/config.hpp"
#include "wwps/emulator.hpp"
#include "wwps/features.hpp"
#include "wwps/forecast.hpp"

namespace wwps::harness {

using emulator::ForecastBlock;
using synth::PumpFlags;
using synth::PumpVector;

struct EpisodeStep {
  double intake_m3h = 0.0;
  PumpFlags online{};
  double level_m = 0.0;  // recorded
  PumpVector setpoints_kw{};
  ForecastBlock forecast{};
  ForecastBlock perfect{};  // observed future intake in all three quantile rows
};

struct Episode {
  std::size_t id = 0;
  std::size_t start_index = 0;  // grid index of the first step
  Timestamp start{};
  std::vector<EpisodeStep> steps;

  std::size_t size() const { return steps.size(); }
  double initial_level_m() const { return steps.front().level_m; }
};

struct EpisodeSets {
  std::vector<Episode> train;
  std::vector<Episode> test;
};

// Reduces a fitted quantile model set to the three levels the agent sees.
forecast::ModelSet block_model(const forecast::ModelSet& set);

// Forecast block per grid index of the series; nullopt where launch inputs are missing.
std::vector<std::optional<ForecastBlock>> forecast_blocks(const forecast::ModelSet& set,
                                                          const features::UniformSeries& series,
                                                          const ForecastConfig& cfg);

// Gap-free runs of records with forecasts, cut into near-equal pieces of at
// most max_steps (0: no cap); runs shorter than cfg.min_episode_steps are
// dropped. The first train_fraction of the episodes, in time order, are for training.
EpisodeSets make_episodes(const features::UniformRecords& records,
                          const std::vector<std::optional<ForecastBlock>>& forecasts, const HarnessConfig& cfg,
                          std::size_t horizons, std::size_t max_steps = 0);

double randomize_initial_level(const HarnessConfig& cfg, std::mt19937_64& rng);

enum class Scenario { kBaseline, kNoForecast, kWithForecast, kPerfect };
std::string_view scenario_name(Scenario s);

// Step function shared by training and evaluation: the learned emulator or the
// ground-truth plant.
struct Env {
  const emulator::Emulator* emu = nullptr;  // null selects the plant
  PlantConfig plant{};
  emulator::RewardConfig reward{};

  emulator::Transition step(const emulator::EnvState& s, const PumpVector& action_kw, double c1, double c2) const;
};

struct StepTrace {
  double level_m = 0.0;  // after the step
  double intake_m3h = 0.0;
  double outflow_m3h = 0.0;
  double power_kw = 0.0;
  double cumulative_mwh = 0.0;
  bool alarm = false;
};

struct EpisodeResult {
  std::size_t episode = 0;
  std::size_t steps = 0;
  std::size_t crossings = 0;
  std::size_t occurrences = 0;  // steps ending above the alarm level
  std::size_t early_alarms = 0;  // occurrences within the first two steps
  double energy_mwh = 0.0;
  double level_sum = 0.0;
  double level_sq_sum = 0.0;
  double reward_sum = 0.0;  // unscaled
  std::vector<StepTrace> trace;
};

// Deterministic rollout from the recorded initial level. The policy is unused
// for the baseline scenario.
EpisodeResult run_episode(const Episode& ep, const Env& env, Scenario scenario, const agent::Policy* policy,
                          double c1, double c2, std::size_t max_steps = 0, bool keep_trace = false);

struct Metrics {
  double crossings = 0.0;
  double occurrences = 0.0;
  double early_alarms = 0.0;
  double energy_mwh = 0.0;
  double level_mean_m = 0.0;
  double level_std_m = 0.0;
  double mean_reward = 0.0;

  nlohmann::json to_json() const;
};
Metrics aggregate(const std::vector<EpisodeResult>& results);

struct ScenarioReport {
  Scenario scenario = Scenario::kBaseline;
  double c1 = 1.0;
  double c2 = 0.4;
  Metrics median;  // over the evaluated checkpoints
  Metrics q25;
  Metrics q75;
  std::vector<std::size_t> checkpoints;  // iterations evaluated; empty for the baseline
  std::vector<EpisodeResult> episodes;   // latest checkpoint

  nlohmann::json to_json() const;
};

struct LogRow {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  std::size_t alarms = 0;
  double energy_mwh = 0.0;
  double train_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  std::size_t skipped = 0;
};

struct TrainOptions {
  bool mask_forecast = false;
  double c1 = 1.0;
  double c2 = 0.4;
  std::filesystem::path out_dir;  // checkpoints/, train_log.csv, resume.json
  bool resume = false;
  std::size_t stop_after = 0;  // halt early at this iteration; the schedule still spans ppo.iterations
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<std::size_t> checkpoints;
  bool diverged = false;
};

// Iterations of: collect timesteps_per_update transitions with the stochastic
// policy from random episodes and initial levels, one PPO update, then a
// deterministic pass over the fixed test subset for the log.
TrainResult train(const Env& env, const EpisodeSets& episodes, const RunConfig& cfg, const TrainOptions& opt,
                  std::uint64_t seed);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::size_t iteration);
struct Checkpoint {
  std::size_t iteration = 0;
  bool mask_forecast = false;
  double c1 = 1.0;
  double c2 = 0.4;
  agent::Policy policy;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Iterations of the checkpoints present in out_dir, ascending.
std::vector<std::size_t> list_checkpoints(const std::filesystem::path& out_dir);
// The trailing fraction of a checkpoint list, at least one.
std::vector<std::size_t> trailing(const std::vector<std::size_t>& iterations, double fraction);

ScenarioReport evaluate_baseline(const Env& env, const std::vector<Episode>& test, double c1, double c2);
ScenarioReport evaluate_policy(const Env& env, const std::vector<Episode>& test, Scenario scenario,
                               const std::filesystem::path& run_dir, const std::vector<std::size_t>& iterations,
                               std::size_t workers);

// Baseline plus the three learned scenarios. The perfect-forecast scenario runs
// the with-forecast agent on observed future intake.
std::vector<ScenarioReport> evaluate_scenarios(const Env& env, const std::vector<Episode>& test,
                                               const std::filesystem::path& with_forecast_dir,
                                               const std::filesystem::path& no_forecast_dir,
                                               double trailing_fraction, std::size_t workers);

void write_log_csv(const std::vector<LogRow>& log, const std::filesystem::path& path);
// Summary table: one row per report with improvement percentages against the first (baseline) row.
void write_reports_csv(const std::vector<ScenarioReport>& reports, const std::filesystem::path& path);
// Step-level level and cumulative energy traces of every episode.
void write_traces_csv(const std::vector<ScenarioReport>& reports, const std::filesystem::path& path);

}  // namespace wwps::harness
