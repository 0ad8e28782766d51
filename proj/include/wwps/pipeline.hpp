#pragma once

// The workbench stages on a run directory:
//   data/      plant_2min.csv (uniform ground truth), scada.csv (irregular records)
//   models/    forecast_<family>.json, emulator_outflow.json, emulator_level.json
//   runs/<name>/  checkpoints, train_log.csv, resume.json
//   reports/   metric tables and scenario reports
// Every stage reads only files written by earlier stages.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wwps/config.hpp"
#include "wwps/emulator.hpp"
#include "wwps/forecast.hpp"
#include "wwps/harness.hpp"

namespace wwps::pipeline {

namespace fs = std::filesystem;

struct Layout {
  fs::path root;

  fs::path data() const { return root / "data"; }
  fs::path models() const { return root / "models"; }
  fs::path runs() const { return root / "runs"; }
  fs::path reports() const { return root / "reports"; }
  fs::path scada_csv() const { return data() / "scada.csv"; }
  fs::path plant_csv() const { return data() / "plant_2min.csv"; }
  fs::path forecast_model(forecast::Family f) const;
  fs::path outflow_model() const { return models() / "emulator_outflow.json"; }
  fs::path level_model() const { return models() / "emulator_level.json"; }
  fs::path run(const std::string& name) const { return runs() / name; }
};

// Exclusive writer lock on the run directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const fs::path& root);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

// manifest_<command>.json: seed, config hash, the config itself and the files written.
void write_manifest(const Layout& layout, const std::string& command, const RunConfig& cfg,
                    const std::vector<fs::path>& outputs);

std::vector<fs::path> run_synth(const RunConfig& cfg, const Layout& layout);
std::vector<synth::RawRecord> load_scada(const RunConfig& cfg, const Layout& layout);
features::UniformSeries intake_series(const RunConfig& cfg, const std::vector<synth::RawRecord>& records);

constexpr forecast::Family kFamilies[] = {forecast::Family::kLqr, forecast::Family::kGbt,
                                          forecast::Family::kPersistence, forecast::Family::kCondByHour};

std::vector<fs::path> fit_forecasts(const RunConfig& cfg, const Layout& layout, std::size_t workers);

struct ForecastReport {
  std::vector<forecast::Evaluation> evaluations;  // kFamilies order
  std::vector<forecast::AblationRow> ablation;
  std::vector<double> alphas;

  const forecast::Evaluation& of(forecast::Family f) const;
};
// Writes reports/forecast_metrics.csv, forecast_calibration.csv, forecast_ablation.csv.
ForecastReport eval_forecasts(const RunConfig& cfg, const Layout& layout, std::size_t workers);

// Writes the two emulator models and reports/emulator_fit.json.
emulator::FitReport fit_emulator(const RunConfig& cfg, const Layout& layout);

// Fitted emulator, GBT forecast blocks and the episode split.
struct Workbench {
  emulator::Emulator emu;
  harness::EpisodeSets episodes;
  harness::Env env;       // training environment (emulator)
  harness::Env eval_env;  // per harness.evaluation_env
};
Workbench load_workbench(const RunConfig& cfg, const Layout& layout);

struct RunSpec {
  std::string name;
  bool mask_forecast = false;
  double c1 = 1.0;
  double c2 = 0.4;
};
// The two runs behind the scenario comparison: with and without forecasts, config weights.
std::vector<RunSpec> scenario_runs(const RunConfig& cfg);
// The trade-off pair: alarm-weighted and energy-weighted, both with forecasts.
std::vector<RunSpec> tradeoff_runs(const RunConfig& cfg);

// Trains every run (independent runs spread over workers). Runs with a
// resume.json continue from it.
std::vector<harness::TrainResult> train_runs(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                             const std::vector<RunSpec>& runs, std::size_t workers);

// Four scenario reports; writes reports/scenarios.json, scenarios.csv, traces.csv.
std::vector<harness::ScenarioReport> evaluate(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                              std::size_t workers);

// Baseline plus one with-forecast report per trade-off run; writes reports/tradeoff.json, tradeoff.csv.
std::vector<harness::ScenarioReport> tradeoff(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                              std::size_t workers);

// Short training run against the ground-truth plant; a smoke test of the loop.
struct CalibrationResult {
  std::size_t iterations = 0;
  bool finite = true;
  double first_reward = 0.0;
  double last_reward = 0.0;
};
CalibrationResult calibrate(const RunConfig& cfg, const Layout& layout, const Workbench& wb);

}  // namespace wwps::pipeline
