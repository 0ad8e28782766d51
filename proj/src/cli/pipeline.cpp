#include "wwps/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>

#include "wwps/error.hpp"
#include "wwps/features.hpp"
#include "wwps/model_io.hpp"
#include "wwps/parallel.hpp"
#include "wwps/synth.hpp"

namespace wwps::pipeline {

fs::path Layout::forecast_model(forecast::Family f) const {
  return models() / ("forecast_" + std::string(forecast::family_name(f)) + ".json");
}

RunLock::RunLock(const fs::path& root) : path_(root / ".lock") {
  fs::create_directories(root);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw IoError("run directory is locked by another writer: " + path_.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void write_manifest(const Layout& layout, const std::string& command, const RunConfig& cfg,
                    const std::vector<fs::path>& outputs) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& p : outputs) files.push_back(fs::relative(p, layout.root).generic_string());
  const nlohmann::json doc = {{"command", command},
                              {"seed", cfg.seed},
                              {"config_hash", config_hash(cfg)},
                              {"schema_version", kSchemaVersion},
                              {"outputs", files},
                              {"config", to_json(cfg)}};
  write_json(layout.root / ("manifest_" + command + ".json"), doc);
}

// ---------------------------------------------------------------- data

std::vector<fs::path> run_synth(const RunConfig& cfg, const Layout& layout) {
  cfg.validate();
  const auto intake = synth::generate_intake(cfg.plant, cfg.intake, cfg.days, cfg.seed);
  const auto avail = synth::generate_availability(cfg.intake, intake.size(), cfg.seed);
  synth::BaselineController bc(cfg.plant);
  const auto sim = synth::simulate_plant(intake, avail, bc.as_controller(), cfg.plant, cfg.plant.setpoint_m);
  const auto scada = synth::irregularize(sim.records, cfg.plant, cfg.intake, cfg.seed);
  fs::create_directories(layout.data());
  synth::write_csv(sim.records, layout.plant_csv());
  synth::write_csv(scada, layout.scada_csv());
  return {layout.plant_csv(), layout.scada_csv()};
}

std::vector<synth::RawRecord> load_scada(const RunConfig& cfg, const Layout& layout) {
  if (!fs::exists(layout.scada_csv())) throw IoError("missing dataset " + layout.scada_csv().string() + "; run synth first");
  return synth::read_csv(layout.scada_csv(), cfg.plant);
}

features::UniformSeries intake_series(const RunConfig& cfg, const std::vector<synth::RawRecord>& records) {
  return features::resample_uniform(features::intake_of(records), cfg.forecast.fill_limit_minutes);
}

// ---------------------------------------------------------------- forecasts

std::vector<fs::path> fit_forecasts(const RunConfig& cfg, const Layout& layout, std::size_t workers) {
  const auto series = intake_series(cfg, load_scada(cfg, layout));
  const auto split = forecast::split_tables(series, cfg.forecast);
  fs::create_directories(layout.models());
  std::vector<fs::path> out;
  for (const auto fam : kFamilies) {
    const auto set = forecast::fit_model_set(fam, split, series, cfg.forecast, cfg.seed, workers);
    set.save(layout.forecast_model(fam));
    out.push_back(layout.forecast_model(fam));
  }
  return out;
}

const forecast::Evaluation& ForecastReport::of(forecast::Family f) const {
  for (const auto& e : evaluations) {
    if (e.family == f) return e;
  }
  throw ValidationError("no evaluation for family " + std::string(forecast::family_name(f)));
}

ForecastReport eval_forecasts(const RunConfig& cfg, const Layout& layout, std::size_t workers) {
  const auto series = intake_series(cfg, load_scada(cfg, layout));
  const auto split = forecast::split_tables(series, cfg.forecast);
  const std::string schema = forecast::feature_schema_hash(cfg.forecast);
  ForecastReport rep;
  rep.alphas = cfg.forecast.quantile_grid();
  for (const auto fam : kFamilies) {
    const auto path = layout.forecast_model(fam);
    if (!fs::exists(path)) throw IoError("missing model " + path.string() + "; run fit-forecast first");
    rep.evaluations.push_back(forecast::evaluate(forecast::ModelSet::load(path, schema), split, series, cfg.forecast));
  }
  rep.ablation = forecast::ablation_study(split, cfg.forecast, workers);
  fs::create_directories(layout.reports());
  forecast::write_evaluation_csv(rep.evaluations, layout.reports() / "forecast_metrics.csv");
  forecast::write_calibration_csv(rep.evaluations, rep.alphas, layout.reports() / "forecast_calibration.csv");
  forecast::write_ablation_csv(rep.ablation, layout.reports() / "forecast_ablation.csv");
  return rep;
}

// ---------------------------------------------------------------- emulator

emulator::FitReport fit_emulator(const RunConfig& cfg, const Layout& layout) {
  const auto records = load_scada(cfg, layout);
  auto [emu, rep] = emulator::fit_emulator(records, cfg.plant, cfg.emulator, cfg.forecast.fill_limit_minutes);
  fs::create_directories(layout.models());
  emu.save(layout.outflow_model(), layout.level_model());
  fs::create_directories(layout.reports());
  write_json(layout.reports() / "emulator_fit.json", rep.to_json());
  return rep;
}

// ---------------------------------------------------------------- control

Workbench load_workbench(const RunConfig& cfg, const Layout& layout) {
  if (!fs::exists(layout.outflow_model()) || !fs::exists(layout.level_model())) {
    throw IoError("missing emulator models in " + layout.models().string() + "; run fit-emulator first");
  }
  const auto gbt_path = layout.forecast_model(forecast::Family::kGbt);
  if (!fs::exists(gbt_path)) throw IoError("missing model " + gbt_path.string() + "; run fit-forecast first");
  const auto records = load_scada(cfg, layout);
  const auto series = intake_series(cfg, records);
  const auto set = forecast::ModelSet::load(gbt_path, forecast::feature_schema_hash(cfg.forecast));
  const auto blocks = harness::forecast_blocks(set, series, cfg.forecast);
  const auto uniform = features::resample_records(records, cfg.plant, cfg.forecast.fill_limit_minutes);

  Workbench wb;
  wb.emu = emulator::Emulator::load(layout.outflow_model(), layout.level_model(), cfg.plant);
  wb.episodes = harness::make_episodes(uniform, blocks, cfg.harness, cfg.forecast.horizons, cfg.harness.max_episode_steps);
  const auto reward = emulator::RewardConfig::from(cfg.ppo, cfg.plant);
  wb.env = harness::Env{&wb.emu, cfg.plant, reward};
  wb.eval_env = cfg.harness.evaluation_env == "plant" ? harness::Env{nullptr, cfg.plant, reward} : wb.env;
  return wb;
}

std::vector<RunSpec> scenario_runs(const RunConfig& cfg) {
  return {{"with_forecast", false, cfg.ppo.c1, cfg.ppo.c2}, {"no_forecast", true, cfg.ppo.c1, cfg.ppo.c2}};
}

std::vector<RunSpec> tradeoff_runs(const RunConfig& cfg) {
  return {{"tradeoff_alarms", false, cfg.harness.alarms_c1, cfg.harness.alarms_c2},
          {"tradeoff_energy", false, cfg.harness.energy_c1, cfg.harness.energy_c2}};
}

namespace {

std::uint64_t run_seed(const RunConfig& cfg, const RunSpec& run) { return cfg.seed ^ fnv1a(run.name); }

// Env pointers inside a Workbench refer to its own emulator; copies re-aim them.
harness::Env rebind(const harness::Env& env, const Workbench& wb) {
  harness::Env e = env;
  if (e.emu != nullptr) e.emu = &wb.emu;
  return e;
}

}  // namespace

std::vector<harness::TrainResult> train_runs(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                             const std::vector<RunSpec>& runs, std::size_t workers) {
  std::vector<harness::TrainResult> out(runs.size());
  const harness::Env env = rebind(wb.env, wb);
  parallel_for(runs.size(), workers, [&](std::size_t i) {
    harness::TrainOptions opt;
    opt.mask_forecast = runs[i].mask_forecast;
    opt.c1 = runs[i].c1;
    opt.c2 = runs[i].c2;
    opt.out_dir = layout.run(runs[i].name);
    opt.resume = fs::exists(opt.out_dir / "resume.json");
    out[i] = harness::train(env, wb.episodes, cfg, opt, run_seed(cfg, runs[i]));
  });
  return out;
}

namespace {

void write_reports(const std::vector<harness::ScenarioReport>& reports, const fs::path& json_path,
                   const fs::path& csv_path) {
  fs::create_directories(json_path.parent_path());
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) doc.push_back(r.to_json());
  write_json(json_path, doc);
  harness::write_reports_csv(reports, csv_path);
}

}  // namespace

std::vector<harness::ScenarioReport> evaluate(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                              std::size_t workers) {
  const auto runs = scenario_runs(cfg);
  const harness::Env env = rebind(wb.eval_env, wb);
  auto reports = harness::evaluate_scenarios(env, wb.episodes.test, layout.run(runs[0].name), layout.run(runs[1].name),
                                             cfg.harness.trailing_fraction, workers);
  write_reports(reports, layout.reports() / "scenarios.json", layout.reports() / "scenarios.csv");
  harness::write_traces_csv(reports, layout.reports() / "traces.csv");
  return reports;
}

std::vector<harness::ScenarioReport> tradeoff(const RunConfig& cfg, const Layout& layout, const Workbench& wb,
                                              std::size_t workers) {
  const harness::Env env = rebind(wb.eval_env, wb);
  std::vector<harness::ScenarioReport> reports;
  reports.push_back(harness::evaluate_baseline(env, wb.episodes.test, cfg.ppo.c1, cfg.ppo.c2));
  for (const auto& run : tradeoff_runs(cfg)) {
    const auto dir = layout.run(run.name);
    const auto its = harness::trailing(harness::list_checkpoints(dir), cfg.harness.trailing_fraction);
    reports.push_back(harness::evaluate_policy(env, wb.episodes.test, harness::Scenario::kWithForecast, dir, its, workers));
  }
  write_reports(reports, layout.reports() / "tradeoff.json", layout.reports() / "tradeoff.csv");
  return reports;
}

CalibrationResult calibrate(const RunConfig& cfg, const Layout& layout, const Workbench& wb) {
  RunConfig c = cfg;
  c.ppo.iterations = cfg.harness.calibration_iterations;
  c.harness.checkpoint_every = 0;
  const harness::Env plant{nullptr, cfg.plant, wb.env.reward};
  harness::TrainOptions opt;
  opt.c1 = cfg.ppo.c1;
  opt.c2 = cfg.ppo.c2;
  opt.out_dir = layout.run("calibration");
  fs::remove_all(opt.out_dir);
  const auto res = harness::train(plant, wb.episodes, c, opt, cfg.seed ^ fnv1a("calibration"));
  CalibrationResult out;
  out.iterations = res.log.size();
  out.finite = !res.diverged;
  for (const auto& r : res.log) out.finite = out.finite && std::isfinite(r.train_reward) && std::isfinite(r.mean_reward);
  if (!res.log.empty()) {
    out.first_reward = res.log.front().train_reward;
    out.last_reward = res.log.back().train_reward;
  }
  return out;
}

}  // namespace wwps::pipeline
