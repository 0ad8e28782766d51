// Command-line front end. Exit codes: 0 ok, 1 invalid input or config,
// 2 runtime failure, 3 a fit or acceptance target was missed.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wwps/error.hpp"
#include "wwps/pipeline.hpp"

using namespace wwps;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "run";
  std::size_t workers = 0;
  std::size_t iterations = 0;
  bool desk_scale = false;

  RunConfig load() const {
    RunConfig cfg = desk_scale ? RunConfig::desk_scale() : RunConfig{};
    if (!config.empty()) {
      const RunConfig file = load_run_config(config);
      cfg = file;
      if (desk_scale) {
        const RunConfig desk = RunConfig::desk_scale();
        cfg.ppo.iterations = desk.ppo.iterations;
        cfg.ppo.learning_rate = desk.ppo.learning_rate;
        cfg.ppo.lr_decay_iterations = desk.ppo.lr_decay_iterations;
        cfg.ppo.gamma = desk.ppo.gamma;
        cfg.days = desk.days;
        cfg.harness.workers = desk.harness.workers;
      }
    }
    if (seed_set) cfg.seed = seed;
    if (iterations > 0) cfg.ppo.iterations = iterations;
    if (workers > 0) cfg.harness.workers = workers;
    cfg.validate();
    return cfg;
  }
};

void print_reports(const std::vector<harness::ScenarioReport>& reports) {
  for (const auto& r : reports) {
    std::printf("%-20s c1=%.2f c2=%.2f crossings=%.1f energy=%.3f MWh level=%.3f m\n",
                std::string(harness::scenario_name(r.scenario)).c_str(), r.c1, r.c2, r.median.crossings,
                r.median.energy_mwh, r.median.level_mean_m);
  }
}

int run_command(const std::string& name, const Common& common) {
  const RunConfig cfg = common.load();
  const pipeline::Layout layout{common.out};
  pipeline::RunLock lock(layout.root);
  const std::size_t workers = cfg.harness.workers;
  std::vector<fs::path> outputs;
  int code = 0;

  if (name == "synth") {
    outputs = pipeline::run_synth(cfg, layout);
  } else if (name == "fit-forecast") {
    outputs = pipeline::fit_forecasts(cfg, layout, workers);
  } else if (name == "eval-forecast") {
    const auto rep = pipeline::eval_forecasts(cfg, layout, workers);
    for (const auto& e : rep.evaluations) {
      std::printf("%-14s crps=%.1f mae=%.1f mae(h>=5)=%.1f\n", std::string(forecast::family_name(e.family)).c_str(),
                  e.mean_crps(), e.mean_mae(), e.mean_mae(5));
    }
    for (const char* f : {"forecast_metrics.csv", "forecast_calibration.csv", "forecast_ablation.csv"}) {
      outputs.push_back(layout.reports() / f);
    }
  } else if (name == "fit-emulator") {
    const auto rep = pipeline::fit_emulator(cfg, layout);
    std::printf("%s\n", rep.to_json().dump(2).c_str());
    outputs = {layout.outflow_model(), layout.level_model(), layout.reports() / "emulator_fit.json"};
    if (!rep.targets_met) code = 3;
  } else if (name == "train") {
    const auto wb = pipeline::load_workbench(cfg, layout);
    const auto runs = pipeline::scenario_runs(cfg);
    const auto results = pipeline::train_runs(cfg, layout, wb, runs, workers);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& log = results[i].log;
      std::printf("%s: %zu iterations, %zu checkpoints%s", runs[i].name.c_str(), log.size(),
                  results[i].checkpoints.size(), results[i].diverged ? ", diverged" : "");
      if (!log.empty()) std::printf(", last test reward %.3f", log.back().mean_reward);
      std::printf("\n");
      outputs.push_back(layout.run(runs[i].name) / "train_log.csv");
      if (results[i].diverged) code = 2;
    }
  } else if (name == "evaluate") {
    const auto wb = pipeline::load_workbench(cfg, layout);
    print_reports(pipeline::evaluate(cfg, layout, wb, workers));
    for (const char* f : {"scenarios.json", "scenarios.csv", "traces.csv"}) outputs.push_back(layout.reports() / f);
  } else if (name == "tradeoff") {
    const auto wb = pipeline::load_workbench(cfg, layout);
    const auto runs = pipeline::tradeoff_runs(cfg);
    const auto results = pipeline::train_runs(cfg, layout, wb, runs, workers);
    for (const auto& r : results) {
      if (r.diverged) code = 2;
    }
    print_reports(pipeline::tradeoff(cfg, layout, wb, workers));
    for (const char* f : {"tradeoff.json", "tradeoff.csv"}) outputs.push_back(layout.reports() / f);
  } else if (name == "calibrate") {
    const auto wb = pipeline::load_workbench(cfg, layout);
    const auto res = pipeline::calibrate(cfg, layout, wb);
    std::printf("plant calibration: %zu iterations, train reward %.4f -> %.4f, %s\n", res.iterations,
                res.first_reward, res.last_reward, res.finite ? "finite" : "NOT finite");
    outputs.push_back(layout.run("calibration") / "train_log.csv");
    if (!res.finite) code = 2;
  }
  std::string manifest = name;
  for (char& c : manifest) c = c == '-' ? '_' : c;
  pipeline::write_manifest(layout, manifest, cfg, outputs);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wastewater pumping station workbench"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--seed", common.seed, "override the benchmark seed")->each([&](const std::string&) {
      common.seed_set = true;
    });
    sub->add_option("--out", common.out, "run directory")->capture_default_str();
    sub->add_option("--workers", common.workers, "worker threads");
    sub->add_option("--iterations", common.iterations, "PPO iterations");
    sub->add_flag("--desk-scale", common.desk_scale, "2000 iterations, 30 days, 3 workers, compressed PPO schedule");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate the synthetic plant history"},
      {"fit-forecast", "fit the four forecaster families"},
      {"eval-forecast", "score forecasters and run the feature ablation"},
      {"fit-emulator", "fit the outflow and level models"},
      {"train", "train the with- and without-forecast agents"},
      {"evaluate", "compare the four control scenarios"},
      {"tradeoff", "train and compare the alarm- and energy-weighted agents"},
      {"calibrate", "short training run against the ground-truth plant"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  try {
    return run_command(app.get_subcommands().front()->get_name(), common);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SchemaMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
