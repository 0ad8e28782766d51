// End-to-end acceptance run on the benchmark seed. Prints one PASS/FAIL line
// per criterion and exits 3 when any criterion fails.
//
//   acceptance [work_dir] [--fast]
//
// --fast checks only the criteria that need no pipeline run (1, 2, 3, 10).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "wwps/agent.hpp"
#include "wwps/pipeline.hpp"
#include "wwps/synth.hpp"

using namespace wwps;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(double a, double b) {
  const double d = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / d;
}

// ---------------------------------------------------------------- 1

std::vector<double> gae_brute(const std::vector<agent::Transition>& tr, double gamma, double lambda, std::size_t h) {
  std::vector<double> out(tr.size());
  for (std::size_t t = 0; t < tr.size(); ++t) {
    double a = 0.0, w = 1.0;
    for (std::size_t l = 0; l < h && t + l < tr.size(); ++l) {
      const auto& s = tr[t + l];
      a += w * (s.reward + (s.done ? 0.0 : gamma * s.next_value) - s.value);
      if (s.done || s.truncated) break;
      w *= gamma * lambda;
    }
    out[t] = a;
  }
  return out;
}

Outcome criterion_gae() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1, 1), p(0, 1);
  std::uniform_int_distribution<std::size_t> len(1, 30);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    std::vector<agent::Transition> tr(len(rng));
    for (auto& t : tr) {
      t.reward = u(rng);
      t.value = u(rng);
      t.next_value = u(rng);
      t.done = p(rng) < 0.08;
      t.truncated = !t.done && p(rng) < 0.08;
    }
    const double gamma = 0.9 + 0.1 * p(rng), lambda = 0.8 + 0.2 * p(rng);
    const auto got = agent::gae_truncated(tr, gamma, lambda, 20);
    const auto want = gae_brute(tr, gamma, lambda, 20);
    for (std::size_t i = 0; i < tr.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0, fmt("max |diff| %.2e over 200 trajectories, %.2f s", worst, secs)};
}

// ---------------------------------------------------------------- 2

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> ab(1.05, 12.0), xs(0.01, 0.99), un(-1, 1);
  const double h = 1e-6;
  double worst_beta = 0.0, worst_net = 0.0, worst_policy = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double a = ab(rng), b = ab(rng), x = xs(rng);
    const auto [ga, gb] = agent::beta_log_prob_grad(a, b, x);
    const double fa = (agent::beta_log_prob(a + h, b, x) - agent::beta_log_prob(a - h, b, x)) / (2 * h);
    const double fb = (agent::beta_log_prob(a, b + h, x) - agent::beta_log_prob(a, b - h, x)) / (2 * h);
    worst_beta = std::max({worst_beta, rel_err(ga, fa), rel_err(gb, fb)});
  }

  // actor-shaped network, random linear read-out of the outputs
  PpoConfig pc;
  agent::Policy pol(pc, rng);
  agent::Mlp net = pol.actor();
  for (auto& v : net.params()) v *= 4.0;
  agent::StateVector s{};
  for (auto& v : s) v = un(rng);
  std::vector<double> dy(net.output_size());
  for (auto& v : dy) v = un(rng);
  auto net_loss = [&](const agent::Mlp& m) {
    std::vector<double> y(m.output_size());
    m.forward(s, y);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += dy[i] * y[i];
    return l;
  };
  agent::Mlp::Cache cache;
  std::vector<double> y(net.output_size());
  net.forward(s, y, &cache);
  std::vector<double> g(net.params().size(), 0.0);
  net.backward(cache, dy, g);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = pick(rng);
    agent::Mlp p = net, m = net;
    p.params()[i] += h;
    m.params()[i] -= h;
    worst_net = std::max(worst_net, rel_err(g[i], (net_loss(p) - net_loss(m)) / (2 * h)));
  }

  // log-density through the policy head: softplus concentrations and the network together
  for (auto& v : pol.actor().params()) v *= 4.0;
  const synth::PumpFlags on{true, true, true, true, true};
  const auto bp = pol.forward(s);
  const auto act = pol.sample(bp, on, rng);
  agent::Transition tr;
  tr.state = s;
  tr.action = act;
  tr.online = on;
  tr.log_prob = pol.log_prob(bp, act, on);
  const std::vector<agent::Transition> batch{tr};
  const std::vector<double> adv{1.0};
  const auto gs = agent::surrogate_gradient(pol, batch, adv, 0.2, 0.0);
  auto lp = [&](const agent::Policy& q) { return -q.log_prob(q.forward(s), act, on); };
  std::uniform_int_distribution<std::size_t> pick2(0, gs.size() - 1);
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = pick2(rng);
    agent::Policy p = pol, m = pol;
    p.actor().params()[i] += h;
    m.actor().params()[i] -= h;
    worst_policy = std::max(worst_policy, rel_err(gs[i], (lp(p) - lp(m)) / (2 * h)));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_beta <= 1e-4 && worst_net <= 1e-4 && worst_policy <= 1e-4 && secs < 60.0;
  return {ok, fmt("max rel err: beta %.1e, network %.1e, policy log-prob %.1e (50 probes each), %.2f s", worst_beta,
                  worst_net, worst_policy, secs)};
}

// ---------------------------------------------------------------- 3

Outcome criterion_beta() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> ab(1.0 + 1e-3, 10.0);
  boost::math::quadrature::tanh_sinh<double> integrator;
  double worst_mean = 0.0, worst_mass = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double a = ab(rng), b = ab(rng);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) sum += agent::sample_beta(a, b, rng);
    const double mean = sum / 1e5;
    worst_mean = std::max(worst_mean, std::abs(mean - agent::beta_mean(a, b)) / agent::beta_mean(a, b));
    const double mass = integrator.integrate([&](double x) { return std::exp(agent::beta_log_prob(a, b, x)); }, 0.0, 1.0);
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
  }
  return {worst_mean <= 0.01 && worst_mass <= 1e-6,
          fmt("5 pairs x 1e5 samples: max rel mean err %.4f, max |mass - 1| %.1e", worst_mean, worst_mass)};
}

// ---------------------------------------------------------------- 10

Outcome criterion_mass_balance(const RunConfig& cfg) {
  const auto intake = synth::generate_intake(cfg.plant, cfg.intake, cfg.days, cfg.seed);
  const auto avail = synth::generate_availability(cfg.intake, intake.size(), cfg.seed);
  synth::BaselineController bc(cfg.plant);
  const auto sim = synth::simulate_plant(intake, avail, bc.as_controller(), cfg.plant, cfg.plant.setpoint_m);
  const double dt = cfg.plant.step_hours(), area = cfg.plant.tank_area_m2;
  double worst = 0.0;
  std::size_t windows = 0, start = 0;
  const auto& r = sim.records;
  while (start + 1 < r.size()) {
    std::size_t end = start;
    double net = 0.0, gross = 0.0;
    while (end + 1 < r.size() && !sim.clipped[end]) {
      net += (r[end].intake_m3h - r[end].outflow_m3h) * dt / area;
      gross += (r[end].intake_m3h + r[end].outflow_m3h) * dt / area;
      ++end;
    }
    if (end > start) {
      ++windows;
      worst = std::max(worst, std::abs(r[end].level_m - r[start].level_m - net) / gross);
    }
    start = end + 1;
  }
  return {worst <= 1e-6, fmt("%zu clip-free windows, max closure error %.2e of throughput", windows, worst)};
}

// ---------------------------------------------------------------- pipeline

struct PipelineRun {
  emulator::FitReport emulator;
  pipeline::ForecastReport forecasts;
  std::vector<harness::ScenarioReport> scenarios;
  std::vector<harness::ScenarioReport> tradeoff;
  double forecast_seconds = 0.0;
  double train_seconds = 0.0;
  bool diverged = false;
};

PipelineRun run_pipeline(const RunConfig& cfg, const fs::path& dir, std::size_t workers) {
  fs::remove_all(dir);
  const pipeline::Layout layout{dir};
  PipelineRun out;
  pipeline::run_synth(cfg, layout);
  const auto tf = Clock::now();
  pipeline::fit_forecasts(cfg, layout, workers);
  out.forecasts = pipeline::eval_forecasts(cfg, layout, workers);
  out.forecast_seconds = seconds_since(tf);
  out.emulator = pipeline::fit_emulator(cfg, layout);
  const auto wb = pipeline::load_workbench(cfg, layout);
  auto runs = pipeline::scenario_runs(cfg);
  const auto extra = pipeline::tradeoff_runs(cfg);
  runs.insert(runs.end(), extra.begin(), extra.end());
  const auto t0 = Clock::now();
  for (const auto& r : pipeline::train_runs(cfg, layout, wb, runs, workers)) out.diverged = out.diverged || r.diverged;
  out.train_seconds = seconds_since(t0);
  out.scenarios = pipeline::evaluate(cfg, layout, wb, workers);
  out.tradeoff = pipeline::tradeoff(cfg, layout, wb, workers);
  return out;
}

Outcome criterion_emulator(const emulator::FitReport& r) {
  const bool ok = r.outflow_nmae <= 0.05 && r.level_mae_m <= 0.05 && r.monotonicity_violations == 0;
  return {ok, fmt("outflow NMAE %.2f%%, level MAE %.2f cm, monotonicity violations %zu", 100 * r.outflow_nmae,
                  100 * r.level_mae_m, r.monotonicity_violations)};
}

Outcome criterion_forecast(const pipeline::ForecastReport& f, double secs) {
  using forecast::Family;
  const auto& gbt = f.of(Family::kGbt);
  const auto& hourly = f.of(Family::kCondByHour);
  const auto& pers = f.of(Family::kPersistence);
  double cal = 0.0;
  for (double c : gbt.calibration) cal = std::max(cal, std::abs(c));
  const bool ok = gbt.mean_crps() < hourly.mean_crps() && gbt.mean_mae(5) <= pers.mean_mae(5) && cal <= 0.05 &&
                  secs < 300.0;
  return {ok, fmt("CRPS gbt %.1f vs cond_by_hour %.1f; MAE(h>=5) gbt %.1f vs persistence %.1f; max |calibration| "
                  "%.3f; %.0f s",
                  gbt.mean_crps(), hourly.mean_crps(), gbt.mean_mae(5), pers.mean_mae(5), cal, secs)};
}

Outcome criterion_ablation(const pipeline::ForecastReport& f) {
  double m1 = 0, m3 = 0, m10 = 0;
  for (const auto& r : f.ablation) {
    if (r.name == "M1") m1 = r.mae;
    if (r.name == "M3") m3 = r.mae;
    if (r.name == "M10") m10 = r.mae;
  }
  return {m10 < m3 && m3 < m1, fmt("MAE M10 %.1f < M3 %.1f < M1 %.1f", m10, m3, m1)};
}

Outcome criterion_control(const PipelineRun& run, const RunConfig& cfg) {
  const auto& base = run.scenarios[0].median;
  const auto& without = run.scenarios[1].median;
  const auto& with = run.scenarios[2].median;
  const auto& perfect = run.scenarios[3].median;
  const bool a = with.energy_mwh <= base.energy_mwh && with.crossings <= 0.1 * base.occurrences;
  const bool b = perfect.energy_mwh <= with.energy_mwh;
  const bool c = with.crossings <= without.crossings;
  const bool d = with.level_mean_m > base.level_mean_m;
  const bool budget = cfg.ppo.iterations <= 2000 && !run.diverged;
  std::string detail = fmt(
      "(a) %s energy %.3f vs baseline %.3f MWh, crossings %.1f vs limit %.1f; (b) %s perfect %.3f MWh; "
      "(c) %s crossings with %.1f, without %.1f; (d) %s level %.3f vs baseline %.3f m; %zu iterations, "
      "4 runs trained in %.0f s",
      a ? "ok" : "miss", with.energy_mwh, base.energy_mwh, with.crossings, 0.1 * base.occurrences, b ? "ok" : "miss",
      perfect.energy_mwh, c ? "ok" : "miss", with.crossings, without.crossings, d ? "ok" : "miss", with.level_mean_m,
      base.level_mean_m, cfg.ppo.iterations, run.train_seconds);
  return {a && b && c && d && budget, detail};
}

Outcome criterion_tradeoff(const PipelineRun& run) {
  const auto& alarms = run.tradeoff[1].median;
  const auto& energy = run.tradeoff[2].median;
  const bool ok = energy.energy_mwh < alarms.energy_mwh && energy.crossings >= alarms.crossings;
  return {ok, fmt("energy-weighted %.3f MWh / %.1f crossings vs alarm-weighted %.3f MWh / %.1f crossings",
                  energy.energy_mwh, energy.crossings, alarms.energy_mwh, alarms.crossings)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Metric files of a run directory, relative path to bytes.
std::vector<std::pair<std::string, std::string>> metric_files(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    const auto ext = e.path().extension();
    if (ext == ".csv" || rel.starts_with("reports/") || rel.starts_with("models/")) out.emplace_back(rel, slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome criterion_determinism(const RunConfig& base, const fs::path& work) {
  // Reduced scale so the pipeline can run twice: fewer days and iterations.
  RunConfig cfg = base;
  cfg.days = 12;
  cfg.ppo.iterations = 40;
  cfg.harness.checkpoint_every = 10;
  cfg.forecast.gbt.trees = 60;
  const auto t0 = Clock::now();
  run_pipeline(cfg, work / "det_a", 1);
  run_pipeline(cfg, work / "det_b", 1);
  const auto a = metric_files(work / "det_a");
  const auto b = metric_files(work / "det_b");
  std::size_t differing = a.size() == b.size() ? 0 : std::max(a.size(), b.size());
  std::string first;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] != b[i]) {
      if (first.empty()) first = a[i].first;
      ++differing;
    }
  }
  return {differing == 0 && !a.empty(),
          fmt("%zu files compared, %zu differ%s%s; %.0f s", a.size(), differing, first.empty() ? "" : ", first ",
              first.c_str(), seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::current_path() / "acceptance_work";
  bool fast = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--fast") {
      fast = true;
    } else {
      work = argv[i];
    }
  }
  fs::create_directories(work);
  const RunConfig cfg = RunConfig::desk_scale();
  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int id, Outcome o) {
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(id, std::move(o));
  };
  auto guarded = [&](int id, const std::function<Outcome()>& f) {
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, criterion_gae);
  guarded(2, criterion_gradients);
  guarded(3, criterion_beta);

  if (fast) {
    guarded(10, [&] { return criterion_mass_balance(cfg); });
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.second.pass; }) ? 0 : 3;
  }

  PipelineRun run;
  bool have_run = false;
  try {
    const auto t0 = Clock::now();
    run = run_pipeline(cfg, work / "benchmark", cfg.harness.workers);
    have_run = true;
    std::printf("benchmark pipeline finished in %.0f s\n", seconds_since(t0));
  } catch (const std::exception& e) {
    std::printf("benchmark pipeline failed: %s\n", e.what());
  }
  auto need_run = [&](int id, const std::function<Outcome()>& f) {
    if (have_run) {
      guarded(id, f);
    } else {
      report(id, {false, "benchmark pipeline did not complete"});
    }
  };
  need_run(4, [&] { return criterion_emulator(run.emulator); });
  need_run(5, [&] { return criterion_forecast(run.forecasts, run.forecast_seconds); });
  need_run(6, [&] { return criterion_ablation(run.forecasts); });
  need_run(7, [&] { return criterion_control(run, cfg); });
  need_run(8, [&] { return criterion_tradeoff(run); });
  guarded(9, [&] { return criterion_determinism(cfg, work); });
  guarded(10, [&] { return criterion_mass_balance(cfg); });

  std::size_t passed = 0;
  for (const auto& [id, o] : results) passed += o.pass ? 1 : 0;
  std::printf("%zu/%zu criteria passed\n", passed, results.size());
  return passed == results.size() ? 0 : 3;
}
