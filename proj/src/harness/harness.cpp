#include "wwps/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <regex>

#include "wwps/error.hpp"
#include "wwps/gbt.hpp"
#include "wwps/model_io.hpp"
#include "wwps/parallel.hpp"
#include "wwps/synth.hpp"

namespace wwps::harness {

namespace fs = std::filesystem;
using emulator::EnvState;
using emulator::kBlockAlphas;
using emulator::kBlockQuantiles;
using emulator::kForecastHorizons;

forecast::ModelSet block_model(const forecast::ModelSet& set) {
  if (set.family != forecast::Family::kGbt && set.family != forecast::Family::kLqr) {
    throw ValidationError("forecast blocks need a fitted GBT or LQR model set");
  }
  if (set.horizons != kForecastHorizons) {
    throw SchemaMismatchError("forecast blocks need " + std::to_string(kForecastHorizons) + " horizons");
  }
  forecast::ModelSet out = set;
  out.alphas.clear();
  for (auto& v : out.trees) v.clear();
  for (auto& v : out.lqr) v.clear();
  for (double a : kBlockAlphas) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.alphas.size(); ++i) {
      if (std::abs(set.alphas[i] - a) < std::abs(set.alphas[best] - a)) best = i;
    }
    if (std::abs(set.alphas[best] - a) > 1e-9) {
      throw SchemaMismatchError("model set has no quantile level " + std::to_string(a));
    }
    out.alphas.push_back(a);
    for (std::size_t k = 0; k < set.horizons; ++k) {
      if (!set.trees.empty()) out.trees[k].push_back(set.trees[k][best]);
      if (!set.lqr.empty()) out.lqr[k].push_back(set.lqr[k][best]);
    }
  }
  return out;
}

std::vector<std::optional<ForecastBlock>> forecast_blocks(const forecast::ModelSet& set,
                                                          const features::UniformSeries& series,
                                                          const ForecastConfig& cfg) {
  const forecast::ModelSet reduced = block_model(set);
  std::vector<std::optional<ForecastBlock>> out(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (!series.present(t)) continue;
    const auto fc = forecast::predict_at(reduced, series, t, cfg);
    if (!fc) continue;
    ForecastBlock b{};
    for (std::size_t k = 0; k < kForecastHorizons; ++k) {
      for (std::size_t q = 0; q < kBlockQuantiles; ++q) b[q * kForecastHorizons + k] = (*fc)[k].values[q];
    }
    out[t] = b;
  }
  return out;
}

EpisodeSets make_episodes(const features::UniformRecords& records,
                          const std::vector<std::optional<ForecastBlock>>& forecasts, const HarnessConfig& cfg,
                          std::size_t horizons, std::size_t max_steps) {
  const auto& recs = records.records;
  if (forecasts.size() != recs.size()) throw ValidationError("forecast blocks do not cover the record grid");
  if (horizons != kForecastHorizons) throw ValidationError("episode forecast blocks need 20 horizons");
  if (max_steps != 0 && max_steps < cfg.min_episode_steps) throw ValidationError("max episode length below the minimum");

  std::vector<Episode> all;
  std::size_t i = 0;
  while (i < recs.size()) {
    if (!recs[i] || !forecasts[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < recs.size() && recs[j] && forecasts[j]) ++j;
    // The observed future may run past the forecastable stretch; take it while present.
    std::size_t data_end = j;
    while (data_end < recs.size() && recs[data_end]) ++data_end;
    const std::size_t len = j - i;
    if (len >= cfg.min_episode_steps) {
      const std::size_t pieces = max_steps == 0 ? 1 : (len + max_steps - 1) / max_steps;
      for (std::size_t p = 0; p < pieces; ++p) {
        const std::size_t a = i + p * len / pieces;
        const std::size_t b = i + (p + 1) * len / pieces;
        Episode ep;
        ep.start_index = a;
        ep.start = records.start + std::chrono::seconds(records.step_seconds * static_cast<std::int64_t>(a));
        for (std::size_t t = a; t < b; ++t) {
          const auto& r = *recs[t];
          EpisodeStep s;
          s.intake_m3h = r.intake_m3h;
          s.online = r.online;
          s.level_m = r.level_m;
          s.setpoints_kw = r.power_kw;
          s.forecast = *forecasts[t];
          for (std::size_t k = 0; k < kForecastHorizons; ++k) {
            const std::size_t src = std::min(t + k + 1, data_end - 1);
            for (std::size_t q = 0; q < kBlockQuantiles; ++q) s.perfect[q * kForecastHorizons + k] = recs[src]->intake_m3h;
          }
          ep.steps.push_back(s);
        }
        all.push_back(std::move(ep));
      }
    }
    i = j;
  }
  if (all.empty()) throw InsufficientDataError("no gap-free segment of at least " +
                                               std::to_string(cfg.min_episode_steps) + " steps");
  for (std::size_t k = 0; k < all.size(); ++k) all[k].id = k;
  EpisodeSets sets;
  auto n_train = static_cast<std::size_t>(std::round(cfg.train_fraction * static_cast<double>(all.size())));
  n_train = std::clamp<std::size_t>(n_train, all.size() > 1 ? 1 : 0, all.size() > 1 ? all.size() - 1 : all.size());
  sets.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  sets.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return sets;
}

double randomize_initial_level(const HarnessConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(cfg.init_level_low_m, cfg.init_level_high_m);
  return u(rng);
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kBaseline: return "baseline";
    case Scenario::kNoForecast: return "rl_no_forecast";
    case Scenario::kWithForecast: return "rl_with_forecast";
    case Scenario::kPerfect: return "rl_perfect_forecast";
  }
  return "?";
}

emulator::Transition Env::step(const EnvState& s, const PumpVector& action_kw, double c1, double c2) const {
  return emu != nullptr ? emulator::env_step(*emu, s, action_kw, c1, c2, reward)
                        : emulator::plant_step(plant, s, action_kw, c1, c2, reward);
}

namespace {

EnvState state_at(const Episode& ep, std::size_t t, double level, const PumpVector& setpoints, bool perfect) {
  const EpisodeStep& s = ep.steps[t];
  EnvState e;
  e.level_m = level;
  e.intake_m3h = s.intake_m3h;
  e.online = s.online;
  e.setpoints_kw = setpoints;
  e.forecast = perfect ? s.perfect : s.forecast;
  return e;
}

void account(EpisodeResult& r, const emulator::Transition& tr, const EnvState& s, double step_hours,
             std::size_t t, double alarm_level, bool keep_trace) {
  ++r.steps;
  if (tr.alarm) ++r.crossings;
  if (tr.next_level_m > alarm_level) {
    ++r.occurrences;
    if (t < 2) ++r.early_alarms;
  }
  r.energy_mwh += tr.total_power_kw * step_hours / 1000.0;
  r.level_sum += tr.next_level_m;
  r.level_sq_sum += tr.next_level_m * tr.next_level_m;
  r.reward_sum += tr.reward.raw;
  if (keep_trace) r.trace.push_back({tr.next_level_m, s.intake_m3h, tr.outflow_m3h, tr.total_power_kw, r.energy_mwh, tr.alarm});
}

}  // namespace

EpisodeResult run_episode(const Episode& ep, const Env& env, Scenario scenario, const agent::Policy* policy,
                          double c1, double c2, std::size_t max_steps, bool keep_trace) {
  if (scenario != Scenario::kBaseline && policy == nullptr) throw ValidationError("policy scenario without a policy");
  EpisodeResult r;
  r.episode = ep.id;
  const std::size_t n = max_steps == 0 ? ep.size() : std::min(max_steps, ep.size());
  const PlantConfig& plant = env.plant;
  double level = ep.initial_level_m();
  PumpVector setpoints = ep.steps.front().setpoints_kw;
  std::optional<synth::BaselineController> bc;
  if (scenario == Scenario::kBaseline) bc = synth::BaselineController::from_setpoints(plant, setpoints, level);
  const bool mask = scenario == Scenario::kNoForecast;
  const bool perfect = scenario == Scenario::kPerfect;
  for (std::size_t t = 0; t < n; ++t) {
    const EnvState s = state_at(ep, t, level, setpoints, perfect);
    PumpVector kw{};
    if (bc) {
      kw = bc->step(level, s.online);
      for (std::size_t i = 0; i < kPumps; ++i) kw[i] = s.online[i] ? std::clamp(kw[i], 0.0, plant.rated_power_kw) : 0.0;
    } else if (policy != nullptr) {
      const auto p = policy->forward(agent::encode_state(s, plant, mask));
      kw = agent::to_kw(policy->mean_action(p, s.online), s.online, plant);
    }
    const auto tr = env.step(s, kw, c1, c2);
    account(r, tr, s, plant.step_hours(), t, plant.alarm_level_m, keep_trace);
    level = tr.next_level_m;
    setpoints = kw;
  }
  return r;
}

nlohmann::json Metrics::to_json() const {
  return {{"alarm_crossings", crossings},   {"alarm_occurrences", occurrences}, {"early_alarms", early_alarms},
          {"energy_mwh", energy_mwh},       {"level_mean_m", level_mean_m},     {"level_std_m", level_std_m},
          {"mean_reward", mean_reward}};
}

Metrics aggregate(const std::vector<EpisodeResult>& results) {
  Metrics m;
  double n = 0.0, s = 0.0, sq = 0.0, rw = 0.0;
  for (const auto& r : results) {
    m.crossings += static_cast<double>(r.crossings);
    m.occurrences += static_cast<double>(r.occurrences);
    m.early_alarms += static_cast<double>(r.early_alarms);
    m.energy_mwh += r.energy_mwh;
    n += static_cast<double>(r.steps);
    s += r.level_sum;
    sq += r.level_sq_sum;
    rw += r.reward_sum;
  }
  if (n > 0.0) {
    m.level_mean_m = s / n;
    m.level_std_m = std::sqrt(std::max(0.0, sq / n - m.level_mean_m * m.level_mean_m));
    m.mean_reward = rw / n;
  }
  return m;
}

namespace {

nlohmann::json episode_json(const EpisodeResult& r) {
  const double n = std::max<double>(1.0, static_cast<double>(r.steps));
  return {{"episode", r.episode},
          {"steps", r.steps},
          {"alarm_crossings", r.crossings},
          {"alarm_occurrences", r.occurrences},
          {"early_alarms", r.early_alarms},
          {"energy_mwh", r.energy_mwh},
          {"level_mean_m", r.level_sum / n}};
}

}  // namespace

nlohmann::json ScenarioReport::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : episodes) eps.push_back(episode_json(e));
  return {{"scenario", scenario_name(scenario)},
          {"c1", c1},
          {"c2", c2},
          {"median", median.to_json()},
          {"q25", q25.to_json()},
          {"q75", q75.to_json()},
          {"checkpoints", checkpoints},
          {"episodes", eps}};
}

// ---------------------------------------------------------------- training

fs::path checkpoint_path(const fs::path& out_dir, std::size_t iteration) {
  std::ostringstream name;
  name << "ckpt_" << std::setw(6) << std::setfill('0') << iteration << ".json";
  return out_dir / "checkpoints" / name.str();
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing checkpoint " + path.string());
  const auto doc = load_sealed(path, "policy_checkpoint");
  Checkpoint c;
  c.iteration = doc.at("iteration").get<std::size_t>();
  c.mask_forecast = doc.at("mask_forecast").get<bool>();
  c.c1 = doc.at("c1").get<double>();
  c.c2 = doc.at("c2").get<double>();
  c.policy = agent::Policy::from_json(doc.at("policy"));
  return c;
}

std::vector<std::size_t> list_checkpoints(const fs::path& out_dir) {
  std::vector<std::size_t> its;
  const fs::path dir = out_dir / "checkpoints";
  if (!fs::exists(dir)) return its;
  const std::regex re("ckpt_([0-9]+)\\.json");
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) its.push_back(std::stoul(m[1].str()));
  }
  std::sort(its.begin(), its.end());
  return its;
}

std::vector<std::size_t> trailing(const std::vector<std::size_t>& iterations, double fraction) {
  if (iterations.empty()) return {};
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(iterations.size())));
  n = std::clamp<std::size_t>(n, 1, iterations.size());
  return {iterations.end() - static_cast<std::ptrdiff_t>(n), iterations.end()};
}

namespace {

// Where the stochastic rollout stands between iterations.
struct Cursor {
  bool active = false;
  std::size_t episode = 0;
  std::size_t step = 0;
  double level = 0.0;
  PumpVector setpoints{};
};

nlohmann::json log_row_json(const LogRow& r) {
  return {r.iteration, r.mean_reward, r.alarms, r.energy_mwh, r.train_reward,
          r.policy_loss, r.value_loss, r.clip_fraction, r.skipped};
}

LogRow log_row_from(const nlohmann::json& j) {
  LogRow r;
  r.iteration = j.at(0).get<std::size_t>();
  r.mean_reward = j.at(1).get<double>();
  r.alarms = j.at(2).get<std::size_t>();
  r.energy_mwh = j.at(3).get<double>();
  r.train_reward = j.at(4).get<double>();
  r.policy_loss = j.at(5).get<double>();
  r.value_loss = j.at(6).get<double>();
  r.clip_fraction = j.at(7).get<double>();
  r.skipped = j.at(8).get<std::size_t>();
  return r;
}

bool finite_params(const agent::Policy& p) {
  for (double v : p.actor().params()) {
    if (!std::isfinite(v)) return false;
  }
  for (double v : p.critic().params()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

TrainResult train(const Env& env, const EpisodeSets& episodes, const RunConfig& cfg, const TrainOptions& opt,
                  std::uint64_t seed) {
  if (episodes.train.empty() || episodes.test.empty()) throw InsufficientDataError("training needs train and test episodes");
  const PpoConfig& ppo = cfg.ppo;
  const HarnessConfig& hc = cfg.harness;
  const PlantConfig& plant = env.plant;
  fs::create_directories(opt.out_dir / "checkpoints");
  const fs::path resume_path = opt.out_dir / "resume.json";

  agent::Learner learner(ppo, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Cursor cur;
  TrainResult result;
  std::size_t first = 0;
  if (opt.resume && fs::exists(resume_path)) {
    const auto doc = load_sealed(resume_path, "train_resume");
    if (doc.at("mask_forecast").get<bool>() != opt.mask_forecast || doc.at("c1").get<double>() != opt.c1 ||
        doc.at("c2").get<double>() != opt.c2) {
      throw ValidationError("resume state was written for different training options");
    }
    learner = agent::Learner::from_json(doc.at("learner"), ppo);
    rng = agent::rng_from_state(doc.at("rng").get<std::string>());
    first = doc.at("iteration").get<std::size_t>();
    const auto& c = doc.at("cursor");
    cur.active = c.at("active").get<bool>();
    cur.episode = c.at("episode").get<std::size_t>();
    cur.step = c.at("step").get<std::size_t>();
    cur.level = c.at("level").get<double>();
    cur.setpoints = c.at("setpoints").get<PumpVector>();
    for (const auto& row : doc.at("log")) result.log.push_back(log_row_from(row));
    result.checkpoints = doc.at("checkpoints").get<std::vector<std::size_t>>();
  }

  const Scenario test_scenario = opt.mask_forecast ? Scenario::kNoForecast : Scenario::kWithForecast;
  const std::size_t n_test = std::min(hc.test_subset, episodes.test.size());
  std::vector<agent::Transition> buffer;
  buffer.reserve(ppo.timesteps_per_update);
  std::uniform_int_distribution<std::size_t> pick(0, episodes.train.size() - 1);

  const std::size_t last = opt.stop_after == 0 ? ppo.iterations : std::min(opt.stop_after, ppo.iterations);
  for (std::size_t it = first; it < last; ++it) {
    auto& policy = learner.policy();
    buffer.clear();
    double train_reward = 0.0;
    while (buffer.size() < ppo.timesteps_per_update) {
      if (!cur.active) {
        cur.active = true;
        cur.episode = pick(rng);
        cur.step = 0;
        cur.level = randomize_initial_level(hc, rng);
        cur.setpoints = episodes.train[cur.episode].steps.front().setpoints_kw;
      }
      const Episode& ep = episodes.train[cur.episode];
      const EnvState s = state_at(ep, cur.step, cur.level, cur.setpoints, false);
      agent::Transition tr;
      tr.state = agent::encode_state(s, plant, opt.mask_forecast);
      const auto p = policy.forward(tr.state);
      tr.action = policy.sample(p, s.online, rng);
      tr.online = s.online;
      tr.log_prob = policy.log_prob(p, tr.action, s.online);
      tr.value = policy.value(tr.state);
      if (!buffer.empty() && !buffer.back().done && !buffer.back().truncated) buffer.back().next_value = tr.value;
      const PumpVector kw = agent::to_kw(tr.action, s.online, plant);
      const auto step = env.step(s, kw, opt.c1, opt.c2);
      tr.reward = step.reward.scaled;
      train_reward += step.reward.raw;
      ++cur.step;
      cur.level = step.next_level_m;
      cur.setpoints = kw;
      // Leaving the band ends the episode: an alarm or running the tank low.
      tr.done = step.alarm || step.next_level_m < env.reward.band_low_m;
      const bool end = cur.step >= ep.size();
      if (tr.done || end) cur.active = false;
      if (!tr.done && (end || buffer.size() + 1 == ppo.timesteps_per_update)) {
        // Bootstrap from the successor; at an episode end the last inputs stand in.
        tr.truncated = true;
        const EnvState next = state_at(ep, end ? ep.size() - 1 : cur.step, cur.level, cur.setpoints, false);
        tr.next_value = policy.value(agent::encode_state(next, plant, opt.mask_forecast));
      }
      buffer.push_back(tr);
    }
    const auto stats = learner.update(buffer, it);

    std::vector<EpisodeResult> res;
    for (std::size_t e = 0; e < n_test; ++e) {
      res.push_back(run_episode(episodes.test[e], env, test_scenario, &learner.policy(), opt.c1, opt.c2,
                                hc.test_subset_max_steps));
    }
    const Metrics m = aggregate(res);
    LogRow row;
    row.iteration = it + 1;
    row.mean_reward = m.mean_reward;
    row.alarms = static_cast<std::size_t>(m.crossings);
    row.energy_mwh = m.energy_mwh;
    row.train_reward = train_reward / static_cast<double>(buffer.size());
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.clip_fraction = stats.clip_fraction;
    row.skipped = stats.skipped;
    if (!std::isfinite(row.mean_reward) || !std::isfinite(row.train_reward) || !finite_params(learner.policy())) {
      result.diverged = true;
      break;
    }
    result.log.push_back(row);

    if (hc.checkpoint_every > 0 && (it + 1) % hc.checkpoint_every == 0) {
      save_sealed(checkpoint_path(opt.out_dir, it + 1),
                  {{"iteration", it + 1},
                   {"mask_forecast", opt.mask_forecast},
                   {"c1", opt.c1},
                   {"c2", opt.c2},
                   {"policy", learner.policy().to_json()}},
                  "policy_checkpoint");
      result.checkpoints.push_back(it + 1);
      nlohmann::json log = nlohmann::json::array();
      for (const auto& r : result.log) log.push_back(log_row_json(r));
      save_sealed(resume_path,
                  {{"iteration", it + 1},
                   {"mask_forecast", opt.mask_forecast},
                   {"c1", opt.c1},
                   {"c2", opt.c2},
                   {"learner", learner.to_json()},
                   {"rng", agent::rng_state(rng)},
                   {"cursor",
                    {{"active", cur.active},
                     {"episode", cur.episode},
                     {"step", cur.step},
                     {"level", cur.level},
                     {"setpoints", cur.setpoints}}},
                   {"log", log},
                   {"checkpoints", result.checkpoints}},
                  "train_resume");
      write_log_csv(result.log, opt.out_dir / "train_log.csv");
    }
  }
  write_log_csv(result.log, opt.out_dir / "train_log.csv");
  return result;
}

// ---------------------------------------------------------------- evaluation

namespace {

Metrics quantile_metrics(const std::vector<Metrics>& ms, double alpha) {
  auto q = [&](auto field) {
    std::vector<double> v;
    for (const auto& m : ms) v.push_back(m.*field);
    return gbt::quantile(v, alpha);
  };
  Metrics out;
  out.crossings = q(&Metrics::crossings);
  out.occurrences = q(&Metrics::occurrences);
  out.early_alarms = q(&Metrics::early_alarms);
  out.energy_mwh = q(&Metrics::energy_mwh);
  out.level_mean_m = q(&Metrics::level_mean_m);
  out.level_std_m = q(&Metrics::level_std_m);
  out.mean_reward = q(&Metrics::mean_reward);
  return out;
}

}  // namespace

ScenarioReport evaluate_baseline(const Env& env, const std::vector<Episode>& test, double c1, double c2) {
  ScenarioReport rep;
  rep.scenario = Scenario::kBaseline;
  rep.c1 = c1;
  rep.c2 = c2;
  for (const auto& ep : test) rep.episodes.push_back(run_episode(ep, env, Scenario::kBaseline, nullptr, c1, c2, 0, true));
  rep.median = rep.q25 = rep.q75 = aggregate(rep.episodes);
  return rep;
}

ScenarioReport evaluate_policy(const Env& env, const std::vector<Episode>& test, Scenario scenario,
                               const fs::path& run_dir, const std::vector<std::size_t>& iterations,
                               std::size_t workers) {
  if (iterations.empty()) throw IoError("missing checkpoint: none found in " + run_dir.string());
  std::vector<Metrics> per(iterations.size());
  std::vector<std::vector<EpisodeResult>> last_results;
  ScenarioReport rep;
  rep.scenario = scenario;
  rep.checkpoints = iterations;
  std::vector<Checkpoint> cps(iterations.size());
  for (std::size_t i = 0; i < iterations.size(); ++i) cps[i] = load_checkpoint(checkpoint_path(run_dir, iterations[i]));
  rep.c1 = cps.back().c1;
  rep.c2 = cps.back().c2;
  std::vector<std::vector<EpisodeResult>> results(iterations.size());
  parallel_for(iterations.size(), workers, [&](std::size_t i) {
    const bool keep = i + 1 == iterations.size();
    for (const auto& ep : test) {
      results[i].push_back(run_episode(ep, env, scenario, &cps[i].policy, cps[i].c1, cps[i].c2, 0, keep));
    }
    per[i] = aggregate(results[i]);
  });
  rep.median = quantile_metrics(per, 0.5);
  rep.q25 = quantile_metrics(per, 0.25);
  rep.q75 = quantile_metrics(per, 0.75);
  rep.episodes = std::move(results.back());
  return rep;
}

std::vector<ScenarioReport> evaluate_scenarios(const Env& env, const std::vector<Episode>& test,
                                               const fs::path& with_forecast_dir, const fs::path& no_forecast_dir,
                                               double trailing_fraction, std::size_t workers) {
  const auto with_its = trailing(list_checkpoints(with_forecast_dir), trailing_fraction);
  const auto without_its = trailing(list_checkpoints(no_forecast_dir), trailing_fraction);
  if (with_its.empty()) throw IoError("missing checkpoint in " + with_forecast_dir.string());
  if (without_its.empty()) throw IoError("missing checkpoint in " + no_forecast_dir.string());
  const Checkpoint ref = load_checkpoint(checkpoint_path(with_forecast_dir, with_its.back()));
  std::vector<ScenarioReport> out(4);
  out[0] = evaluate_baseline(env, test, ref.c1, ref.c2);
  out[1] = evaluate_policy(env, test, Scenario::kNoForecast, no_forecast_dir, without_its, workers);
  out[2] = evaluate_policy(env, test, Scenario::kWithForecast, with_forecast_dir, with_its, workers);
  out[3] = evaluate_policy(env, test, Scenario::kPerfect, with_forecast_dir, with_its, workers);
  return out;
}

// ---------------------------------------------------------------- tables

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << std::setprecision(10);
  return f;
}

std::string pct(double base, double value) {
  if (base == 0.0) return "";
  std::ostringstream os;
  os << std::setprecision(6) << 100.0 * (base - value) / base;
  return os.str();
}

}  // namespace

void write_log_csv(const std::vector<LogRow>& log, const fs::path& path) {
  auto f = open_out(path);
  f << "iteration,mean_reward,alarms,energy_MWh,train_reward,policy_loss,value_loss,clip_fraction,skipped\n";
  for (const auto& r : log) {
    f << r.iteration << ',' << r.mean_reward << ',' << r.alarms << ',' << r.energy_mwh << ',' << r.train_reward << ','
      << r.policy_loss << ',' << r.value_loss << ',' << r.clip_fraction << ',' << r.skipped << '\n';
  }
}

void write_reports_csv(const std::vector<ScenarioReport>& reports, const fs::path& path) {
  auto f = open_out(path);
  f << "scenario,c1,c2,alarm_crossings,alarm_crossings_q25,alarm_crossings_q75,alarm_occurrences,early_alarms,"
       "energy_MWh,energy_MWh_q25,energy_MWh_q75,energy_improvement_pct,alarm_improvement_pct,level_mean_m,"
       "level_std_m,mean_reward\n";
  if (reports.empty()) return;
  const Metrics& base = reports.front().median;
  for (const auto& r : reports) {
    const Metrics& m = r.median;
    f << scenario_name(r.scenario) << ',' << r.c1 << ',' << r.c2 << ',' << m.crossings << ',' << r.q25.crossings << ','
      << r.q75.crossings << ',' << m.occurrences << ',' << m.early_alarms << ',' << m.energy_mwh << ','
      << r.q25.energy_mwh << ',' << r.q75.energy_mwh << ',' << pct(base.energy_mwh, m.energy_mwh) << ','
      << pct(base.crossings, m.crossings) << ',' << m.level_mean_m << ',' << m.level_std_m << ',' << m.mean_reward
      << '\n';
  }
}

void write_traces_csv(const std::vector<ScenarioReport>& reports, const fs::path& path) {
  auto f = open_out(path);
  f << "scenario,c1,c2,episode,step,level_m,intake_m3h,outflow_m3h,power_kw,cumulative_energy_MWh,alarm\n";
  for (const auto& r : reports) {
    for (const auto& e : r.episodes) {
      for (std::size_t t = 0; t < e.trace.size(); ++t) {
        const auto& s = e.trace[t];
        f << scenario_name(r.scenario) << ',' << r.c1 << ',' << r.c2 << ',' << e.episode << ',' << t << ','
          << s.level_m << ',' << s.intake_m3h << ',' << s.outflow_m3h << ',' << s.power_kw << ',' << s.cumulative_mwh << ','
          << (s.alarm ? 1 : 0) << '\n';
      }
    }
  }
}

}  // namespace wwps::harness
