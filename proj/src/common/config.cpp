#include "wwps/config.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "wwps/error.hpp"

namespace wwps {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

// Each config struct is described once by a visit() listing; the same listing
// drives serialization and strict deserialization.
template <class V>
void visit(V& v, GbtParams& c) {
  v("trees", c.trees);
  v("depth", c.depth);
  v("learning_rate", c.learning_rate);
  v("min_leaf", c.min_leaf);
  v("max_bins", c.max_bins);
}

template <class V>
void visit(V& v, PlantConfig& c) {
  v("n_pumps", c.n_pumps);
  v("rated_power_kw", c.rated_power_kw);
  v("tank_area_m2", c.tank_area_m2);
  v("tank_max_m", c.tank_max_m);
  v("alarm_level_m", c.alarm_level_m);
  v("safety_floor_m", c.safety_floor_m);
  v("setpoint_m", c.setpoint_m);
  v("intake_min_m3h", c.intake_min_m3h);
  v("intake_max_m3h", c.intake_max_m3h);
  v("step_seconds", c.step_seconds);
  v("static_lift_m", c.static_lift_m);
  v("power_exponent", c.power_exponent);
  v("balance_pumps", c.balance_pumps);
  v("min_frequency_hz", c.min_frequency_hz);
  v("rated_frequency_hz", c.rated_frequency_hz);
  v("controller_kp_hz_per_m", c.controller_kp_hz_per_m);
  v("controller_ki_hz_per_m", c.controller_ki_hz_per_m);
  v("controller_ramp_hz", c.controller_ramp_hz);
}

template <class V>
void visit(V& v, IntakeConfig& c) {
  v("start", c.start);
  v("mean_m3h", c.mean_m3h);
  v("daily_amplitude", c.daily_amplitude);
  v("semidiurnal_amplitude", c.semidiurnal_amplitude);
  v("month_factor", c.month_factor);
  v("storm_rate_per_day", c.storm_rate_per_day);
  v("storm_amp_min_m3h", c.storm_amp_min_m3h);
  v("storm_amp_max_m3h", c.storm_amp_max_m3h);
  v("storm_rise_min_minutes", c.storm_rise_min_minutes);
  v("storm_rise_max_minutes", c.storm_rise_max_minutes);
  v("storm_decay_min_hours", c.storm_decay_min_hours);
  v("storm_decay_max_hours", c.storm_decay_max_hours);
  v("infiltration_fraction", c.infiltration_fraction);
  v("infiltration_decay_days", c.infiltration_decay_days);
  v("weekend_factor", c.weekend_factor);
  v("ar_coefficient", c.ar_coefficient);
  v("ar_innovation_m3h", c.ar_innovation_m3h);
  v("white_noise_m3h", c.white_noise_m3h);
  v("noise_bound_sigmas", c.noise_bound_sigmas);
  v("outage_rate_per_day", c.outage_rate_per_day);
  v("outage_min_hours", c.outage_min_hours);
  v("outage_max_hours", c.outage_max_hours);
  v("interval_minutes", c.interval_minutes);
  v("interval_probability", c.interval_probability);
}

template <class V>
void visit(V& v, ForecastConfig& c) {
  v("horizons", c.horizons);
  v("lags", c.lags);
  v("quantile_step", c.quantile_step);
  v("fill_limit_minutes", c.fill_limit_minutes);
  v("god_epsilon_m3h", c.god_epsilon_m3h);
  v("train_fraction", c.train_fraction);
  v.nested("gbt", c.gbt);
  v("lqr_tolerance", c.lqr_tolerance);
  v("lqr_max_iterations", c.lqr_max_iterations);
  v("lqr_ridge", c.lqr_ridge);
  v("min_rows", c.min_rows);
}

template <class V>
void visit(V& v, EmulatorConfig& c) {
  v.nested("outflow", c.outflow);
  v("resample_seconds", c.resample_seconds);
  v("holdout_fraction", c.holdout_fraction);
  v("grid_power_points", c.grid_power_points);
  v("grid_level_points", c.grid_level_points);
  v("nmae_target", c.nmae_target);
  v("level_mae_target_m", c.level_mae_target_m);
  v("min_records", c.min_records);
}

template <class V>
void visit(V& v, PpoConfig& c) {
  v("iterations", c.iterations);
  v("timesteps_per_update", c.timesteps_per_update);
  v("batch_size", c.batch_size);
  v("epochs", c.epochs);
  v("hidden", c.hidden);
  v("learning_rate", c.learning_rate);
  v("lr_final_fraction", c.lr_final_fraction);
  v("lr_decay_iterations", c.lr_decay_iterations);
  v("entropy_coef", c.entropy_coef);
  v("clip", c.clip);
  v("gamma", c.gamma);
  v("lambda", c.lambda);
  v("reward_scale", c.reward_scale);
  v("gae_horizon", c.gae_horizon);
  v("r_plus", c.r_plus);
  v("r_minus", c.r_minus);
  v("c1", c.c1);
  v("c2", c.c2);
  v("value_coef", c.value_coef);
  v("max_grad_norm", c.max_grad_norm);
  v("normalize_advantages", c.normalize_advantages);
  v("level_band_low_m", c.level_band_low_m);
}

template <class V>
void visit(V& v, HarnessConfig& c) {
  v("min_episode_steps", c.min_episode_steps);
  v("max_episode_steps", c.max_episode_steps);
  v("train_fraction", c.train_fraction);
  v("init_level_low_m", c.init_level_low_m);
  v("init_level_high_m", c.init_level_high_m);
  v("test_subset", c.test_subset);
  v("test_subset_max_steps", c.test_subset_max_steps);
  v("checkpoint_every", c.checkpoint_every);
  v("trailing_fraction", c.trailing_fraction);
  v("workers", c.workers);
  v("evaluation_env", c.evaluation_env);
  v("alarms_c1", c.alarms_c1);
  v("alarms_c2", c.alarms_c2);
  v("energy_c1", c.energy_c1);
  v("energy_c2", c.energy_c2);
  v("calibration_iterations", c.calibration_iterations);
}

template <class V>
void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("days", c.days);
  v.nested("plant", c.plant);
  v.nested("intake", c.intake);
  v.nested("forecast", c.forecast);
  v.nested("emulator", c.emulator);
  v.nested("ppo", c.ppo);
  v.nested("harness", c.harness);
}

struct Writer {
  nlohmann::json& out;
  template <class T>
  void operator()(const char* key, const T& value) {
    out[key] = value;
  }
  template <class T>
  void nested(const char* key, T& value) {
    nlohmann::json sub = nlohmann::json::object();
    Writer w{sub};
    visit(w, value);
    out[key] = std::move(sub);
  }
};

struct Reader {
  const nlohmann::json& in;
  std::string path;
  std::set<std::string> seen{};

  template <class T>
  void operator()(const char* key, T& value) {
    seen.insert(key);
    auto it = in.find(key);
    if (it == in.end()) return;
    try {
      value = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config key '" + path + key + "': " + e.what());
    }
  }
  template <class T>
  void nested(const char* key, T& value) {
    seen.insert(key);
    auto it = in.find(key);
    if (it == in.end()) return;
    if (!it->is_object()) throw ValidationError("config key '" + path + key + "' must be an object");
    Reader r{*it, path + key + "."};
    visit(r, value);
    r.reject_unknown();
  }
  void reject_unknown() const {
    for (const auto& [k, _] : in.items()) {
      if (!seen.contains(k)) throw ValidationError("unknown config key '" + path + k + "'");
    }
  }
};

}  // namespace

void PlantConfig::validate() const {
  require(n_pumps == kPumps, "plant.n_pumps must be 5");
  require(rated_power_kw > 0.0, "plant.rated_power_kw must be positive");
  require(tank_area_m2 > 0.0, "plant.tank_area_m2 must be positive");
  require(safety_floor_m < setpoint_m && setpoint_m < alarm_level_m && alarm_level_m < tank_max_m,
          "plant levels must satisfy safety_floor < setpoint < alarm < tank_max");
  require(safety_floor_m >= 0.0, "plant.safety_floor_m must be nonnegative");
  require(0.0 < intake_min_m3h && intake_min_m3h < intake_max_m3h, "plant intake range invalid");
  require(step_seconds > 0 && step_seconds % 60 == 0, "plant.step_seconds must be a positive whole minute");
  require(static_lift_m > tank_max_m, "plant.static_lift_m must exceed tank_max_m");
  require(power_exponent > 0.0 && power_exponent < 1.0, "plant.power_exponent must be in (0,1)");
  require(balance_pumps > 0.0, "plant.balance_pumps must be positive");
  require(0.0 < min_frequency_hz && min_frequency_hz < rated_frequency_hz, "plant frequency range invalid");
  require(controller_ramp_hz > 0.0, "plant.controller_ramp_hz must be positive");
}

Timestamp IntakeConfig::start_time() const { return parse_iso(start); }

void IntakeConfig::validate() const {
  try {
    (void)start_time();
  } catch (const DomainError& e) {
    throw ValidationError(std::string("intake.start: ") + e.what());
  }
  require(mean_m3h > 0.0, "intake.mean_m3h must be positive");
  require(storm_rate_per_day >= 0.0, "intake.storm_rate_per_day must be nonnegative");
  require(storm_amp_min_m3h <= storm_amp_max_m3h, "intake storm amplitude range invalid");
  require(storm_rise_min_minutes > 0.0 && storm_rise_min_minutes <= storm_rise_max_minutes,
          "intake storm rise range invalid");
  require(storm_decay_min_hours > 0.0 && storm_decay_min_hours <= storm_decay_max_hours,
          "intake storm decay range invalid");
  require(infiltration_fraction >= 0.0 && infiltration_fraction <= 1.0,
          "intake.infiltration_fraction must be in [0,1]");
  require(infiltration_decay_days > 0.0, "intake.infiltration_decay_days must be positive");
  require(weekend_factor > 0.0, "intake.weekend_factor must be positive");
  require(ar_coefficient >= 0.0 && ar_coefficient < 1.0, "intake.ar_coefficient must be in [0,1)");
  require(ar_innovation_m3h >= 0.0 && white_noise_m3h >= 0.0, "intake noise must be nonnegative");
  require(interval_minutes.size() == interval_probability.size() && !interval_minutes.empty(),
          "intake interval tables must be non-empty and equal length");
  const double total = std::accumulate(interval_probability.begin(), interval_probability.end(), 0.0);
  require(std::abs(total - 1.0) < 1e-9, "intake.interval_probability must sum to 1");
  for (int m : interval_minutes) require(m >= 1, "intake.interval_minutes must be >= 1");
  require(outage_min_hours > 0.0 && outage_min_hours <= outage_max_hours, "intake outage range invalid");
}

std::vector<double> ForecastConfig::quantile_grid() const {
  std::vector<double> grid;
  const auto n = static_cast<int>(std::lround(1.0 / quantile_step));
  for (int i = 1; i < n; ++i) grid.push_back(static_cast<double>(i) / n);
  return grid;
}

void ForecastConfig::validate() const {
  require(horizons >= 1, "forecast.horizons must be >= 1");
  require(lags == 8, "forecast.lags must be 8");
  const double inv = 1.0 / quantile_step;
  require(quantile_step > 0.0 && quantile_step < 0.5 && std::abs(inv - std::round(inv)) < 1e-9,
          "forecast.quantile_step must divide 1");
  require(fill_limit_minutes > 0.0, "forecast.fill_limit_minutes must be positive");
  require(god_epsilon_m3h > 0.0, "forecast.god_epsilon_m3h must be positive");
  require(train_fraction > 0.0 && train_fraction < 1.0, "forecast.train_fraction must be in (0,1)");
  require(gbt.trees >= 1 && gbt.depth >= 1 && gbt.learning_rate > 0.0 && gbt.min_leaf >= 1,
          "forecast.gbt parameters invalid");
  require(gbt.max_bins >= 2 && gbt.max_bins <= 256, "forecast.gbt.max_bins must be in [2,256]");
}

void EmulatorConfig::validate() const {
  require(outflow.depth >= 1 && outflow.depth <= 3, "emulator.outflow.depth must be in [1,3]");
  require(outflow.trees >= 1 && outflow.learning_rate > 0.0, "emulator.outflow parameters invalid");
  require(outflow.max_bins >= 2 && outflow.max_bins <= 256, "emulator.outflow.max_bins must be in [2,256]");
  require(resample_seconds > 0, "emulator.resample_seconds must be positive");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "emulator.holdout_fraction must be in (0,1)");
  require(grid_power_points >= 2 && grid_level_points >= 2, "emulator grid too small");
}

void PpoConfig::validate(std::size_t forecast_horizons) const {
  require(gamma > 0.0 && gamma <= 1.0, "ppo.gamma must be in (0,1]");
  require(lambda > 0.0 && lambda <= 1.0, "ppo.lambda must be in (0,1]");
  require(clip > 0.0, "ppo.clip must be positive");
  require(gae_horizon == forecast_horizons, "ppo.gae_horizon must equal forecast.horizons");
  require(timesteps_per_update >= 1 && batch_size >= 1 && epochs >= 1, "ppo batch settings invalid");
  require(!hidden.empty(), "ppo.hidden must list at least one layer");
  require(learning_rate > 0.0 && lr_final_fraction > 0.0 && lr_final_fraction <= 1.0 && lr_decay_iterations > 0,
          "ppo learning-rate schedule invalid");
  require(reward_scale > 0.0, "ppo.reward_scale must be positive");
  require(r_plus > r_minus, "ppo.r_plus must exceed ppo.r_minus");
}

void HarnessConfig::validate() const {
  require(min_episode_steps >= 1, "harness.min_episode_steps must be >= 1");
  require(max_episode_steps == 0 || max_episode_steps >= min_episode_steps,
          "harness.max_episode_steps must be 0 or at least min_episode_steps");
  require(train_fraction > 0.0 && train_fraction < 1.0, "harness.train_fraction must be in (0,1)");
  require(init_level_low_m < init_level_high_m, "harness initial level range invalid");
  require(checkpoint_every >= 1, "harness.checkpoint_every must be >= 1");
  require(trailing_fraction > 0.0 && trailing_fraction <= 1.0, "harness.trailing_fraction must be in (0,1]");
  require(workers >= 1, "harness.workers must be >= 1");
  require(evaluation_env == "emulator" || evaluation_env == "plant",
          "harness.evaluation_env must be 'emulator' or 'plant'");
}

void RunConfig::validate() const {
  require(days >= 1, "days must be >= 1");
  plant.validate();
  intake.validate();
  forecast.validate();
  emulator.validate();
  ppo.validate(forecast.horizons);
  harness.validate();
}

RunConfig RunConfig::desk_scale() {
  RunConfig cfg;
  cfg.ppo.iterations = 2000;
  // 2000 iterations cannot follow the 15k schedule; compress it and look further ahead
  cfg.ppo.learning_rate = 3e-4;
  cfg.ppo.lr_decay_iterations = 2000;
  cfg.ppo.gamma = 0.999;
  cfg.days = 30;
  cfg.harness.workers = 3;
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json out = nlohmann::json::object();
  Writer w{out};
  RunConfig copy = cfg;
  visit(w, copy);
  return out;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config document must be an object");
  RunConfig cfg;
  Reader r{doc, ""};
  visit(r, cfg);
  r.reject_unknown();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  return run_config_from_json(doc);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(to_json(cfg).dump())); }

}  // namespace wwps
