#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wwps/time.hpp"

namespace wwps {

constexpr std::size_t kPumps = 5;

// Physical plant and its conventional fixed-set-point controller.
struct PlantConfig {
  std::size_t n_pumps = kPumps;
  double rated_power_kw = 110.0;
  double tank_area_m2 = 1000.0;
  double tank_max_m = 8.0;
  double alarm_level_m = 7.2;
  double safety_floor_m = 2.5;
  double setpoint_m = 6.0;
  double intake_min_m3h = 1800.0;
  double intake_max_m3h = 14400.0;
  std::int64_t step_seconds = 120;

  // Pump curve: Q = k * P^exponent / (static_lift - h). k is chosen so that
  // balance_pumps pumps at rated power move intake_max at the set-point level.
  double static_lift_m = 16.0;
  double power_exponent = 0.8;
  double balance_pumps = 3.0;

  // Conventional controller.
  double min_frequency_hz = 30.0;
  double rated_frequency_hz = 50.0;
  double controller_kp_hz_per_m = 0.5;
  double controller_ki_hz_per_m = 0.3;
  double controller_ramp_hz = 1.5;

  double installed_power_kw() const { return rated_power_kw * static_cast<double>(n_pumps); }
  double step_hours() const { return static_cast<double>(step_seconds) / 3600.0; }
  void validate() const;
};

// Synthetic wastewater intake process.
struct IntakeConfig {
  std::string start = "2013-12-20T00:00:00";
  double mean_m3h = 5000.0;
  double daily_amplitude = 0.28;
  double semidiurnal_amplitude = 0.08;
  std::array<double, 12> month_factor = {1.20, 1.25, 1.12, 1.02, 0.94, 0.86,
                                         0.80, 0.78, 0.84, 0.95, 1.08, 1.15};
  double storm_rate_per_day = 0.6;
  double storm_amp_min_m3h = 1500.0;
  double storm_amp_max_m3h = 4500.0;
  double storm_rise_min_minutes = 16.0;
  double storm_rise_max_minutes = 50.0;
  double storm_decay_min_hours = 1.0;
  double storm_decay_max_hours = 5.0;
  double infiltration_fraction = 0.3;
  double infiltration_decay_days = 3.0;
  double weekend_factor = 0.92;
  double ar_coefficient = 0.97;
  double ar_innovation_m3h = 70.0;
  double white_noise_m3h = 90.0;
  double noise_bound_sigmas = 3.0;
  double outage_rate_per_day = 0.08;
  double outage_min_hours = 6.0;
  double outage_max_hours = 36.0;
  // Sampling intervals (minutes) and their probabilities for irregularize().
  std::vector<int> interval_minutes = {2, 3, 4, 5, 6, 8, 10, 15, 30, 120};
  std::vector<double> interval_probability = {0.689, 0.161, 0.065, 0.045, 0.025,
                                              0.010, 0.0042, 0.0005, 0.0002, 0.0001};

  Timestamp start_time() const;
  void validate() const;
};

struct GbtParams {
  std::size_t trees = 200;
  std::size_t depth = 3;
  double learning_rate = 0.05;
  std::size_t min_leaf = 20;
  std::size_t max_bins = 64;
};

struct ForecastConfig {
  std::size_t horizons = 20;
  std::size_t lags = 8;
  double quantile_step = 0.05;
  double fill_limit_minutes = 10.0;
  double god_epsilon_m3h = 1.0;
  double train_fraction = 0.8;
  GbtParams gbt{};
  double lqr_tolerance = 1e-6;
  std::size_t lqr_max_iterations = 200;
  double lqr_ridge = 1e-6;
  std::size_t min_rows = 500;

  std::vector<double> quantile_grid() const;
  void validate() const;
};

struct EmulatorConfig {
  GbtParams outflow{150, 3, 0.1, 20, 64};
  std::int64_t resample_seconds = 240;
  double holdout_fraction = 0.2;
  std::size_t grid_power_points = 111;
  std::size_t grid_level_points = 33;
  double nmae_target = 0.05;
  double level_mae_target_m = 0.05;
  std::size_t min_records = 1000;

  void validate() const;
};

struct PpoConfig {
  std::size_t iterations = 15000;
  std::size_t timesteps_per_update = 750;
  std::size_t batch_size = 250;
  std::size_t epochs = 4;
  std::vector<std::size_t> hidden = {64, 64};
  double learning_rate = 1.5e-4;
  double lr_final_fraction = 0.1;
  std::size_t lr_decay_iterations = 15000;  // reaches lr_final_fraction here, independent of `iterations`
  double entropy_coef = 0.0;
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double reward_scale = 600.0;
  std::size_t gae_horizon = 20;
  double r_plus = 3.0;
  double r_minus = -600.0;
  double c1 = 1.0;
  double c2 = 0.4;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  double level_band_low_m = 3.0;

  void validate(std::size_t forecast_horizons) const;
};

struct HarnessConfig {
  std::size_t min_episode_steps = 200;
  std::size_t max_episode_steps = 720;  // 0 keeps whole gap-free runs
  double train_fraction = 0.8;
  double init_level_low_m = 3.0;
  double init_level_high_m = 7.0;
  std::size_t test_subset = 2;
  std::size_t test_subset_max_steps = 720;
  std::size_t checkpoint_every = 25;
  double trailing_fraction = 0.2;
  std::size_t workers = 3;
  std::string evaluation_env = "emulator";  // or "plant"
  double alarms_c1 = 1.0;
  double alarms_c2 = 0.5;
  double energy_c1 = 0.5;
  double energy_c2 = 1.0;
  std::size_t calibration_iterations = 100;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 20240601;
  std::size_t days = 30;
  PlantConfig plant{};
  IntakeConfig intake{};
  ForecastConfig forecast{};
  EmulatorConfig emulator{};
  PpoConfig ppo{};
  HarnessConfig harness{};

  void validate() const;
  // Desk-scale overrides: 2000 PPO iterations, 30 days, 3 workers.
  static RunConfig desk_scale();
};

nlohmann::json to_json(const RunConfig& cfg);
// Rejects unknown keys and wrong types; missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

// FNV-1a over the canonical JSON dump. Stable across runs and platforms.
std::uint64_t fnv1a(std::string_view bytes);
std::string config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

}  // namespace wwps
