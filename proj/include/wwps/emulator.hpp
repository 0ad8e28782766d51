#pragma once

// Learned stand-in for the station: a monotone power-to-outflow map, a linear
// next-level model, the reward and the one-step transition used for training.

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "wwps/config.hpp"
#include "wwps/gbt.hpp"
#include "wwps/synth.hpp"

namespace wwps::emulator {

using synth::PumpFlags;
using synth::PumpVector;
using synth::RawRecord;

constexpr std::size_t kForecastHorizons = 20;
constexpr std::size_t kBlockQuantiles = 3;  // 0.25, 0.5, 0.75
constexpr std::array<double, kBlockQuantiles> kBlockAlphas = {0.25, 0.5, 0.75};
using ForecastBlock = std::array<double, kBlockQuantiles * kForecastHorizons>;  // quantile-major

struct EnvState {
  double level_m = 0.0;
  double intake_m3h = 0.0;
  PumpFlags online{};
  PumpVector setpoints_kw{};
  ForecastBlock forecast{};
};

// Two-minute records averaged pairwise to four minutes; pairs touching a level
// above the alarm threshold are dropped.
std::vector<RawRecord> clean_training_records(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                              const EmulatorConfig& cfg, double fill_limit_minutes = 10.0);

constexpr std::size_t kOutflowFeatures = 2 * kPumps + 3;
std::array<double, kOutflowFeatures> outflow_features(const PumpVector& setpoints_kw, const PumpFlags& online,
                                                      double level_m);

struct OutflowModel {
  gbt::Ensemble ensemble;
  std::vector<double> grid_power_kw;
  std::vector<double> grid_level_m;
  std::vector<double> table;  // [level][power], row-major
  double min_fitted_power_kw = 0.0;

  // Bilinear interpolation on the projection table, clamped to the grid.
  double predict(double total_power_kw, double level_m) const;
  double predict_raw(const PumpVector& setpoints_kw, const PumpFlags& online, double level_m) const;
  double at(std::size_t level_index, std::size_t power_index) const {
    return table[level_index * grid_power_kw.size() + power_index];
  }
  // Count of adjacent-pair decreases over an n_power x n_level uniform mesh.
  std::size_t monotonicity_violations(std::size_t n_power, std::size_t n_level) const;

  nlohmann::json to_json() const;
  static OutflowModel from_json(const nlohmann::json& doc);
};

OutflowModel fit_outflow(const std::vector<RawRecord>& cleaned, const PlantConfig& plant, const EmulatorConfig& cfg);

struct LevelModel {
  // next level = c[0] + c[1] h + c[2] I + c[3] O + c[4] (I - O); flows in m3/h.
  std::array<double, 5> coef{};
  bool rank_deficient = false;

  double predict(double level_m, double intake_m3h, double outflow_m3h) const;
  nlohmann::json to_json() const;
  static LevelModel from_json(const nlohmann::json& doc);
};

// Fitted on consecutive 2-minute grid points; pairs touching the alarm band are skipped.
LevelModel fit_level(const std::vector<std::optional<RawRecord>>& uniform, const PlantConfig& plant);

struct RewardConfig {
  double r_plus = 3.0;
  double r_minus = -600.0;
  double band_low_m = 3.0;
  double band_high_m = 7.2;
  double installed_kw = 550.0;
  double scale = 600.0;

  static RewardConfig from(const PpoConfig& ppo, const PlantConfig& plant);
};

struct Reward {
  double level_term = 0.0;
  double power_term = 0.0;
  double raw = 0.0;
  double scaled = 0.0;
};

Reward reward(double level_m, double total_power_kw, double c1, double c2, const RewardConfig& cfg);

struct Emulator {
  PlantConfig plant{};
  OutflowModel outflow;
  LevelModel level;

  void save(const std::filesystem::path& outflow_path, const std::filesystem::path& level_path) const;
  static Emulator load(const std::filesystem::path& outflow_path, const std::filesystem::path& level_path,
                       const PlantConfig& plant);
};

struct Transition {
  double next_level_m = 0.0;
  double outflow_m3h = 0.0;
  double total_power_kw = 0.0;
  Reward reward;
  bool alarm = false;        // upward crossing of the alarm level
  bool below_floor = false;  // next level under the safety floor
  bool clipped = false;
};

// Throws ValidationError when an action is outside [0, rated] or powers an offline pump.
void check_action(const PumpVector& action_kw, const PumpFlags& online, const PlantConfig& plant);

Transition env_step(const Emulator& emu, const EnvState& state, const PumpVector& action_kw, double c1, double c2,
                    const RewardConfig& rcfg);

// The same transition against the ground-truth plant, for calibration runs.
Transition plant_step(const PlantConfig& plant, const EnvState& state, const PumpVector& action_kw, double c1,
                      double c2, const RewardConfig& rcfg);

struct FitReport {
  double outflow_nmae = 0.0;      // projection table on the holdout, / max intake
  double outflow_raw_nmae = 0.0;  // unprojected ensemble
  double zero_power_max_m3h = 0.0;
  std::size_t monotonicity_violations = 0;
  double level_mae_m = 0.0;
  double level_diff_coef = 0.0;
  std::size_t outflow_train_rows = 0;
  std::size_t outflow_holdout_rows = 0;
  std::size_t level_train_rows = 0;
  std::size_t level_holdout_rows = 0;
  bool targets_met = false;

  nlohmann::json to_json() const;
};

// Chronological holdout split, fit and scoring in one pass.
std::pair<Emulator, FitReport> fit_emulator(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                            const EmulatorConfig& cfg, double fill_limit_minutes);

}  // namespace wwps::emulator
