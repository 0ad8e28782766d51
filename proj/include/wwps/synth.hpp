#pragma once

// Synthetic stand-in for the pumping station: intake process, ground-truth
// pump curve, mass-balance tank, conventional controller, SCADA-like sampling
// and the CSV interchange format every downstream stage reads.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "wwps/config.hpp"
#include "wwps/time.hpp"

namespace wwps::synth {

using PumpVector = std::array<double, kPumps>;
using PumpFlags = std::array<bool, kPumps>;

struct RawRecord {
  Timestamp timestamp{};
  double intake_m3h = 0.0;
  double outflow_m3h = 0.0;
  double level_m = 0.0;
  PumpVector power_kw{};
  PumpVector freq_hz{};
  PumpFlags online{};

  double total_power_kw() const;
  bool operator==(const RawRecord&) const = default;
};

struct IntakeSeries {
  std::vector<Timestamp> timestamps;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  // Throws ValidationError unless timestamps strictly increase and values are >= 0.
  void validate() const;
};

IntakeSeries generate_intake(const PlantConfig& plant, const IntakeConfig& intake, std::size_t days,
                             std::uint64_t seed);

// Pump availability per step (maintenance outages). At least three pumps stay online.
std::vector<PumpFlags> generate_availability(const IntakeConfig& intake, std::size_t steps,
                                             std::uint64_t seed);

// Ground-truth station curve, m3/h. Zero at zero power, concave and strictly
// increasing in power, strictly increasing in level.
double ground_truth_outflow(double power_total_kw, double level_m, const PlantConfig& cfg);
// Inverse of ground_truth_outflow in power.
double ground_truth_power(double outflow_m3h, double level_m, const PlantConfig& cfg);
// Recorded drive frequency for a given power: 50 * (P / P_rated)^(1/3).
double frequency_for_power(double power_kw, const PlantConfig& cfg);

// Next tank level under mass balance; `clipped` reports hitting 0 or tank_max.
double mass_balance_step(double level_m, double intake_m3h, double outflow_m3h, const PlantConfig& cfg,
                         bool* clipped = nullptr);

using Controller =
    std::function<PumpVector(double level_m, const PumpVector& prior_setpoints, const PumpFlags& online)>;

struct Simulation {
  std::vector<RawRecord> records;
  std::vector<bool> clipped;  // per step: level hit 0 or tank_max after this step
  double final_level_m = 0.0;
};

// Emits one record per intake sample. Record t carries the level at the start
// of the step and the set-points and outflow applied during it.
Simulation simulate_plant(const IntakeSeries& intake, const std::vector<PumpFlags>& availability,
                          const Controller& controller, const PlantConfig& cfg, double initial_level_m);

// Fixed set-point sequencing controller: pumps 1-4 on variable drives, pump 5
// fixed-speed on a soft starter. Holds its own sequencing memory.
class BaselineController {
 public:
  explicit BaselineController(const PlantConfig& cfg);

  // Resume from recorded set-points (lowest index treated as started first).
  static BaselineController from_setpoints(const PlantConfig& cfg, const PumpVector& setpoints,
                                           double level_m);

  PumpVector step(double level_m, const PumpFlags& online);
  Controller as_controller();

  double modulating_frequency() const { return f_mod_; }
  std::size_t running_count() const { return order_.size() + (fixed_on_ ? 1 : 0); }
  const std::vector<std::size_t>& start_order() const { return order_; }

  double power_at(double freq_hz) const;
  double frequency_at(double power_kw) const;

 private:
  PumpVector setpoints() const;
  double total_power() const;
  void rebalance(double total_kw);
  bool start_variable_pump(const PumpFlags& online, std::size_t now);

  PlantConfig cfg_;
  std::vector<std::size_t> order_;  // variable-drive pumps in start order
  bool fixed_on_ = false;           // pump 5
  double f_mod_ = 0.0;
  double prev_error_ = 0.0;
  std::size_t clock_ = 0;
  std::array<std::size_t, kPumps> stopped_at_{};
};

// Resamples a uniform 2-minute record list onto an irregular SCADA-like clock
// whose interval mix follows intake.interval_probability. Off-grid samples are
// linear blends of the neighbouring records.
std::vector<RawRecord> irregularize(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                    const IntakeConfig& intake, std::uint64_t seed);

// Share of consecutive-sample intervals per bucket: {2 min, 3 min, 4 min, >= 5 min}.
std::array<double, 4> interval_histogram(const std::vector<RawRecord>& records);

void write_csv(const std::vector<RawRecord>& records, const std::filesystem::path& path);
std::vector<RawRecord> read_csv(const std::filesystem::path& path, const PlantConfig& cfg);
// Rounds every field to the precision write_csv uses.
RawRecord quantize(const RawRecord& r);

}  // namespace wwps::synth
