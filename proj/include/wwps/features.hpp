#pragma once

// Uniform resampling of irregular SCADA series and the lagged, calendar-augmented
// design tables used by the intake forecasters.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wwps/config.hpp"
#include "wwps/synth.hpp"

namespace wwps::features {

struct MissingSegment {
  Timestamp begin;  // first missing grid point
  Timestamp end;    // last missing grid point
};

// A series on a uniform grid. Missing grid points hold NaN.
struct UniformSeries {
  Timestamp start{};
  std::int64_t step_seconds = 120;
  std::vector<double> values;
  std::vector<MissingSegment> missing;

  std::size_t size() const { return values.size(); }
  Timestamp time_at(std::size_t i) const {
    return start + std::chrono::seconds(step_seconds * static_cast<std::int64_t>(i));
  }
  bool present(std::size_t i) const;
};

// Linear time-weighted interpolation onto the 2-minute grid. Gaps longer than
// fill_limit_minutes stay missing and are listed in `missing`.
UniformSeries resample_uniform(const synth::IntakeSeries& series, double fill_limit_minutes,
                               std::int64_t step_seconds = 120);

// Same grid, applied to whole plant records. Online flags carry the earlier
// sample's state; power and flows interpolate. nullopt marks a missing point.
struct UniformRecords {
  Timestamp start{};
  std::int64_t step_seconds = 120;
  std::vector<std::optional<synth::RawRecord>> records;
};
UniformRecords resample_records(const std::vector<synth::RawRecord>& records, const PlantConfig& plant,
                                double fill_limit_minutes);

synth::IntakeSeries intake_of(const std::vector<synth::RawRecord>& records);

// (W_{m-1} - W_m) / (t_{m-1} - t_m), per minute. dt_minutes = t_m - t_{m-1}.
double change_over_time(double w_prev, double w_cur, double dt_minutes);
// (W_{m-1} - W_m) / max(W_m, epsilon).
double growth_or_decay(double w_prev, double w_cur, double epsilon);

enum Column : std::size_t {
  kLag1 = 0,  // lags occupy columns 0..7
  kHour = 8,
  kWday,
  kMonth,
  kCot,
  kGod,
  kLag24h,
  kColumnCount
};
std::span<const std::string> column_names();
bool is_calendar(std::size_t column);

struct FeatureRow {
  std::array<double, 8> lags{};  // W_{t-1} .. W_{t-8}
  int hour = 0;
  int wday = 0;
  int month = 1;
  double cot = 0.0;
  double god = 0.0;
  double lag24h = 0.0;  // W_{t+k-720}
  double target = 0.0;  // W_{t+k}

  std::array<double, kColumnCount> to_array() const;
};

struct FeatureTable {
  std::size_t horizon = 1;
  std::vector<std::size_t> launch;  // grid index t of each row
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
};

// Features for a forecast issued at grid index t for t + horizon; nullopt when any
// constituent is missing. Only samples at indices <= t are read.
std::optional<FeatureRow> launch_features(const UniformSeries& series, std::size_t t, std::size_t horizon,
                                          double god_epsilon);

// One table per horizon 1..K; target W_{t+k}. Rows with any missing constituent are dropped.
std::vector<FeatureTable> build_matrix(const UniformSeries& series, std::size_t horizons, double god_epsilon);

void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path);

}  // namespace wwps::features
