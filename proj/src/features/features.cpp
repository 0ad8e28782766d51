#include "wwps/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "wwps/error.hpp"

namespace wwps::features {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kLags = 8;
constexpr std::size_t kDaySteps = 720;

Timestamp ceil_to_grid(Timestamp t, std::int64_t step) {
  const std::int64_t s = t.time_since_epoch().count();
  const std::int64_t r = ((s % step) + step) % step;
  return Timestamp(std::chrono::seconds(r == 0 ? s : s + (step - r)));
}

template <class Sample>
std::size_t grid_count(Timestamp first, Timestamp last, std::int64_t step) {
  if (last < first) return 0;
  return static_cast<std::size_t>((last - first).count() / step) + 1;
}

}  // namespace

bool UniformSeries::present(std::size_t i) const { return i < values.size() && !std::isnan(values[i]); }

UniformSeries resample_uniform(const synth::IntakeSeries& series, double fill_limit_minutes, std::int64_t step) {
  if (series.size() == 0) throw InsufficientDataError("resample_uniform: empty series");
  series.validate();
  UniformSeries out;
  out.step_seconds = step;
  out.start = ceil_to_grid(series.timestamps.front(), step);
  const std::size_t n = grid_count<double>(out.start, series.timestamps.back(), step);
  out.values.assign(n, kNaN);
  const double limit_s = fill_limit_minutes * 60.0;

  std::size_t j = 0;  // series.timestamps[j] <= grid time < series.timestamps[j + 1]
  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp g = out.time_at(i);
    while (j + 1 < series.size() && series.timestamps[j + 1] <= g) ++j;
    if (series.timestamps[j] == g) {
      out.values[i] = series.values[j];
      continue;
    }
    if (j + 1 >= series.size()) continue;
    const auto ta = series.timestamps[j];
    const auto tb = series.timestamps[j + 1];
    const double gap = static_cast<double>((tb - ta).count());
    if (gap > limit_s) continue;
    const double w = static_cast<double>((g - ta).count()) / gap;
    out.values[i] = (1.0 - w) * series.values[j] + w * series.values[j + 1];
  }

  for (std::size_t i = 0; i < n;) {
    if (!std::isnan(out.values[i])) {
      ++i;
      continue;
    }
    std::size_t e = i;
    while (e + 1 < n && std::isnan(out.values[e + 1])) ++e;
    out.missing.push_back({out.time_at(i), out.time_at(e)});
    i = e + 1;
  }
  return out;
}

UniformRecords resample_records(const std::vector<synth::RawRecord>& records, const PlantConfig& plant,
                                double fill_limit_minutes) {
  UniformRecords out;
  out.step_seconds = plant.step_seconds;
  if (records.empty()) return out;
  const std::int64_t step = plant.step_seconds;
  out.start = ceil_to_grid(records.front().timestamp, step);
  const std::size_t n = grid_count<double>(out.start, records.back().timestamp, step);
  out.records.assign(n, std::nullopt);
  const double limit_s = fill_limit_minutes * 60.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp g = out.start + std::chrono::seconds(step * static_cast<std::int64_t>(i));
    while (j + 1 < records.size() && records[j + 1].timestamp <= g) ++j;
    const synth::RawRecord& a = records[j];
    if (a.timestamp == g) {
      out.records[i] = a;
      continue;
    }
    if (j + 1 >= records.size()) continue;
    const synth::RawRecord& b = records[j + 1];
    const double gap = static_cast<double>((b.timestamp - a.timestamp).count());
    if (gap > limit_s) continue;
    const double w = static_cast<double>((g - a.timestamp).count()) / gap;
    synth::RawRecord r;
    r.timestamp = g;
    r.intake_m3h = (1.0 - w) * a.intake_m3h + w * b.intake_m3h;
    r.outflow_m3h = (1.0 - w) * a.outflow_m3h + w * b.outflow_m3h;
    r.level_m = (1.0 - w) * a.level_m + w * b.level_m;
    for (std::size_t p = 0; p < kPumps; ++p) {
      r.power_kw[p] = (1.0 - w) * a.power_kw[p] + w * b.power_kw[p];
      r.freq_hz[p] = synth::frequency_for_power(r.power_kw[p], plant);
      r.online[p] = a.online[p] || r.power_kw[p] > 0.0;
    }
    out.records[i] = r;
  }
  return out;
}

synth::IntakeSeries intake_of(const std::vector<synth::RawRecord>& records) {
  synth::IntakeSeries s;
  s.timestamps.reserve(records.size());
  s.values.reserve(records.size());
  for (const auto& r : records) {
    s.timestamps.push_back(r.timestamp);
    s.values.push_back(r.intake_m3h);
  }
  return s;
}

double change_over_time(double w_prev, double w_cur, double dt_minutes) {
  if (dt_minutes == 0.0) throw DomainError("change_over_time: zero time delta");
  return (w_prev - w_cur) / (-dt_minutes);
}

double growth_or_decay(double w_prev, double w_cur, double epsilon) {
  return (w_prev - w_cur) / std::max(w_cur, epsilon);
}

std::span<const std::string> column_names() {
  static const std::array<std::string, kColumnCount> names = {
      "lag1", "lag2", "lag3", "lag4", "lag5", "lag6", "lag7", "lag8",
      "hour", "wday", "month", "cot", "god", "lag24h"};
  return names;
}

bool is_calendar(std::size_t column) { return column == kHour || column == kWday || column == kMonth; }

std::array<double, kColumnCount> FeatureRow::to_array() const {
  std::array<double, kColumnCount> a{};
  std::copy(lags.begin(), lags.end(), a.begin());
  a[kHour] = hour;
  a[kWday] = wday;
  a[kMonth] = month;
  a[kCot] = cot;
  a[kGod] = god;
  a[kLag24h] = lag24h;
  return a;
}

std::optional<FeatureRow> launch_features(const UniformSeries& series, std::size_t t, std::size_t horizon,
                                          double god_epsilon) {
  if (t < kLags || t + horizon < kDaySteps || t > series.size()) return std::nullopt;
  FeatureRow row;
  for (std::size_t i = 0; i < kLags; ++i) {
    if (!series.present(t - 1 - i)) return std::nullopt;
    row.lags[i] = series.values[t - 1 - i];
  }
  const std::size_t day_back = t + horizon - kDaySteps;
  if (day_back >= t || !series.present(day_back)) return std::nullopt;
  row.lag24h = series.values[day_back];
  const Calendar cal = calendar_of(series.time_at(t));
  row.hour = cal.hour;
  row.wday = cal.wday;
  row.month = cal.month;
  const double dt_min = static_cast<double>(series.step_seconds) / 60.0;
  row.cot = change_over_time(row.lags[1], row.lags[0], dt_min);
  row.god = growth_or_decay(row.lags[1], row.lags[0], god_epsilon);
  return row;
}

std::vector<FeatureTable> build_matrix(const UniformSeries& series, std::size_t horizons, double god_epsilon) {
  if (series.size() < kDaySteps + kLags) {
    throw InsufficientDataError("build_matrix: need at least 24 h + 8 steps of data, got " +
                                std::to_string(series.size()) + " steps");
  }
  std::vector<FeatureTable> tables(horizons);
  for (std::size_t k = 1; k <= horizons; ++k) {
    FeatureTable& table = tables[k - 1];
    table.horizon = k;
    for (std::size_t t = 0; t + k < series.size(); ++t) {
      if (!series.present(t + k)) continue;
      auto row = launch_features(series, t, k, god_epsilon);
      if (!row) continue;
      row->target = series.values[t + k];
      table.launch.push_back(t);
      table.rows.push_back(*row);
    }
  }
  return tables;
}

void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "launch_index";
  for (const auto& name : column_names()) out << ',' << name;
  out << ",target\n";
  char buf[64];
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.launch[r];
    for (double v : table.rows[r].to_array()) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", table.rows[r].target);
    out << buf;
  }
}

}  // namespace wwps::features
