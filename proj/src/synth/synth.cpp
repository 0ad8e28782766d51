#include "wwps/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "wwps/error.hpp"

namespace wwps::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double bounded_normal(std::mt19937_64& rng, double sigma, double bound_sigmas) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  const double lim = bound_sigmas * sigma;
  return std::clamp(n(rng), -lim, lim);
}

struct Storm {
  double start_h;
  double amplitude;
  double rise_h;
  double decay_h;
  double infiltration;  // share of the peak that drains slowly through the soil
  double infiltration_decay_h;

  double at(double hours) const {
    const double x = hours - start_h;
    if (x <= 0.0) return 0.0;
    if (x < rise_h) return amplitude * x / rise_h;
    const double y = x - rise_h;
    return amplitude * ((1.0 - infiltration) * std::exp(-y / decay_h) + infiltration * std::exp(-y / infiltration_decay_h));
  }
};

double pump_curve_coefficient(const PlantConfig& cfg) {
  const double head = cfg.static_lift_m - cfg.setpoint_m;
  return cfg.intake_max_m3h * head / std::pow(cfg.balance_pumps * cfg.rated_power_kw, cfg.power_exponent);
}

}  // namespace

double RawRecord::total_power_kw() const {
  double s = 0.0;
  for (double p : power_kw) s += p;
  return s;
}

void IntakeSeries::validate() const {
  if (timestamps.size() != values.size()) throw ValidationError("intake series length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0)) throw ValidationError("intake series has a negative value");
    if (i > 0 && timestamps[i] <= timestamps[i - 1]) {
      throw ValidationError("intake series timestamps must strictly increase");
    }
  }
}

IntakeSeries generate_intake(const PlantConfig& plant, const IntakeConfig& intake, std::size_t days,
                             std::uint64_t seed) {
  if (days < 1) throw ValidationError("generate_intake needs at least one day");
  const std::size_t per_day = static_cast<std::size_t>(86400 / plant.step_seconds);
  const std::size_t n = days * per_day;
  const double step_h = plant.step_hours();
  const double horizon_h = static_cast<double>(n) * step_h;
  std::mt19937_64 rng(seed);

  std::vector<Storm> storms;
  if (intake.storm_rate_per_day > 0.0) {
    std::exponential_distribution<double> gap(intake.storm_rate_per_day / 24.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Storms before the first sample still drain into it, so the slow tail starts at steady state.
    const double burn_in_h = -5.0 * std::max(intake.storm_decay_max_hours, intake.infiltration_decay_days * 24.0);
    for (double t = burn_in_h + gap(rng); t < horizon_h; t += gap(rng)) {
      const double amp = intake.storm_amp_min_m3h + u01(rng) * (intake.storm_amp_max_m3h - intake.storm_amp_min_m3h);
      const double rise = (intake.storm_rise_min_minutes +
                           u01(rng) * (intake.storm_rise_max_minutes - intake.storm_rise_min_minutes)) /
                          60.0;
      const double decay =
          intake.storm_decay_min_hours + u01(rng) * (intake.storm_decay_max_hours - intake.storm_decay_min_hours);
      storms.push_back({t, amp, rise, decay, intake.infiltration_fraction, intake.infiltration_decay_days * 24.0});
    }
  }

  IntakeSeries out;
  out.timestamps.reserve(n);
  out.values.reserve(n);
  const Timestamp start = intake.start_time();
  double ar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp ts = start + std::chrono::seconds(plant.step_seconds * static_cast<std::int64_t>(i));
    const Calendar cal = calendar_of(ts);
    const auto since_midnight = ts - std::chrono::floor<std::chrono::days>(ts);
    const double hod = static_cast<double>(since_midnight.count()) / 3600.0;
    const double profile = 1.0 + intake.daily_amplitude * std::sin(kTwoPi * (hod - 9.0) / 24.0) +
                           intake.semidiurnal_amplitude * std::sin(2.0 * kTwoPi * (hod - 7.0) / 24.0);
    const double weekday = cal.wday == 0 || cal.wday == 6 ? intake.weekend_factor : 1.0;
    double value = intake.mean_m3h * intake.month_factor[static_cast<std::size_t>(cal.month - 1)] * profile * weekday;

    const double hours = static_cast<double>(i) * step_h;
    for (const Storm& s : storms) value += s.at(hours);

    ar = intake.ar_coefficient * ar + bounded_normal(rng, intake.ar_innovation_m3h, intake.noise_bound_sigmas);
    value += ar + bounded_normal(rng, intake.white_noise_m3h, intake.noise_bound_sigmas);

    out.timestamps.push_back(ts);
    out.values.push_back(std::clamp(value, plant.intake_min_m3h, plant.intake_max_m3h));
  }
  return out;
}

std::vector<PumpFlags> generate_availability(const IntakeConfig& intake, std::size_t steps, std::uint64_t seed) {
  PumpFlags all{};
  all.fill(true);
  std::vector<PumpFlags> out(steps, all);
  if (intake.outage_rate_per_day <= 0.0 || steps == 0) return out;

  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  const double steps_per_day = 720.0;
  std::exponential_distribution<double> gap(intake.outage_rate_per_day / steps_per_day);
  std::uniform_int_distribution<std::size_t> pick(0, kPumps - 1);
  std::uniform_real_distribution<double> dur(intake.outage_min_hours, intake.outage_max_hours);
  for (double t = gap(rng); t < static_cast<double>(steps); t += gap(rng)) {
    const std::size_t pump = pick(rng);
    const auto begin = static_cast<std::size_t>(t);
    const auto end = std::min(steps, begin + static_cast<std::size_t>(dur(rng) * 30.0));
    bool feasible = true;
    for (std::size_t s = begin; s < end && feasible; ++s) {
      const auto online = static_cast<std::size_t>(std::count(out[s].begin(), out[s].end(), true));
      feasible = online > 3 || !out[s][pump];
    }
    if (!feasible) continue;
    for (std::size_t s = begin; s < end; ++s) out[s][pump] = false;
  }
  return out;
}

double ground_truth_outflow(double power_total_kw, double level_m, const PlantConfig& cfg) {
  if (!(power_total_kw >= 0.0)) throw DomainError("ground_truth_outflow: negative power");
  if (!(level_m >= 0.0 && level_m <= cfg.tank_max_m)) throw DomainError("ground_truth_outflow: level out of range");
  if (power_total_kw == 0.0) return 0.0;
  return pump_curve_coefficient(cfg) * std::pow(power_total_kw, cfg.power_exponent) / (cfg.static_lift_m - level_m);
}

double ground_truth_power(double outflow_m3h, double level_m, const PlantConfig& cfg) {
  if (!(outflow_m3h >= 0.0)) throw DomainError("ground_truth_power: negative outflow");
  if (outflow_m3h == 0.0) return 0.0;
  return std::pow(outflow_m3h * (cfg.static_lift_m - level_m) / pump_curve_coefficient(cfg),
                  1.0 / cfg.power_exponent);
}

double frequency_for_power(double power_kw, const PlantConfig& cfg) {
  if (power_kw <= 0.0) return 0.0;
  return cfg.rated_frequency_hz * std::cbrt(power_kw / cfg.rated_power_kw);
}

double mass_balance_step(double level_m, double intake_m3h, double outflow_m3h, const PlantConfig& cfg,
                         bool* clipped) {
  const double next = level_m + (intake_m3h - outflow_m3h) * cfg.step_hours() / cfg.tank_area_m2;
  const double bounded = std::clamp(next, 0.0, cfg.tank_max_m);
  if (clipped) *clipped = bounded != next || bounded >= cfg.tank_max_m;
  return bounded;
}

Simulation simulate_plant(const IntakeSeries& intake, const std::vector<PumpFlags>& availability,
                          const Controller& controller, const PlantConfig& cfg, double initial_level_m) {
  if (!availability.empty() && availability.size() != intake.size()) {
    throw ValidationError("simulate_plant: availability length differs from intake length");
  }
  PumpFlags all{};
  all.fill(true);
  Simulation sim;
  sim.records.reserve(intake.size());
  sim.clipped.reserve(intake.size());
  double level = std::clamp(initial_level_m, 0.0, cfg.tank_max_m);
  PumpVector prior{};
  for (std::size_t t = 0; t < intake.size(); ++t) {
    const PumpFlags& online = availability.empty() ? all : availability[t];
    PumpVector sp = controller(level, prior, online);
    RawRecord rec;
    rec.timestamp = intake.timestamps[t];
    rec.intake_m3h = intake.values[t];
    rec.level_m = level;
    rec.online = online;
    for (std::size_t i = 0; i < kPumps; ++i) {
      sp[i] = online[i] ? std::clamp(sp[i], 0.0, cfg.rated_power_kw) : 0.0;
      rec.power_kw[i] = sp[i];
      rec.freq_hz[i] = frequency_for_power(sp[i], cfg);
    }
    rec.outflow_m3h = ground_truth_outflow(rec.total_power_kw(), level, cfg);
    bool clipped = false;
    level = mass_balance_step(level, rec.intake_m3h, rec.outflow_m3h, cfg, &clipped);
    sim.records.push_back(rec);
    sim.clipped.push_back(clipped);
    prior = sp;
  }
  sim.final_level_m = level;
  return sim;
}

// ---------------------------------------------------------------------------
// Conventional controller

BaselineController::BaselineController(const PlantConfig& cfg) : cfg_(cfg), f_mod_(cfg.min_frequency_hz) {}

BaselineController BaselineController::from_setpoints(const PlantConfig& cfg, const PumpVector& setpoints,
                                                      double level_m) {
  BaselineController c(cfg);
  for (std::size_t i = 0; i + 1 < kPumps; ++i) {
    if (setpoints[i] > 0.0) c.order_.push_back(i);
  }
  c.fixed_on_ = setpoints[kPumps - 1] > 0.0;
  if (!c.order_.empty()) {
    const std::size_t m = std::min<std::size_t>(2, c.order_.size());
    double sum = 0.0;
    for (std::size_t j = c.order_.size() - m; j < c.order_.size(); ++j) sum += setpoints[c.order_[j]];
    c.f_mod_ = c.frequency_at(sum / static_cast<double>(m));
  }
  c.prev_error_ = level_m - cfg.setpoint_m;
  return c;
}

double BaselineController::power_at(double freq_hz) const {
  const double pmin = std::pow(cfg_.min_frequency_hz / cfg_.rated_frequency_hz, 3.0);
  const double x = (freq_hz - cfg_.min_frequency_hz) / (cfg_.rated_frequency_hz - cfg_.min_frequency_hz);
  return cfg_.rated_power_kw * (pmin + (1.0 - pmin) * std::clamp(x, 0.0, 1.0));
}

double BaselineController::frequency_at(double power_kw) const {
  const double pmin = std::pow(cfg_.min_frequency_hz / cfg_.rated_frequency_hz, 3.0);
  const double x = (power_kw / cfg_.rated_power_kw - pmin) / (1.0 - pmin);
  return cfg_.min_frequency_hz + std::clamp(x, 0.0, 1.0) * (cfg_.rated_frequency_hz - cfg_.min_frequency_hz);
}

PumpVector BaselineController::setpoints() const {
  PumpVector sp{};
  const std::size_t n = order_.size();
  const std::size_t modulating = std::min<std::size_t>(2, n);
  for (std::size_t j = 0; j < n; ++j) {
    sp[order_[j]] = j < n - modulating ? cfg_.rated_power_kw : power_at(f_mod_);
  }
  if (fixed_on_) sp[kPumps - 1] = cfg_.rated_power_kw;
  return sp;
}

double BaselineController::total_power() const {
  double s = 0.0;
  for (double p : setpoints()) s += p;
  return s;
}

// Re-derive the modulating frequency so total power is preserved across a
// start or stop, within the drive limits.
void BaselineController::rebalance(double total_kw) {
  const std::size_t n = order_.size();
  const std::size_t modulating = std::min<std::size_t>(2, n);
  if (modulating == 0) return;
  const double fixed = static_cast<double>(n - modulating) * cfg_.rated_power_kw +
                       (fixed_on_ ? cfg_.rated_power_kw : 0.0);
  f_mod_ = frequency_at((total_kw - fixed) / static_cast<double>(modulating));
}

bool BaselineController::start_variable_pump(const PumpFlags& online, std::size_t now) {
  std::size_t best = kPumps;
  for (std::size_t i = 0; i + 1 < kPumps; ++i) {
    if (!online[i] || std::find(order_.begin(), order_.end(), i) != order_.end()) continue;
    if (best == kPumps || stopped_at_[i] < stopped_at_[best]) best = i;
  }
  if (best == kPumps) return false;
  (void)now;
  order_.push_back(best);
  return true;
}

PumpVector BaselineController::step(double level_m, const PumpFlags& online) {
  ++clock_;
  for (auto it = order_.begin(); it != order_.end();) {
    if (!online[*it]) {
      stopped_at_[*it] = clock_;
      it = order_.erase(it);
    } else {
      ++it;
    }
  }
  if (fixed_on_ && !online[kPumps - 1]) {
    fixed_on_ = false;
    stopped_at_[kPumps - 1] = clock_;
  }

  const double error = level_m - cfg_.setpoint_m;
  if (order_.empty() && !fixed_on_) {
    prev_error_ = error;
    if (error > 0.0 && start_variable_pump(online, clock_)) f_mod_ = cfg_.min_frequency_hz;
    return setpoints();
  }

  const double delta = std::clamp(
      cfg_.controller_kp_hz_per_m * (error - prev_error_) + cfg_.controller_ki_hz_per_m * error,
      -cfg_.controller_ramp_hz, cfg_.controller_ramp_hz);
  prev_error_ = error;
  f_mod_ = std::clamp(f_mod_ + delta, cfg_.min_frequency_hz, cfg_.rated_frequency_hz);

  const bool saturated = f_mod_ >= cfg_.rated_frequency_hz - 1e-9;
  const bool at_minimum = f_mod_ <= cfg_.min_frequency_hz + 1e-9;
  if (saturated && error > 0.0) {
    const double total = total_power();
    if (order_.size() < kPumps - 1 && start_variable_pump(online, clock_)) {
      rebalance(total);
    } else if (!fixed_on_ && online[kPumps - 1] && order_.size() >= 3) {
      fixed_on_ = true;
      rebalance(total);
    }
  } else if (at_minimum && error < 0.0) {
    const double total = total_power();
    if (fixed_on_) {
      fixed_on_ = false;
      stopped_at_[kPumps - 1] = clock_;
    } else {
      // The unit that started first (the longest-running one) stops.
      stopped_at_[order_.front()] = clock_;
      order_.erase(order_.begin());
    }
    rebalance(total);
  }
  return setpoints();
}

Controller BaselineController::as_controller() {
  auto state = std::make_shared<BaselineController>(*this);
  return [state](double level, const PumpVector&, const PumpFlags& online) { return state->step(level, online); };
}

// ---------------------------------------------------------------------------
// Irregular sampling

std::vector<RawRecord> irregularize(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                    const IntakeConfig& intake, std::uint64_t seed) {
  std::vector<RawRecord> out;
  if (records.empty()) return out;
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
  std::discrete_distribution<std::size_t> pick(intake.interval_probability.begin(),
                                               intake.interval_probability.end());
  const Timestamp t0 = records.front().timestamp;
  const std::int64_t step = plant.step_seconds;
  const std::int64_t span = (records.back().timestamp - t0).count();
  out.push_back(records.front());
  std::int64_t offset = 0;
  while (true) {
    offset += 60 * intake.interval_minutes[pick(rng)];
    if (offset > span) break;
    const auto j = static_cast<std::size_t>(offset / step);
    const std::int64_t rem = offset % step;
    if (rem == 0) {
      out.push_back(records[j]);
      continue;
    }
    const RawRecord& a = records[j];
    const RawRecord& b = records[j + 1];
    const double w = static_cast<double>(rem) / static_cast<double>(step);
    RawRecord r;
    r.timestamp = t0 + std::chrono::seconds(offset);
    r.intake_m3h = (1.0 - w) * a.intake_m3h + w * b.intake_m3h;
    r.outflow_m3h = (1.0 - w) * a.outflow_m3h + w * b.outflow_m3h;
    r.level_m = (1.0 - w) * a.level_m + w * b.level_m;
    for (std::size_t i = 0; i < kPumps; ++i) {
      r.power_kw[i] = (1.0 - w) * a.power_kw[i] + w * b.power_kw[i];
      r.freq_hz[i] = frequency_for_power(r.power_kw[i], plant);
      r.online[i] = a.online[i] || r.power_kw[i] > 0.0;
    }
    out.push_back(r);
  }
  return out;
}

std::array<double, 4> interval_histogram(const std::vector<RawRecord>& records) {
  std::array<double, 4> h{};
  if (records.size() < 2) return h;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto dt = (records[i].timestamp - records[i - 1].timestamp).count();
    if (dt == 120) h[0] += 1;
    else if (dt == 180) h[1] += 1;
    else if (dt == 240) h[2] += 1;
    else if (dt >= 300) h[3] += 1;
  }
  for (double& v : h) v /= static_cast<double>(records.size() - 1);
  return h;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kHeader =
    "timestamp,intake_m3h,outflow_m3h,level_m,p1_kw,p2_kw,p3_kw,p4_kw,p5_kw,"
    "f1_hz,f2_hz,f3_hz,f4_hz,f5_hz,on1,on2,on3,on4,on5";
constexpr std::size_t kColumns = 19;

void put(std::string& line, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%.6f", v);
  line += buf;
}

double round_trip(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::strtod(buf, nullptr);
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ParseError(line, "not a number: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

RawRecord quantize(const RawRecord& r) {
  RawRecord q = r;
  q.intake_m3h = round_trip(r.intake_m3h);
  q.outflow_m3h = round_trip(r.outflow_m3h);
  q.level_m = round_trip(r.level_m);
  for (std::size_t i = 0; i < kPumps; ++i) {
    q.power_kw[i] = round_trip(r.power_kw[i]);
    q.freq_hz[i] = round_trip(r.freq_hz[i]);
  }
  return q;
}

void write_csv(const std::vector<RawRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << kHeader << '\n';
  std::string line;
  for (const RawRecord& r : records) {
    line = format_iso(r.timestamp);
    put(line, r.intake_m3h);
    put(line, r.outflow_m3h);
    put(line, r.level_m);
    for (double p : r.power_kw) put(line, p);
    for (double f : r.freq_hz) put(line, f);
    for (bool on : r.online) line += on ? ",1" : ",0";
    out << line << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<RawRecord> read_csv(const std::filesystem::path& path, const PlantConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError(1, "unexpected header");

  std::vector<RawRecord> out;
  std::size_t lineno = 1;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != kColumns) {
      throw ParseError(lineno, "expected 19 fields, got " + std::to_string(fields.size()));
    }
    RawRecord r;
    try {
      r.timestamp = parse_iso(fields[0]);
    } catch (const DomainError& e) {
      throw ParseError(lineno, e.what());
    }
    r.intake_m3h = parse_double(fields[1], lineno);
    r.outflow_m3h = parse_double(fields[2], lineno);
    r.level_m = parse_double(fields[3], lineno);
    for (std::size_t i = 0; i < kPumps; ++i) {
      r.power_kw[i] = parse_double(fields[4 + i], lineno);
      r.freq_hz[i] = parse_double(fields[9 + i], lineno);
      const std::string_view on = fields[14 + i];
      if (on != "0" && on != "1") throw ParseError(lineno, "online flag must be 0 or 1");
      r.online[i] = on == "1";
    }
    if (r.intake_m3h < 0.0) throw ParseError(lineno, "negative intake");
    if (r.outflow_m3h < 0.0) throw ParseError(lineno, "negative outflow");
    if (r.level_m < 0.0 || r.level_m > cfg.tank_max_m) throw ParseError(lineno, "level out of range");
    for (std::size_t i = 0; i < kPumps; ++i) {
      if (r.power_kw[i] < 0.0 || r.power_kw[i] > cfg.rated_power_kw) throw ParseError(lineno, "pump power out of range");
      if (r.power_kw[i] > 0.0 && !r.online[i]) throw ParseError(lineno, "pump running while offline");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace wwps::synth
