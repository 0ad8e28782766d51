#include "wwps/emulator.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "wwps/error.hpp"
#include "wwps/features.hpp"
#include "wwps/isotonic.hpp"
#include "wwps/model_io.hpp"

namespace wwps::emulator {

std::vector<RawRecord> clean_training_records(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                              const EmulatorConfig& cfg, double fill_limit_minutes) {
  const auto grid = features::resample_records(records, plant, fill_limit_minutes);
  const auto per = static_cast<std::size_t>(std::max<std::int64_t>(1, cfg.resample_seconds / plant.step_seconds));
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i + per <= grid.records.size(); i += per) {
    bool ok = true;
    for (std::size_t j = i; j < i + per && ok; ++j) {
      ok = grid.records[j].has_value() && grid.records[j]->level_m <= plant.alarm_level_m;
    }
    if (!ok) continue;
    RawRecord avg = *grid.records[i];
    const double w = 1.0 / static_cast<double>(per);
    avg.intake_m3h = avg.outflow_m3h = avg.level_m = 0.0;
    avg.power_kw.fill(0.0);
    avg.online.fill(false);
    for (std::size_t j = i; j < i + per; ++j) {
      const RawRecord& r = *grid.records[j];
      avg.intake_m3h += w * r.intake_m3h;
      avg.outflow_m3h += w * r.outflow_m3h;
      avg.level_m += w * r.level_m;
      for (std::size_t p = 0; p < kPumps; ++p) {
        avg.power_kw[p] += w * r.power_kw[p];
        avg.online[p] = avg.online[p] || r.online[p];
      }
    }
    for (std::size_t p = 0; p < kPumps; ++p) avg.freq_hz[p] = synth::frequency_for_power(avg.power_kw[p], plant);
    out.push_back(avg);
  }
  return out;
}

std::array<double, kOutflowFeatures> outflow_features(const PumpVector& setpoints_kw, const PumpFlags& online,
                                                      double level_m) {
  std::array<double, kOutflowFeatures> x{};
  double total = 0.0, active = 0.0;
  for (std::size_t p = 0; p < kPumps; ++p) {
    x[p] = setpoints_kw[p];
    x[kPumps + p] = online[p] ? 1.0 : 0.0;
    total += setpoints_kw[p];
    active += setpoints_kw[p] > 0.0 ? 1.0 : 0.0;
  }
  x[2 * kPumps] = active;
  x[2 * kPumps + 1] = total;
  x[2 * kPumps + 2] = level_m;
  return x;
}

namespace {

// Interpolation weights of v on an ascending grid.
std::pair<std::size_t, double> locate(const std::vector<double>& grid, double v) {
  if (v <= grid.front()) return {0, 0.0};
  if (v >= grid.back()) return {grid.size() - 2, 1.0};
  const auto it = std::upper_bound(grid.begin(), grid.end(), v);
  const auto i = static_cast<std::size_t>(it - grid.begin()) - 1;
  return {i, (v - grid[i]) / (grid[i + 1] - grid[i])};
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace

double OutflowModel::predict(double total_power_kw, double level_m) const {
  const auto [i, u] = locate(grid_power_kw, total_power_kw);
  const auto [j, v] = locate(grid_level_m, level_m);
  const double a = at(j, i) + u * (at(j, i + 1) - at(j, i));
  const double b = at(j + 1, i) + u * (at(j + 1, i + 1) - at(j + 1, i));
  return a + v * (b - a);
}

double OutflowModel::predict_raw(const PumpVector& setpoints_kw, const PumpFlags& online, double level_m) const {
  const auto x = outflow_features(setpoints_kw, online, level_m);
  return ensemble.predict(x);
}

std::size_t OutflowModel::monotonicity_violations(std::size_t n_power, std::size_t n_level) const {
  const auto ps = linspace(grid_power_kw.front(), grid_power_kw.back(), n_power);
  const auto ls = linspace(grid_level_m.front(), grid_level_m.back(), n_level);
  std::size_t bad = 0;
  for (std::size_t j = 0; j < n_level; ++j) {
    for (std::size_t i = 0; i < n_power; ++i) {
      const double q = predict(ps[i], ls[j]);
      if (i > 0 && q < predict(ps[i - 1], ls[j])) ++bad;
      if (j > 0 && q < predict(ps[i], ls[j - 1])) ++bad;
    }
  }
  for (std::size_t j = 0; j < grid_level_m.size(); ++j) {
    for (std::size_t i = 0; i < grid_power_kw.size(); ++i) {
      if (i > 0 && at(j, i) < at(j, i - 1)) ++bad;
      if (j > 0 && at(j, i) < at(j - 1, i)) ++bad;
    }
  }
  return bad;
}

nlohmann::json OutflowModel::to_json() const {
  return {{"ensemble", ensemble.to_json()},
          {"grid_power_kw", grid_power_kw},
          {"grid_level_m", grid_level_m},
          {"table", table},
          {"min_fitted_power_kw", min_fitted_power_kw}};
}

OutflowModel OutflowModel::from_json(const nlohmann::json& doc) {
  try {
    OutflowModel m;
    m.ensemble = gbt::Ensemble::from_json(doc.at("ensemble"));
    m.grid_power_kw = doc.at("grid_power_kw").get<std::vector<double>>();
    m.grid_level_m = doc.at("grid_level_m").get<std::vector<double>>();
    m.table = doc.at("table").get<std::vector<double>>();
    m.min_fitted_power_kw = doc.at("min_fitted_power_kw").get<double>();
    if (m.ensemble.n_features != kOutflowFeatures || m.grid_power_kw.size() < 2 || m.grid_level_m.size() < 2 ||
        m.table.size() != m.grid_power_kw.size() * m.grid_level_m.size()) {
      throw SchemaMismatchError("outflow model shape mismatch");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(std::string("outflow model document: ") + e.what());
  }
}

OutflowModel fit_outflow(const std::vector<RawRecord>& cleaned, const PlantConfig& plant, const EmulatorConfig& cfg) {
  if (cleaned.size() < cfg.min_records) {
    throw InsufficientDataError("fit_outflow: need " + std::to_string(cfg.min_records) + " cleaned records, got " +
                                std::to_string(cleaned.size()));
  }
  if (cfg.outflow.depth > 3) throw ValidationError("fit_outflow: tree depth is limited to 3");
  Matrix x(cleaned.size(), kOutflowFeatures);
  std::vector<double> y(cleaned.size());
  double min_power = plant.installed_power_kw();
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    const auto f = outflow_features(cleaned[i].power_kw, cleaned[i].online, cleaned[i].level_m);
    std::copy(f.begin(), f.end(), x.row(i).begin());
    y[i] = cleaned[i].outflow_m3h;
    const double p = cleaned[i].total_power_kw();
    if (p > 0.0) min_power = std::min(min_power, p);
  }
  OutflowModel m;
  m.ensemble = gbt::fit(gbt::BinnedMatrix(x, cfg.outflow.max_bins), y, cfg.outflow, gbt::Loss::kSquared);
  m.min_fitted_power_kw = min_power;
  m.grid_power_kw = linspace(0.0, plant.installed_power_kw(), cfg.grid_power_points);
  m.grid_level_m = linspace(0.0, plant.tank_max_m, cfg.grid_level_points);
  const std::size_t np = m.grid_power_kw.size(), nl = m.grid_level_m.size();
  m.table.assign(np * nl, 0.0);

  // Probe the ensemble with the load shared evenly over the fewest pumps that can carry it.
  auto probe = [&](double total, double level) {
    PumpVector sp{};
    PumpFlags on{};
    on.fill(true);
    const auto n = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(total / plant.rated_power_kw - 1e-9)),
                                           1, kPumps);
    for (std::size_t p = 0; p < n; ++p) sp[p] = total / static_cast<double>(n);
    return std::max(0.0, m.ensemble.predict(outflow_features(sp, on, level)));
  };
  for (std::size_t j = 0; j < nl; ++j) {
    const double h = m.grid_level_m[j];
    const double q_min = probe(min_power, h);
    for (std::size_t i = 1; i < np; ++i) {
      const double p = m.grid_power_kw[i];
      // Below the lowest observed load, scale toward zero flow at zero power.
      m.table[j * np + i] = p < min_power ? q_min * p / min_power : probe(p, h);
    }
  }

  std::vector<double> line;
  for (std::size_t j = 0; j < nl; ++j) {
    line.assign(m.table.begin() + static_cast<std::ptrdiff_t>(j * np),
                m.table.begin() + static_cast<std::ptrdiff_t>((j + 1) * np));
    const auto fitted = isotonic_increasing(line);
    std::copy(fitted.begin(), fitted.end(), m.table.begin() + static_cast<std::ptrdiff_t>(j * np));
  }
  for (std::size_t i = 0; i < np; ++i) {
    line.resize(nl);
    for (std::size_t j = 0; j < nl; ++j) line[j] = m.table[j * np + i];
    const auto fitted = isotonic_increasing(line);
    for (std::size_t j = 0; j < nl; ++j) m.table[j * np + i] = fitted[j];
  }
  // PAVA along one axis can disturb the other; running maxima restore both exactly.
  for (std::size_t j = 0; j < nl; ++j) {
    m.table[j * np] = 0.0;
    for (std::size_t i = 1; i < np; ++i) m.table[j * np + i] = std::max(m.table[j * np + i], m.table[j * np + i - 1]);
  }
  for (std::size_t j = 1; j < nl; ++j) {
    for (std::size_t i = 0; i < np; ++i) m.table[j * np + i] = std::max(m.table[j * np + i], m.table[(j - 1) * np + i]);
  }
  return m;
}

double LevelModel::predict(double level_m, double intake_m3h, double outflow_m3h) const {
  return coef[0] + coef[1] * level_m + coef[2] * intake_m3h + coef[3] * outflow_m3h +
         coef[4] * (intake_m3h - outflow_m3h);
}

nlohmann::json LevelModel::to_json() const { return {{"coef", coef}, {"rank_deficient", rank_deficient}}; }

LevelModel LevelModel::from_json(const nlohmann::json& doc) {
  try {
    LevelModel m;
    m.coef = doc.at("coef").get<std::array<double, 5>>();
    m.rank_deficient = doc.at("rank_deficient").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(std::string("level model document: ") + e.what());
  }
}

LevelModel fit_level(const std::vector<std::optional<RawRecord>>& uniform, const PlantConfig& plant) {
  std::vector<std::array<double, 4>> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i + 1 < uniform.size(); ++i) {
    const auto& a = uniform[i];
    const auto& b = uniform[i + 1];
    if (!a || !b || a->level_m > plant.alarm_level_m || b->level_m > plant.alarm_level_m) continue;
    xs.push_back({a->level_m, a->intake_m3h, a->outflow_m3h, a->intake_m3h - a->outflow_m3h});
    ys.push_back(b->level_m);
  }
  if (xs.size() < 10) throw InsufficientDataError("fit_level: fewer than 10 usable transitions");
  const auto n = static_cast<Eigen::Index>(xs.size());
  std::array<double, 4> mean{}, scale{};
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const auto& x : xs) s += x[c];
    mean[c] = s / static_cast<double>(n);
    for (const auto& x : xs) s2 += (x[c] - mean[c]) * (x[c] - mean[c]);
    const double sd = std::sqrt(s2 / static_cast<double>(n));
    scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  Eigen::MatrixXd X(n, 5);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (std::size_t c = 0; c < 4; ++c) {
      X(i, static_cast<Eigen::Index>(c + 1)) = (xs[static_cast<std::size_t>(i)][c] - mean[c]) / scale[c];
    }
    y[i] = ys[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd g = X.transpose() * X / static_cast<double>(n);
  Eigen::VectorXd rhs = X.transpose() * y / static_cast<double>(n);
  LevelModel m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 1e-10 * eig.eigenvalues().maxCoeff()) {
    m.rank_deficient = true;
    for (Eigen::Index k = 1; k < 5; ++k) g(k, k) += 1e-9;
  }
  const Eigen::VectorXd b = g.ldlt().solve(rhs);
  m.coef[0] = b[0];
  for (std::size_t c = 0; c < 4; ++c) {
    m.coef[c + 1] = b[static_cast<Eigen::Index>(c + 1)] / scale[c];
    m.coef[0] -= m.coef[c + 1] * mean[c];
  }
  return m;
}

RewardConfig RewardConfig::from(const PpoConfig& ppo, const PlantConfig& plant) {
  return {ppo.r_plus, ppo.r_minus, ppo.level_band_low_m, plant.alarm_level_m, plant.installed_power_kw(),
          ppo.reward_scale};
}

Reward reward(double level_m, double total_power_kw, double c1, double c2, const RewardConfig& cfg) {
  Reward r;
  r.level_term = level_m >= cfg.band_low_m && level_m <= cfg.band_high_m ? cfg.r_plus : cfg.r_minus;
  r.power_term = -total_power_kw / cfg.installed_kw;
  r.raw = c1 * r.level_term + c2 * r.power_term;
  r.scaled = r.raw / cfg.scale;
  return r;
}

void Emulator::save(const std::filesystem::path& outflow_path, const std::filesystem::path& level_path) const {
  save_sealed(outflow_path, outflow.to_json(), "emulator_outflow");
  save_sealed(level_path, level.to_json(), "emulator_level");
}

Emulator Emulator::load(const std::filesystem::path& outflow_path, const std::filesystem::path& level_path,
                        const PlantConfig& plant) {
  Emulator e;
  e.plant = plant;
  e.outflow = OutflowModel::from_json(load_sealed(outflow_path, "emulator_outflow"));
  e.level = LevelModel::from_json(load_sealed(level_path, "emulator_level"));
  return e;
}

void check_action(const PumpVector& action_kw, const PumpFlags& online, const PlantConfig& plant) {
  for (std::size_t p = 0; p < kPumps; ++p) {
    const double a = action_kw[p];
    if (!(a >= 0.0 && a <= plant.rated_power_kw * (1.0 + 1e-12))) {
      throw ValidationError("action for pump " + std::to_string(p + 1) + " outside [0, rated]");
    }
    if (!online[p] && a != 0.0) throw ValidationError("action powers offline pump " + std::to_string(p + 1));
  }
}

namespace {

Transition finish(const EnvState& state, double next, double outflow, double total, double c1, double c2,
                  const RewardConfig& rcfg, const PlantConfig& plant) {
  Transition t;
  t.clipped = next < 0.0 || next > plant.tank_max_m;
  t.next_level_m = std::clamp(next, 0.0, plant.tank_max_m);
  t.outflow_m3h = outflow;
  t.total_power_kw = total;
  t.alarm = state.level_m <= plant.alarm_level_m && t.next_level_m > plant.alarm_level_m;
  t.below_floor = t.next_level_m < plant.safety_floor_m;
  t.reward = reward(t.next_level_m, total, c1, c2, rcfg);
  return t;
}

double total_of(const PumpVector& a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

}  // namespace

Transition env_step(const Emulator& emu, const EnvState& state, const PumpVector& action_kw, double c1, double c2,
                    const RewardConfig& rcfg) {
  check_action(action_kw, state.online, emu.plant);
  const double total = total_of(action_kw);
  const double outflow = emu.outflow.predict(total, state.level_m);
  const double next = emu.level.predict(state.level_m, state.intake_m3h, outflow);
  return finish(state, next, outflow, total, c1, c2, rcfg, emu.plant);
}

Transition plant_step(const PlantConfig& plant, const EnvState& state, const PumpVector& action_kw, double c1,
                      double c2, const RewardConfig& rcfg) {
  check_action(action_kw, state.online, plant);
  const double total = total_of(action_kw);
  const double outflow = synth::ground_truth_outflow(total, std::clamp(state.level_m, 0.0, plant.tank_max_m), plant);
  const double next = synth::mass_balance_step(state.level_m, state.intake_m3h, outflow, plant);
  return finish(state, next, outflow, total, c1, c2, rcfg, plant);
}

nlohmann::json FitReport::to_json() const {
  return {{"outflow_nmae", outflow_nmae},
          {"outflow_raw_nmae", outflow_raw_nmae},
          {"zero_power_max_m3h", zero_power_max_m3h},
          {"monotonicity_violations", monotonicity_violations},
          {"level_mae_m", level_mae_m},
          {"level_diff_coef", level_diff_coef},
          {"outflow_train_rows", outflow_train_rows},
          {"outflow_holdout_rows", outflow_holdout_rows},
          {"level_train_rows", level_train_rows},
          {"level_holdout_rows", level_holdout_rows},
          {"targets_met", targets_met}};
}

std::pair<Emulator, FitReport> fit_emulator(const std::vector<RawRecord>& records, const PlantConfig& plant,
                                            const EmulatorConfig& cfg, double fill_limit_minutes) {
  FitReport rep;
  Emulator emu;
  emu.plant = plant;

  const auto cleaned = clean_training_records(records, plant, cfg, fill_limit_minutes);
  const auto cut = static_cast<std::size_t>(std::floor((1.0 - cfg.holdout_fraction) * static_cast<double>(cleaned.size())));
  const std::vector<RawRecord> train(cleaned.begin(), cleaned.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<RawRecord> hold(cleaned.begin() + static_cast<std::ptrdiff_t>(cut), cleaned.end());
  if (hold.empty()) throw InsufficientDataError("fit_emulator: empty holdout");
  emu.outflow = fit_outflow(train, plant, cfg);
  rep.outflow_train_rows = train.size();
  rep.outflow_holdout_rows = hold.size();
  double err = 0.0, err_raw = 0.0;
  for (const auto& r : hold) {
    err += std::abs(emu.outflow.predict(r.total_power_kw(), r.level_m) - r.outflow_m3h);
    err_raw += std::abs(emu.outflow.predict_raw(r.power_kw, r.online, r.level_m) - r.outflow_m3h);
  }
  rep.outflow_nmae = err / static_cast<double>(hold.size()) / plant.intake_max_m3h;
  rep.outflow_raw_nmae = err_raw / static_cast<double>(hold.size()) / plant.intake_max_m3h;
  for (double h : emu.outflow.grid_level_m) {
    rep.zero_power_max_m3h = std::max(rep.zero_power_max_m3h, emu.outflow.predict(0.0, h));
  }
  rep.monotonicity_violations = emu.outflow.monotonicity_violations(50, 10);

  const auto grid = features::resample_records(records, plant, fill_limit_minutes);
  const auto lcut = static_cast<std::size_t>(
      std::floor((1.0 - cfg.holdout_fraction) * static_cast<double>(grid.records.size())));
  const std::vector<std::optional<RawRecord>> ltrain(grid.records.begin(),
                                                     grid.records.begin() + static_cast<std::ptrdiff_t>(lcut));
  emu.level = fit_level(ltrain, plant);
  double lerr = 0.0;
  std::size_t ln = 0;
  for (std::size_t i = lcut; i + 1 < grid.records.size(); ++i) {
    const auto& a = grid.records[i];
    const auto& b = grid.records[i + 1];
    if (!a || !b || a->level_m > plant.alarm_level_m || b->level_m > plant.alarm_level_m) continue;
    lerr += std::abs(emu.level.predict(a->level_m, a->intake_m3h, a->outflow_m3h) - b->level_m);
    ++ln;
  }
  if (ln == 0) throw InsufficientDataError("fit_emulator: empty level holdout");
  rep.level_mae_m = lerr / static_cast<double>(ln);
  rep.level_diff_coef = emu.level.coef[4];
  rep.level_train_rows = lcut;
  rep.level_holdout_rows = ln;
  rep.targets_met = rep.outflow_nmae <= cfg.nmae_target && rep.level_mae_m <= cfg.level_mae_target_m &&
                    rep.monotonicity_violations == 0;
  return {std::move(emu), rep};
}

}  // namespace wwps::emulator
