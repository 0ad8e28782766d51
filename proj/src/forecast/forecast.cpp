#include "wwps/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "wwps/error.hpp"
#include "wwps/kernels.hpp"
#include "wwps/model_io.hpp"
#include "wwps/parallel.hpp"

namespace wwps::forecast {

using features::kColumnCount;
using Row = std::array<double, kColumnCount>;

std::string_view family_name(Family f) {
  switch (f) {
    case Family::kLqr: return "lqr";
    case Family::kGbt: return "gbt";
    case Family::kPersistence: return "persistence";
    case Family::kCondByHour: return "cond_by_hour";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::kLqr, Family::kGbt, Family::kPersistence, Family::kCondByHour}) {
    if (family_name(f) == name) return f;
  }
  throw ValidationError("unknown forecast family '" + std::string(name) + "'");
}

double pinball(double y, double q, double alpha) {
  const double u = y - q;
  return u >= 0.0 ? alpha * u : (alpha - 1.0) * u;
}

void repair_crossings(std::vector<double>& values) { std::sort(values.begin(), values.end()); }

std::string feature_schema_hash(const ForecastConfig& cfg) {
  std::string text;
  for (const auto& name : features::column_names()) text += name + ";";
  char buf[128];
  std::snprintf(buf, sizeof buf, "lags=%zu;horizons=%zu;eps=%.17g;step=120", cfg.lags, cfg.horizons,
                cfg.god_epsilon_m3h);
  text += buf;
  return hex64(fnv1a(text));
}

ColumnSet all_columns() {
  ColumnSet c(kColumnCount);
  for (std::size_t i = 0; i < kColumnCount; ++i) c[i] = i;
  return c;
}

// ---------------------------------------------------------------- LQR

std::size_t LinearQuantileModel::design_width() const {
  std::size_t w = 1;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    w += features::is_calendar(columns[j]) ? (levels[j].empty() ? 0 : levels[j].size() - 1) : 1;
  }
  return w;
}

namespace {

void fill_design(const LinearQuantileModel& m, const Row& x, double* out) {
  std::size_t p = 0;
  out[p++] = 1.0;
  for (std::size_t j = 0; j < m.columns.size(); ++j) {
    const double v = x[m.columns[j]];
    if (features::is_calendar(m.columns[j])) {
      const auto& lv = m.levels[j];
      for (std::size_t l = 1; l < lv.size(); ++l) out[p++] = static_cast<int>(v) == lv[l] ? 1.0 : 0.0;
    } else {
      out[p++] = (v - m.mean[j]) / m.scale[j];
    }
  }
}

double mean_pinball(const Eigen::VectorXd& r, double alpha) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += r[i] >= 0.0 ? alpha * r[i] : (alpha - 1.0) * r[i];
  return s / static_cast<double>(r.size());
}

}  // namespace

double LinearQuantileModel::predict(const Row& x) const {
  std::vector<double> d(design_width());
  fill_design(*this, x, d.data());
  return kernels::dot(d, coef);
}

nlohmann::json LinearQuantileModel::to_json() const {
  return {{"alpha", alpha},   {"columns", columns}, {"mean", mean},
          {"scale", scale},   {"levels", levels},   {"coef", coef},
          {"rank_deficient", rank_deficient}, {"iterations", iterations}};
}

LinearQuantileModel LinearQuantileModel::from_json(const nlohmann::json& doc) {
  LinearQuantileModel m;
  m.alpha = doc.at("alpha").get<double>();
  m.columns = doc.at("columns").get<ColumnSet>();
  m.mean = doc.at("mean").get<std::vector<double>>();
  m.scale = doc.at("scale").get<std::vector<double>>();
  m.levels = doc.at("levels").get<std::vector<std::vector<int>>>();
  m.coef = doc.at("coef").get<std::vector<double>>();
  m.rank_deficient = doc.at("rank_deficient").get<bool>();
  m.iterations = doc.at("iterations").get<std::size_t>();
  for (std::size_t c : m.columns) {
    if (c >= kColumnCount) throw SchemaMismatchError("linear model column out of range");
  }
  if (m.mean.size() != m.columns.size() || m.scale.size() != m.columns.size() ||
      m.levels.size() != m.columns.size() || m.coef.size() != m.design_width()) {
    throw SchemaMismatchError("linear model shape mismatch");
  }
  return m;
}

LinearQuantileModel fit_lqr(const FeatureTable& table, double alpha, const ForecastConfig& cfg,
                            const ColumnSet& columns, const LinearQuantileModel* warm) {
  const std::size_t n = table.size();
  if (n < cfg.min_rows) {
    throw InsufficientDataError("fit_lqr: need " + std::to_string(cfg.min_rows) + " rows, got " +
                                std::to_string(n));
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("fit_lqr: alpha must lie in (0, 1)");

  LinearQuantileModel m;
  m.alpha = alpha;
  m.columns = columns;
  m.mean.assign(columns.size(), 0.0);
  m.scale.assign(columns.size(), 1.0);
  m.levels.assign(columns.size(), {});
  std::vector<Row> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = table.rows[i].to_array();
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const std::size_t c = columns[j];
    if (c >= kColumnCount) throw ValidationError("fit_lqr: column index out of range");
    if (features::is_calendar(c)) {
      std::set<int> seen;
      for (const Row& x : xs) seen.insert(static_cast<int>(x[c]));
      m.levels[j].assign(seen.begin(), seen.end());
    } else {
      double s = 0.0, s2 = 0.0;
      for (const Row& x : xs) s += x[c];
      const double mu = s / static_cast<double>(n);
      for (const Row& x : xs) s2 += (x[c] - mu) * (x[c] - mu);
      const double sd = std::sqrt(s2 / static_cast<double>(n));
      m.mean[j] = mu;
      m.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
  }

  const std::size_t p = m.design_width();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  {
    std::vector<double> d(p);
    for (std::size_t i = 0; i < n; ++i) {
      fill_design(m, xs[i], d.data());
      for (std::size_t k = 0; k < p; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d[k];
      y[static_cast<Eigen::Index>(i)] = table.rows[i].target;
    }
  }

  // Rank check on the unweighted Gram matrix.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / static_cast<double>(n));
  gram = gram.selfadjointView<Eigen::Lower>();
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const auto ev = eig.eigenvalues();
    m.rank_deficient = ev.minCoeff() <= 1e-10 * std::max(1.0, ev.maxCoeff());
  }

  auto solve = [&](const Eigen::VectorXd& w) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    const Eigen::MatrixXd xw = X.array().colwise() * w.array().sqrt();
    g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    g = g.selfadjointView<Eigen::Lower>();
    Eigen::VectorXd rhs = X.transpose() * (w.array() * y.array()).matrix();
    if (m.rank_deficient) {
      const double ridge = std::max(cfg.lqr_ridge, 1e-12) * g.trace() / static_cast<double>(p);
      for (std::size_t k = 1; k < p; ++k) g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += ridge;
      g(0, 0) += 1e-12 * g.trace();
    }
    return Eigen::VectorXd(g.ldlt().solve(rhs));
  };

  Eigen::VectorXd beta;
  if (warm != nullptr && warm->coef.size() == p) {
    beta = Eigen::Map<const Eigen::VectorXd>(warm->coef.data(), static_cast<Eigen::Index>(p));
  } else {
    beta = solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)));
  }

  Eigen::VectorXd r = y - X * beta;
  double loss = mean_pinball(r, alpha);
  const double spread = r.cwiseAbs().mean();
  const double delta = std::max(1e-9, 1e-6 * spread);
  Eigen::VectorXd best = beta;
  double best_loss = loss;
  std::size_t it = 0;
  while (it < cfg.lqr_max_iterations && loss > 0.0) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w[i] = (r[i] >= 0.0 ? alpha : 1.0 - alpha) / std::max(std::abs(r[i]), delta);
    }
    beta = solve(w);
    ++it;
    r = y - X * beta;
    const double next = mean_pinball(r, alpha);
    if (!std::isfinite(next)) break;
    if (next < best_loss) {
      best_loss = next;
      best = beta;
    }
    const bool done = std::abs(loss - next) <= cfg.lqr_tolerance * std::max(loss, 1e-300);
    loss = next;
    if (done) break;
  }
  m.iterations = it;
  m.coef.assign(best.data(), best.data() + best.size());
  return m;
}

// ---------------------------------------------------------------- GBT

Matrix design_matrix(const FeatureTable& table) {
  Matrix x(table.size(), kColumnCount);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Row r = table.rows[i].to_array();
    std::copy(r.begin(), r.end(), x.row(i).begin());
  }
  return x;
}

namespace {

std::vector<double> targets(const FeatureTable& table) {
  std::vector<double> y(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) y[i] = table.rows[i].target;
  return y;
}

std::vector<double> tree_targets(const FeatureTable& table, TreeTarget target) {
  auto y = targets(table);
  if (target == TreeTarget::kChangeFromLast) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= table.rows[i].lags[0];
  }
  return y;
}

}  // namespace

double QuantileTreeModel::predict(const Row& x) const {
  const double v = ensemble.predict(x);
  return target == TreeTarget::kChangeFromLast ? x[features::kLag1] + v : v;
}

nlohmann::json QuantileTreeModel::to_json() const {
  nlohmann::json doc = ensemble.to_json();
  doc["target"] = target == TreeTarget::kLevel ? "level" : "change_from_last";
  return doc;
}

QuantileTreeModel QuantileTreeModel::from_json(const nlohmann::json& doc) {
  QuantileTreeModel m;
  const std::string t = doc.at("target").get<std::string>();
  if (t != "level" && t != "change_from_last") throw SchemaMismatchError("unknown tree target '" + t + "'");
  m.target = t == "level" ? TreeTarget::kLevel : TreeTarget::kChangeFromLast;
  m.ensemble = gbt::Ensemble::from_json(doc);
  if (m.ensemble.n_features != kColumnCount) throw SchemaMismatchError("tree model feature count mismatch");
  return m;
}

QuantileTreeModel fit_gbt_quantile(const FeatureTable& table, double alpha, const GbtParams& hp,
                                   std::size_t min_rows, TreeTarget target) {
  if (table.size() < min_rows) {
    throw InsufficientDataError("fit_gbt_quantile: need " + std::to_string(min_rows) + " rows, got " +
                                std::to_string(table.size()));
  }
  const gbt::BinnedMatrix binned(design_matrix(table), hp.max_bins);
  return {target, gbt::fit(binned, tree_targets(table, target), hp, gbt::Loss::kQuantile, alpha)};
}

// ---------------------------------------------------------------- benchmarks

std::vector<double> persistence(const UniformSeries& series, std::size_t t, std::size_t horizons) {
  if (t >= series.size() || !series.present(t)) {
    throw InsufficientDataError("persistence: W_t is not observed at index " + std::to_string(t));
  }
  return std::vector<double>(horizons, series.values[t]);
}

std::vector<double> CondByHour::forecast(Timestamp target) const {
  const auto& h = hourly[static_cast<std::size_t>(calendar_of(target).hour)];
  return h.empty() ? global : h;
}

nlohmann::json CondByHour::to_json() const {
  nlohmann::json hours = nlohmann::json::array();
  for (const auto& h : hourly) hours.push_back(h);
  return {{"alphas", alphas}, {"hourly", hours}, {"global", global}};
}

CondByHour CondByHour::from_json(const nlohmann::json& doc) {
  CondByHour c;
  c.alphas = doc.at("alphas").get<std::vector<double>>();
  c.global = doc.at("global").get<std::vector<double>>();
  const auto& hours = doc.at("hourly");
  if (hours.size() != 24 || c.global.size() != c.alphas.size()) throw SchemaMismatchError("hourly model shape");
  for (std::size_t i = 0; i < 24; ++i) {
    c.hourly[i] = hours[i].get<std::vector<double>>();
    if (!c.hourly[i].empty() && c.hourly[i].size() != c.alphas.size()) {
      throw SchemaMismatchError("hourly model shape");
    }
  }
  return c;
}

CondByHour cond_by_hour(const UniformSeries& series, std::span<const double> alphas, std::optional<std::size_t> end) {
  const std::size_t stop = std::min(series.size(), end.value_or(series.size()));
  std::array<std::vector<double>, 24> by_hour;
  std::vector<double> all;
  for (std::size_t i = 0; i < stop; ++i) {
    if (!series.present(i)) continue;
    by_hour[static_cast<std::size_t>(calendar_of(series.time_at(i)).hour)].push_back(series.values[i]);
    all.push_back(series.values[i]);
  }
  const std::size_t week = 7 * 86400 / static_cast<std::size_t>(series.step_seconds);
  if (all.size() < week) {
    throw InsufficientDataError("cond_by_hour: need at least 7 days of observations, got " +
                                std::to_string(all.size()) + " points");
  }
  CondByHour c;
  c.alphas.assign(alphas.begin(), alphas.end());
  for (double a : alphas) c.global.push_back(gbt::quantile(all, a));
  for (std::size_t h = 0; h < 24; ++h) {
    if (by_hour[h].empty()) continue;
    for (double a : alphas) c.hourly[h].push_back(gbt::quantile(by_hour[h], a));
  }
  return c;
}

// ---------------------------------------------------------------- model sets

std::size_t ModelSet::submodel_count() const {
  std::size_t n = 0;
  for (const auto& h : lqr) n += h.size();
  for (const auto& h : trees) n += h.size();
  return n;
}

nlohmann::json ModelSet::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  if (family == Family::kLqr) {
    for (const auto& h : lqr) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& m : h) row.push_back(m.to_json());
      models.push_back(std::move(row));
    }
  } else if (family == Family::kGbt) {
    for (const auto& h : trees) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& m : h) row.push_back(m.to_json());
      models.push_back(std::move(row));
    }
  }
  nlohmann::json doc = {{"family", family_name(family)},
                        {"alphas", alphas},
                        {"horizons", horizons},
                        {"schema_hash", schema_hash},
                        {"seed", seed},
                        {"hyperparameters",
                         {{"trees", gbt.trees},
                          {"depth", gbt.depth},
                          {"learning_rate", gbt.learning_rate},
                          {"min_leaf", gbt.min_leaf},
                          {"max_bins", gbt.max_bins}}},
                        {"models", std::move(models)}};
  if (family == Family::kCondByHour) doc["hourly"] = hourly.to_json();
  return doc;
}

ModelSet ModelSet::from_json(const nlohmann::json& doc) {
  try {
    ModelSet s;
    s.family = parse_family(doc.at("family").get<std::string>());
    s.alphas = doc.at("alphas").get<std::vector<double>>();
    s.horizons = doc.at("horizons").get<std::size_t>();
    s.schema_hash = doc.at("schema_hash").get<std::string>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    const auto& hp = doc.at("hyperparameters");
    s.gbt = GbtParams{hp.at("trees").get<std::size_t>(), hp.at("depth").get<std::size_t>(),
                      hp.at("learning_rate").get<double>(), hp.at("min_leaf").get<std::size_t>(),
                      hp.at("max_bins").get<std::size_t>()};
    const auto& models = doc.at("models");
    if (s.family == Family::kLqr || s.family == Family::kGbt) {
      if (models.size() != s.horizons) throw SchemaMismatchError("model set horizon count mismatch");
      for (const auto& h : models) {
        if (h.size() != s.alphas.size()) throw SchemaMismatchError("model set quantile count mismatch");
        if (s.family == Family::kLqr) {
          auto& row = s.lqr.emplace_back();
          for (const auto& m : h) row.push_back(LinearQuantileModel::from_json(m));
        } else {
          auto& row = s.trees.emplace_back();
          for (const auto& m : h) row.push_back(QuantileTreeModel::from_json(m));
        }
      }
    }
    if (s.family == Family::kCondByHour) s.hourly = CondByHour::from_json(doc.at("hourly"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(std::string("model set document: ") + e.what());
  }
}

void ModelSet::save(const std::filesystem::path& path) const { save_sealed(path, to_json(), "forecast_model_set"); }

ModelSet ModelSet::load(const std::filesystem::path& path, std::string_view expected_schema) {
  ModelSet s = from_json(load_sealed(path, "forecast_model_set"));
  if (s.schema_hash != expected_schema) {
    throw SchemaMismatchError("feature schema " + s.schema_hash + " does not match " + std::string(expected_schema));
  }
  return s;
}

namespace {

// Quantiles for horizon index k (0-based) before crossing repair.
std::vector<double> raw_quantiles(const ModelSet& set, std::size_t k, const FeatureRow& row,
                                  const UniformSeries& series, std::size_t t) {
  switch (set.family) {
    case Family::kLqr: {
      const Row x = row.to_array();
      std::vector<double> q;
      for (const auto& m : set.lqr[k]) q.push_back(m.predict(x));
      return q;
    }
    case Family::kGbt: {
      const Row x = row.to_array();
      std::vector<double> q;
      for (const auto& m : set.trees[k]) q.push_back(m.predict(x));
      return q;
    }
    case Family::kPersistence:
      return std::vector<double>(set.alphas.size(), persistence(series, t, 1)[0]);
    case Family::kCondByHour:
      return set.hourly.forecast(series.time_at(t + k + 1));
  }
  return {};
}

}  // namespace

std::vector<QuantileForecast> predict(const ModelSet& set, std::span<const FeatureRow> rows,
                                      std::string_view schema_hash, const UniformSeries& series, std::size_t t) {
  if (schema_hash != set.schema_hash) {
    throw SchemaMismatchError("feature schema " + std::string(schema_hash) + " does not match training schema " +
                              set.schema_hash);
  }
  if (rows.size() != set.horizons) {
    throw SchemaMismatchError("expected feature rows for " + std::to_string(set.horizons) + " horizons, got " +
                              std::to_string(rows.size()));
  }
  std::vector<QuantileForecast> out;
  out.reserve(set.horizons);
  for (std::size_t k = 0; k < set.horizons; ++k) {
    QuantileForecast f{series.time_at(t), k + 1, raw_quantiles(set, k, rows[k], series, t)};
    repair_crossings(f.values);
    out.push_back(std::move(f));
  }
  return out;
}

std::optional<std::vector<QuantileForecast>> predict_at(const ModelSet& set, const UniformSeries& series,
                                                        std::size_t t, const ForecastConfig& cfg) {
  std::vector<FeatureRow> rows;
  const bool needs_features = set.family == Family::kLqr || set.family == Family::kGbt;
  for (std::size_t k = 1; k <= set.horizons; ++k) {
    if (!needs_features) {
      rows.emplace_back();
      continue;
    }
    auto row = features::launch_features(series, t, k, cfg.god_epsilon_m3h);
    if (!row) return std::nullopt;
    rows.push_back(*row);
  }
  if (set.family == Family::kPersistence && (t >= series.size() || !series.present(t))) return std::nullopt;
  return predict(set, rows, feature_schema_hash(cfg), series, t);
}

Split split_tables(const UniformSeries& series, const ForecastConfig& cfg) {
  Split s;
  s.boundary = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(series.size())));
  auto tables = features::build_matrix(series, cfg.horizons, cfg.god_epsilon_m3h);
  for (auto& table : tables) {
    FeatureTable tr, va;
    tr.horizon = va.horizon = table.horizon;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const std::size_t t = table.launch[i];
      if (t + table.horizon < s.boundary) {
        tr.launch.push_back(t);
        tr.rows.push_back(table.rows[i]);
      } else if (t >= s.boundary) {
        va.launch.push_back(t);
        va.rows.push_back(table.rows[i]);
      }
    }
    s.train.push_back(std::move(tr));
    s.valid.push_back(std::move(va));
  }
  return s;
}

ModelSet fit_model_set(Family family, const Split& split, const UniformSeries& series, const ForecastConfig& cfg,
                       std::uint64_t seed, std::size_t workers) {
  ModelSet set;
  set.family = family;
  set.alphas = cfg.quantile_grid();
  set.horizons = cfg.horizons;
  set.schema_hash = feature_schema_hash(cfg);
  set.seed = seed;
  set.gbt = cfg.gbt;
  if (split.train.size() != cfg.horizons) throw ValidationError("fit_model_set: split does not cover all horizons");
  switch (family) {
    case Family::kLqr:
      set.lqr.resize(cfg.horizons);
      parallel_for(cfg.horizons, workers, [&](std::size_t k) {
        const LinearQuantileModel* warm = nullptr;
        auto& row = set.lqr[k];
        row.reserve(set.alphas.size());
        for (double a : set.alphas) {
          row.push_back(fit_lqr(split.train[k], a, cfg, all_columns(), warm));
          warm = &row.back();
        }
      });
      break;
    case Family::kGbt:
      set.trees.resize(cfg.horizons);
      parallel_for(cfg.horizons, workers, [&](std::size_t k) {
        const FeatureTable& table = split.train[k];
        if (table.size() < cfg.min_rows) {
          throw InsufficientDataError("fit_gbt_quantile: need " + std::to_string(cfg.min_rows) + " rows, got " +
                                      std::to_string(table.size()));
        }
        const gbt::BinnedMatrix binned(design_matrix(table), cfg.gbt.max_bins);
        const auto y = tree_targets(table, TreeTarget::kChangeFromLast);
        for (double a : set.alphas) {
          set.trees[k].push_back({TreeTarget::kChangeFromLast, gbt::fit(binned, y, cfg.gbt, gbt::Loss::kQuantile, a)});
        }
      });
      break;
    case Family::kCondByHour:
      set.hourly = cond_by_hour(series, set.alphas, split.boundary);
      break;
    case Family::kPersistence:
      break;
  }
  return set;
}

// ---------------------------------------------------------------- metrics

namespace {

void check_aligned(std::span<const QuantileForecast> f, std::span<const double> obs, std::span<const double> alphas) {
  if (f.empty()) throw InsufficientDataError("metric: empty input");
  if (f.size() != obs.size()) throw ValidationError("metric: forecasts and observations differ in length");
  for (const auto& q : f) {
    if (q.values.size() != alphas.size()) throw ValidationError("metric: quantile count does not match alphas");
  }
}

std::size_t index_of(std::span<const double> alphas, double a) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (std::abs(alphas[i] - a) < 1e-9) return i;
  }
  return alphas.size();
}

}  // namespace

double metric_mae(std::span<const QuantileForecast> forecasts, std::span<const double> observations,
                  std::span<const double> alphas) {
  check_aligned(forecasts, observations, alphas);
  const std::size_t m = index_of(alphas, 0.5);
  if (m == alphas.size()) throw ValidationError("metric_mae: alpha grid lacks the median");
  double s = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) s += std::abs(observations[i] - forecasts[i].values[m]);
  return s / static_cast<double>(forecasts.size());
}

double metric_crps(std::span<const QuantileForecast> forecasts, std::span<const double> observations,
                   std::span<const double> alphas) {
  check_aligned(forecasts, observations, alphas);
  std::vector<double> q(forecasts.size());
  double total = 0.0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (std::size_t i = 0; i < forecasts.size(); ++i) q[i] = forecasts[i].values[a];
    total += kernels::pinball_sum(observations, q, alphas[a]);
  }
  return 2.0 * total / static_cast<double>(forecasts.size() * alphas.size());
}

std::vector<double> metric_calibration(std::span<const QuantileForecast> forecasts,
                                       std::span<const double> observations, std::span<const double> alphas) {
  check_aligned(forecasts, observations, alphas);
  std::vector<double> out(alphas.size(), 0.0);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) hits += observations[i] <= forecasts[i].values[a] ? 1 : 0;
    out[a] = static_cast<double>(hits) / static_cast<double>(forecasts.size()) - alphas[a];
  }
  return out;
}

std::vector<double> metric_sharpness(std::span<const QuantileForecast> forecasts,
                                     std::span<const double> observations, std::span<const double> alphas) {
  check_aligned(forecasts, observations, alphas);
  std::vector<double> out;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    if (alphas[a] >= 0.5 - 1e-9) continue;
    const std::size_t b = index_of(alphas, 1.0 - alphas[a]);
    if (b == alphas.size()) continue;
    double s = 0.0;
    for (const auto& f : forecasts) s += f.values[b] - f.values[a];
    out.push_back(s / static_cast<double>(forecasts.size()));
  }
  return out;
}

double Evaluation::mean_crps() const {
  double s = 0.0;
  for (const auto& h : horizons) s += h.crps;
  return s / static_cast<double>(horizons.size());
}

double Evaluation::mean_mae(std::size_t from) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& h : horizons) {
    if (h.horizon < from) continue;
    s += h.mae;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

Evaluation evaluate(const ModelSet& set, const Split& split, const UniformSeries& series,
                    const ForecastConfig& cfg) {
  (void)cfg;
  Evaluation ev;
  ev.family = set.family;
  std::vector<QuantileForecast> pooled;
  std::vector<double> pooled_obs;
  for (std::size_t k = 0; k < set.horizons; ++k) {
    const FeatureTable& table = split.valid[k];
    std::vector<QuantileForecast> fs;
    std::vector<double> obs;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const std::size_t t = table.launch[i];
      // Every family is scored on the same launches, which requires W_t for persistence.
      if (!series.present(t)) continue;
      QuantileForecast f{series.time_at(t), k + 1, raw_quantiles(set, k, table.rows[i], series, t)};
      repair_crossings(f.values);
      fs.push_back(std::move(f));
      obs.push_back(table.rows[i].target);
    }
    ev.horizons.push_back({k + 1, metric_mae(fs, obs, set.alphas), metric_crps(fs, obs, set.alphas)});
    pooled.insert(pooled.end(), fs.begin(), fs.end());
    pooled_obs.insert(pooled_obs.end(), obs.begin(), obs.end());
  }
  ev.calibration = metric_calibration(pooled, pooled_obs, set.alphas);
  ev.sharpness = metric_sharpness(pooled, pooled_obs, set.alphas);
  for (double a : set.alphas) {
    if (a < 0.5 - 1e-9 && index_of(set.alphas, 1.0 - a) < set.alphas.size()) ev.sharpness_alphas.push_back(a);
  }
  return ev;
}

std::vector<std::pair<std::string, ColumnSet>> ablation_sets() {
  using namespace features;
  const ColumnSet lags = {0, 1, 2, 3, 4, 5, 6, 7};
  const ColumnSet cal = {kHour, kWday, kMonth};
  auto join = [](std::initializer_list<ColumnSet> parts) {
    ColumnSet out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  return {{"M1", {kHour}},
          {"M2", {kLag24h}},
          {"M3", lags},
          {"M4", cal},
          {"M5", join({cal, {kCot}})},
          {"M6", join({cal, {kGod}})},
          {"M7", join({cal, lags, {kLag24h}})},
          {"M8", join({cal, lags, {kLag24h, kCot}})},
          {"M9", join({cal, lags, {kLag24h, kGod}})},
          {"M10", join({cal, lags, {kLag24h, kCot, kGod}})}};
}

std::vector<AblationRow> ablation_study(const Split& split, const ForecastConfig& cfg, std::size_t workers) {
  const auto sets = ablation_sets();
  const auto alphas = cfg.quantile_grid();
  const FeatureTable& train = split.train.at(0);
  const FeatureTable& valid = split.valid.at(0);
  std::vector<AblationRow> rows(sets.size());
  parallel_for(sets.size(), workers, [&](std::size_t s) {
    std::vector<LinearQuantileModel> models;
    models.reserve(alphas.size());
    for (double a : alphas) models.push_back(fit_lqr(train, a, cfg, sets[s].second, models.empty() ? nullptr : &models.back()));
    std::vector<QuantileForecast> fs;
    std::vector<double> obs;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      const Row x = valid.rows[i].to_array();
      QuantileForecast f{Timestamp{}, 1, {}};
      for (const auto& m : models) f.values.push_back(m.predict(x));
      repair_crossings(f.values);
      fs.push_back(std::move(f));
      obs.push_back(valid.rows[i].target);
    }
    rows[s] = {sets[s].first, sets[s].second, metric_mae(fs, obs, alphas), metric_crps(fs, obs, alphas)};
  });
  return rows;
}

// ---------------------------------------------------------------- CSV

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

std::string num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

void write_forecasts_csv(std::span<const QuantileForecast> forecasts, std::span<const double> alphas,
                         const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "issue_time,horizon";
  for (double a : alphas) out << ",q" << num(a, "%.2f");
  out << '\n';
  for (const auto& f : forecasts) {
    out << format_iso(f.issue_time) << ',' << f.horizon;
    for (double v : f.values) out << ',' << num(v, "%.3f");
    out << '\n';
  }
}

void write_evaluation_csv(std::span<const Evaluation> evals, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "family,horizon,mae,crps\n";
  for (const auto& e : evals) {
    for (const auto& h : e.horizons) {
      out << family_name(e.family) << ',' << h.horizon << ',' << num(h.mae) << ',' << num(h.crps) << '\n';
    }
  }
}

void write_calibration_csv(std::span<const Evaluation> evals, std::span<const double> alphas,
                           const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "family,alpha,calibration,interval_width\n";
  for (const auto& e : evals) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      out << family_name(e.family) << ',' << num(alphas[a], "%.2f") << ',' << num(e.calibration[a]) << ',';
      for (std::size_t s = 0; s < e.sharpness_alphas.size(); ++s) {
        if (std::abs(e.sharpness_alphas[s] - alphas[a]) < 1e-9) out << num(e.sharpness[s]);
      }
      out << '\n';
    }
  }
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "model,features,mae,crps\n";
  for (const auto& r : rows) {
    out << r.name << ',';
    for (std::size_t i = 0; i < r.columns.size(); ++i) {
      out << (i ? " " : "") << features::column_names()[r.columns[i]];
    }
    out << ',' << num(r.mae) << ',' << num(r.crps) << '\n';
  }
}

}  // namespace wwps::forecast
