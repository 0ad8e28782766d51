#pragma once

// Multi-horizon quantile forecasting of the wastewater intake: linear quantile
// regression, gradient-boosted quantile trees, and the persistence and
// hour-of-day climatology benchmarks, plus the scoring rules used to compare them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wwps/config.hpp"
#include "wwps/features.hpp"
#include "wwps/gbt.hpp"

namespace wwps::forecast {

using features::FeatureRow;
using features::FeatureTable;
using features::UniformSeries;

enum class Family { kLqr, kGbt, kPersistence, kCondByHour };
std::string_view family_name(Family f);
Family parse_family(std::string_view name);

struct QuantileForecast {
  Timestamp issue_time{};
  std::size_t horizon = 1;
  std::vector<double> values;  // one per alpha, ascending
};

double pinball(double y, double q, double alpha);
// Sorts each forecast's quantiles into nondecreasing order.
void repair_crossings(std::vector<double>& values);

// Hash over everything that defines the feature layout.
std::string feature_schema_hash(const ForecastConfig& cfg);

using ColumnSet = std::vector<std::size_t>;
ColumnSet all_columns();

struct LinearQuantileModel {
  double alpha = 0.5;
  ColumnSet columns;
  // Numeric columns are standardized; calendar columns are one-hot over the
  // levels seen in training, first level dropped.
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<std::vector<int>> levels;
  std::vector<double> coef;  // intercept first
  bool rank_deficient = false;
  std::size_t iterations = 0;

  double predict(const std::array<double, features::kColumnCount>& x) const;
  std::size_t design_width() const;
  nlohmann::json to_json() const;
  static LinearQuantileModel from_json(const nlohmann::json& doc);
};

// Iteratively reweighted least squares on the pinball loss. warm supplies a
// starting coefficient vector with the same layout.
LinearQuantileModel fit_lqr(const FeatureTable& table, double alpha, const ForecastConfig& cfg,
                            const ColumnSet& columns = all_columns(), const LinearQuantileModel* warm = nullptr);

enum class TreeTarget {
  kLevel,        // W_{t+k}
  kChangeFromLast  // W_{t+k} - W_{t-1}; the prediction adds W_{t-1} back
};

struct QuantileTreeModel {
  TreeTarget target = TreeTarget::kLevel;
  gbt::Ensemble ensemble;

  double predict(const std::array<double, features::kColumnCount>& x) const;
  nlohmann::json to_json() const;
  static QuantileTreeModel from_json(const nlohmann::json& doc);
};

QuantileTreeModel fit_gbt_quantile(const FeatureTable& table, double alpha, const GbtParams& hp,
                                   std::size_t min_rows = 500, TreeTarget target = TreeTarget::kLevel);
Matrix design_matrix(const FeatureTable& table);

std::vector<double> persistence(const UniformSeries& series, std::size_t t, std::size_t horizons);

// Empirical quantiles of the intake by hour of day.
struct CondByHour {
  std::vector<double> alphas;
  std::array<std::vector<double>, 24> hourly;  // empty when the hour had no data
  std::vector<double> global;

  std::vector<double> forecast(Timestamp target) const;
  nlohmann::json to_json() const;
  static CondByHour from_json(const nlohmann::json& doc);
};
// Uses grid points [0, end) of the series.
CondByHour cond_by_hour(const UniformSeries& series, std::span<const double> alphas,
                        std::optional<std::size_t> end = std::nullopt);

struct ModelSet {
  Family family = Family::kGbt;
  std::vector<double> alphas;
  std::size_t horizons = 0;
  std::string schema_hash;
  std::uint64_t seed = 0;
  GbtParams gbt{};
  std::vector<std::vector<LinearQuantileModel>> lqr;  // [horizon][alpha]
  std::vector<std::vector<QuantileTreeModel>> trees;  // [horizon][alpha]
  CondByHour hourly;

  std::size_t submodel_count() const;
  nlohmann::json to_json() const;
  static ModelSet from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  // Rejects documents whose feature schema differs from expected_schema.
  static ModelSet load(const std::filesystem::path& path, std::string_view expected_schema);
};

// Forecasts for horizons 1..K issued at grid index t. rows holds the launch
// features per horizon (as produced by launch_features). Persistence reads W_t
// from the series.
std::vector<QuantileForecast> predict(const ModelSet& set, std::span<const FeatureRow> rows,
                                      std::string_view schema_hash, const UniformSeries& series, std::size_t t);
// Builds the launch rows itself; nullopt when the inputs around t are missing.
std::optional<std::vector<QuantileForecast>> predict_at(const ModelSet& set, const UniformSeries& series,
                                                        std::size_t t, const ForecastConfig& cfg);

// Chronological split of the launch grid.
struct Split {
  std::size_t boundary = 0;  // first validation launch index
  std::vector<FeatureTable> train;
  std::vector<FeatureTable> valid;
};
Split split_tables(const UniformSeries& series, const ForecastConfig& cfg);

ModelSet fit_model_set(Family family, const Split& split, const UniformSeries& series, const ForecastConfig& cfg,
                       std::uint64_t seed, std::size_t workers = 1);

// Scores. forecasts[i].values align with alphas; observations[i] is the realized value.
double metric_mae(std::span<const QuantileForecast> forecasts, std::span<const double> observations,
                  std::span<const double> alphas);
double metric_crps(std::span<const QuantileForecast> forecasts, std::span<const double> observations,
                   std::span<const double> alphas);
// Empirical coverage P(y <= q_alpha) minus alpha, per alpha.
std::vector<double> metric_calibration(std::span<const QuantileForecast> forecasts,
                                       std::span<const double> observations, std::span<const double> alphas);
// Mean width q_{1-a} - q_a for every alpha below 0.5 with a matching upper level.
std::vector<double> metric_sharpness(std::span<const QuantileForecast> forecasts,
                                     std::span<const double> observations, std::span<const double> alphas);

struct HorizonScore {
  std::size_t horizon = 0;
  double mae = 0.0;
  double crps = 0.0;
};

struct Evaluation {
  Family family = Family::kGbt;
  std::vector<HorizonScore> horizons;
  std::vector<double> calibration;  // per alpha, pooled over horizons
  std::vector<double> sharpness_alphas;
  std::vector<double> sharpness;

  double mean_crps() const;
  // Mean MAE over horizons >= from.
  double mean_mae(std::size_t from = 1) const;
};

Evaluation evaluate(const ModelSet& set, const Split& split, const UniformSeries& series,
                    const ForecastConfig& cfg);

struct AblationRow {
  std::string name;
  ColumnSet columns;
  double mae = 0.0;
  double crps = 0.0;
};
std::vector<std::pair<std::string, ColumnSet>> ablation_sets();
// LQR at horizon 1 over the ten feature combinations.
std::vector<AblationRow> ablation_study(const Split& split, const ForecastConfig& cfg, std::size_t workers = 1);

void write_forecasts_csv(std::span<const QuantileForecast> forecasts, std::span<const double> alphas,
                         const std::filesystem::path& path);
void write_evaluation_csv(std::span<const Evaluation> evals, const std::filesystem::path& path);
void write_calibration_csv(std::span<const Evaluation> evals, std::span<const double> alphas,
                           const std::filesystem::path& path);
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);

}  // namespace wwps::forecast
