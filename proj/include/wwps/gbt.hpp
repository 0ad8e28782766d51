#pragma once

// Gradient-boosted regression trees over histogram-binned features. Used with
// squared loss for the outflow emulator and with pinball loss for the quantile
// forecasters.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "wwps/config.hpp"
#include "wwps/matrix.hpp"

namespace wwps::gbt {

enum class Loss { kSquared, kQuantile };

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<Node> nodes;
  double predict(std::span<const double> x) const;
};

struct Ensemble {
  double base = 0.0;
  std::vector<Tree> trees;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const;
  nlohmann::json to_json() const;
  static Ensemble from_json(const nlohmann::json& doc);
};

// Per-feature quantile bin edges and the binned copy of a design matrix.
class BinnedMatrix {
 public:
  BinnedMatrix(const Matrix& x, std::size_t max_bins);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint8_t bin(std::size_t r, std::size_t c) const { return bins_[r * cols_ + c]; }
  std::size_t bin_count(std::size_t c) const { return edges_[c].size(); }
  // Upper edge (inclusive) of bin b of feature c.
  double upper_edge(std::size_t c, std::size_t b) const { return edges_[c][b]; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::vector<double>> edges_;
  std::vector<std::uint8_t> bins_;
};

// alpha is ignored for squared loss. With quantile loss every leaf takes the
// alpha-quantile of the residuals it holds.
Ensemble fit(const BinnedMatrix& x, std::span<const double> y, const GbtParams& params, Loss loss,
             double alpha = 0.5);

// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double alpha);

}  // namespace wwps::gbt
