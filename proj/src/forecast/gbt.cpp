#include "wwps/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wwps/error.hpp"

namespace wwps::gbt {

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const Node& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

double Ensemble::predict(std::span<const double> x) const {
  double s = base;
  for (const Tree& t : trees) s += t.predict(x);
  return s;
}

nlohmann::json Ensemble::to_json() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const Tree& t : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    trees_json.push_back(std::move(nodes));
  }
  return {{"base", base}, {"n_features", n_features}, {"trees", std::move(trees_json)}};
}

Ensemble Ensemble::from_json(const nlohmann::json& doc) {
  Ensemble e;
  e.base = doc.at("base").get<double>();
  e.n_features = doc.at("n_features").get<std::size_t>();
  for (const auto& tj : doc.at("trees")) {
    Tree t;
    for (const auto& nj : tj) {
      Node n{nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(), nj.at(3).get<int>(),
             nj.at(4).get<double>()};
      const auto size = static_cast<int>(tj.size());
      if (n.feature >= static_cast<int>(e.n_features) || (n.feature >= 0 && (n.left < 0 || n.left >= size ||
                                                                               n.right < 0 || n.right >= size))) {
        throw SchemaMismatchError("malformed tree node");
      }
      t.nodes.push_back(n);
    }
    if (t.nodes.empty()) throw SchemaMismatchError("empty tree");
    e.trees.push_back(std::move(t));
  }
  return e;
}

BinnedMatrix::BinnedMatrix(const Matrix& x, std::size_t max_bins)
    : rows_(x.rows), cols_(x.cols), edges_(x.cols), bins_(x.rows * x.cols) {
  std::vector<double> col;
  for (std::size_t c = 0; c < cols_; ++c) {
    col.resize(rows_);
    for (std::size_t r = 0; r < rows_; ++r) col[r] = x.at(r, c);
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    std::vector<double>& edges = edges_[c];
    if (col.size() <= max_bins) {
      edges = col;
    } else {
      for (std::size_t b = 1; b <= max_bins; ++b) {
        const std::size_t idx = std::min(col.size() - 1, (b * col.size()) / max_bins - 1);
        if (edges.empty() || col[idx] > edges.back()) edges.push_back(col[idx]);
      }
      edges.back() = col.back();
    }
    if (edges.empty()) edges.push_back(0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double v = x.at(r, c);
      const auto it = std::lower_bound(edges.begin(), edges.end(), v);
      bins_[r * cols_ + c] = static_cast<std::uint8_t>(
          std::min<std::ptrdiff_t>(it - edges.begin(), static_cast<std::ptrdiff_t>(edges.size()) - 1));
    }
  }
}

double quantile(std::vector<double> values, double alpha) {
  if (values.empty()) throw InsufficientDataError("quantile of empty sample");
  const double pos = alpha * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + frac * (b - a);
}

namespace {

struct Split {
  double gain = 0.0;
  std::size_t feature = 0;
  std::size_t bin = 0;
};

struct Pending {
  std::size_t node;
  std::size_t depth;
  std::vector<std::uint32_t> rows;
};

Split best_split(const BinnedMatrix& x, std::span<const double> grad, const std::vector<std::uint32_t>& rows,
                 std::size_t min_leaf, std::vector<double>& sum_buf, std::vector<std::uint32_t>& cnt_buf) {
  const std::size_t cols = x.cols();
  constexpr std::size_t kMaxBins = 256;
  sum_buf.assign(cols * kMaxBins, 0.0);
  cnt_buf.assign(cols * kMaxBins, 0);
  double total = 0.0;
  for (std::uint32_t r : rows) {
    const double g = grad[r];
    total += g;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t slot = c * kMaxBins + x.bin(r, c);
      sum_buf[slot] += g;
      ++cnt_buf[slot];
    }
  }
  const double n = static_cast<double>(rows.size());
  const double parent = total * total / n;
  Split best;
  for (std::size_t c = 0; c < cols; ++c) {
    double left_sum = 0.0;
    std::size_t left_n = 0;
    const std::size_t nb = x.bin_count(c);
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      left_sum += sum_buf[c * kMaxBins + b];
      left_n += cnt_buf[c * kMaxBins + b];
      const std::size_t right_n = rows.size() - left_n;
      if (left_n < min_leaf) continue;
      if (right_n < min_leaf) break;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                          right_sum * right_sum / static_cast<double>(right_n) - parent;
      if (gain > best.gain + 1e-12 * std::abs(parent) + 1e-300) best = {gain, c, b};
    }
  }
  return best;
}

}  // namespace

Ensemble fit(const BinnedMatrix& x, std::span<const double> y, const GbtParams& params, Loss loss, double alpha) {
  const std::size_t n = x.rows();
  if (n == 0 || y.size() != n) throw InsufficientDataError("gbt::fit: empty or mismatched training data");
  Ensemble model;
  model.n_features = x.cols();
  std::vector<double> yv(y.begin(), y.end());
  if (loss == Loss::kSquared) {
    double s = 0.0;
    for (double v : yv) s += v;
    model.base = s / static_cast<double>(n);
  } else {
    model.base = quantile(yv, alpha);
  }

  std::vector<double> pred(n, model.base);
  std::vector<double> grad(n);
  std::vector<double> sum_buf;
  std::vector<std::uint32_t> cnt_buf;
  std::vector<double> residuals;
  std::vector<std::uint32_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);

  for (std::size_t t = 0; t < params.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - pred[i];
      grad[i] = loss == Loss::kSquared ? r : (r >= 0.0 ? alpha : alpha - 1.0);
    }
    Tree tree;
    tree.nodes.push_back(Node{});
    std::vector<Pending> stack;
    stack.push_back({0, 0, all});
    while (!stack.empty()) {
      Pending p = std::move(stack.back());
      stack.pop_back();
      Split split;
      if (p.depth < params.depth && p.rows.size() >= 2 * params.min_leaf) {
        split = best_split(x, grad, p.rows, params.min_leaf, sum_buf, cnt_buf);
      }
      if (split.gain <= 0.0) {
        residuals.clear();
        for (std::uint32_t r : p.rows) residuals.push_back(y[r] - pred[r]);
        double value = 0.0;
        if (loss == Loss::kSquared) {
          for (double v : residuals) value += v;
          value /= static_cast<double>(residuals.size());
        } else {
          value = quantile(residuals, alpha);
        }
        value *= params.learning_rate;
        tree.nodes[p.node].value = value;
        for (std::uint32_t r : p.rows) pred[r] += value;
        continue;
      }
      std::vector<std::uint32_t> left, right;
      for (std::uint32_t r : p.rows) (x.bin(r, split.feature) <= split.bin ? left : right).push_back(r);
      const auto li = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(Node{});
      tree.nodes.push_back(Node{});
      Node& node = tree.nodes[p.node];
      node.feature = static_cast<int>(split.feature);
      node.threshold = x.upper_edge(split.feature, split.bin);
      node.left = li;
      node.right = li + 1;
      stack.push_back({static_cast<std::size_t>(li + 1), p.depth + 1, std::move(right)});
      stack.push_back({static_cast<std::size_t>(li), p.depth + 1, std::move(left)});
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace wwps::gbt
