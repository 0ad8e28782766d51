#include "wwps/isotonic.hpp"

#include "wwps/error.hpp"

namespace wwps {

std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> w) {
  if (!w.empty() && w.size() != y.size()) throw ValidationError("isotonic: weight length mismatch");
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    blocks.push_back({y[i], w.empty() ? 1.0 : w[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      const Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      const double total = a.weight + b.weight;
      a.mean = total > 0.0 ? (a.mean * a.weight + b.mean * b.weight) / total : 0.5 * (a.mean + b.mean);
      a.weight = total;
      a.count += b.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

}  // namespace wwps
