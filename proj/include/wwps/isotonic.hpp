#pragma once

#include <span>
#include <vector>

namespace wwps {

// Weighted least-squares projection onto nondecreasing sequences (pool
// adjacent violators). Empty weights mean unit weights.
std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> w = {});

}  // namespace wwps
