#pragma once

// Dense arithmetic used by the network and the forecast metrics. Every kernel
// has a scalar reference implementation; vectorized variants (AVX2+FMA on x86-64,
// NEON on aarch64) are selected once at startup by CPU feature detection and
// are tested for equivalence against the reference.

#include <cstddef>
#include <span>
#include <string_view>

namespace wwps::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x + bias, W row-major rows x cols. bias may be null.
  void (*gemv)(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
               std::size_t cols);
  // dx += W^T dy
  void (*gemv_t)(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols);
  // G += dy x^T
  void (*ger)(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols);
  // sum_i pinball(y[i] - q[i]; alpha)
  double (*pinball_sum)(const double* y, const double* q, double alpha, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the variant is not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The process-wide selection. WWPS_ISA=scalar in the environment forces the reference path.
const KernelTable& active();
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double pinball_sum(std::span<const double> y, std::span<const double> q, double alpha) {
  return active().pinball_sum(y.data(), q.data(), alpha, y.size());
}

}  // namespace wwps::kernels
