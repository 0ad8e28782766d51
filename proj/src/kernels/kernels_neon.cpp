#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace wwps::kernels::detail {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_neon(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = (bias ? bias[r] : 0.0) + dot_neon(w + r * cols, x, cols);
}

void gemv_t_neon(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_neon(dy[r], w + r * cols, dx, cols);
}

void ger_neon(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_neon(dy[r], x, g + r * cols, cols);
}

double pinball_sum_neon(const double* y, const double* q, double alpha, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const float64x2_t vb = vdupq_n_f64(alpha - 1.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(y + i), vld1q_f64(q + i));
    const uint64x2_t nonneg = vcgeq_f64(d, zero);
    acc = vfmaq_f64(acc, vbslq_f64(nonneg, va, vb), d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = y[i] - q[i];
    s += d >= 0.0 ? alpha * d : (alpha - 1.0) * d;
  }
  return s;
}

}  // namespace wwps::kernels::detail
