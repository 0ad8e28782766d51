#include "kernels_impl.hpp"

namespace wwps::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = (bias ? bias[r] : 0.0) + dot_scalar(w + r * cols, x, cols);
  }
}

void gemv_t_scalar(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(dy[r], w + r * cols, dx, cols);
}

void ger_scalar(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(dy[r], x, g + r * cols, cols);
}

double pinball_sum_scalar(const double* y, const double* q, double alpha, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i] - q[i];
    s += d >= 0.0 ? alpha * d : (alpha - 1.0) * d;
  }
  return s;
}

}  // namespace wwps::kernels::detail
