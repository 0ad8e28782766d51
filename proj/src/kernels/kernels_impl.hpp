#pragma once

#include <cstddef>

namespace wwps::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void gemv_scalar(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
                 std::size_t cols);
void gemv_t_scalar(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols);
void ger_scalar(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols);
double pinball_sum_scalar(const double* y, const double* q, double alpha, std::size_t n);

#if defined(WWPS_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void gemv_avx2(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
               std::size_t cols);
void gemv_t_avx2(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols);
void ger_avx2(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols);
double pinball_sum_avx2(const double* y, const double* q, double alpha, std::size_t n);
#endif

#if defined(WWPS_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
void gemv_neon(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
               std::size_t cols);
void gemv_t_neon(const double* w, const double* dy, double* dx, std::size_t rows, std::size_t cols);
void ger_neon(const double* dy, const double* x, double* g, std::size_t rows, std::size_t cols);
double pinball_sum_neon(const double* y, const double* q, double alpha, std::size_t n);
#endif

}  // namespace wwps::kernels::detail
