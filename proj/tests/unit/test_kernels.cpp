#include <doctest.h>

#include <random>
#include <vector>

#include "wwps/kernels.hpp"

using namespace wwps::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

void check_table(const KernelTable& k) {
  const KernelTable& ref = scalar_table();
  std::mt19937_64 rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 64u, 72u, 129u}) {
    auto a = random_vec(rng, n), b = random_vec(rng, n);
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
    auto y1 = b, y2 = b;
    k.axpy(0.7, a.data(), y1.data(), n);
    ref.axpy(0.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
    for (double alpha : {0.05, 0.5, 0.95}) {
      CHECK(k.pinball_sum(a.data(), b.data(), alpha, n) ==
            doctest::Approx(ref.pinball_sum(a.data(), b.data(), alpha, n)).epsilon(1e-12));
    }
  }
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{1, 1}, {10, 72}, {64, 64}, {3, 5}, {17, 9}}) {
    auto w = random_vec(rng, rows * cols), bias = random_vec(rng, rows), x = random_vec(rng, cols),
         dy = random_vec(rng, rows);
    std::vector<double> y1(rows), y2(rows);
    k.gemv(w.data(), bias.data(), x.data(), y1.data(), rows, cols);
    ref.gemv(w.data(), bias.data(), x.data(), y2.data(), rows, cols);
    for (std::size_t i = 0; i < rows; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
    k.gemv(w.data(), nullptr, x.data(), y1.data(), rows, cols);
    ref.gemv(w.data(), nullptr, x.data(), y2.data(), rows, cols);
    for (std::size_t i = 0; i < rows; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
    std::vector<double> dx1(cols, 1.0), dx2(cols, 1.0);
    k.gemv_t(w.data(), dy.data(), dx1.data(), rows, cols);
    ref.gemv_t(w.data(), dy.data(), dx2.data(), rows, cols);
    for (std::size_t i = 0; i < cols; ++i) CHECK(dx1[i] == doctest::Approx(dx2[i]).epsilon(1e-12));
    std::vector<double> g1(rows * cols, 0.5), g2(rows * cols, 0.5);
    k.ger(dy.data(), x.data(), g1.data(), rows, cols);
    ref.ger(dy.data(), x.data(), g2.data(), rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("scalar reference matches hand values") {
  const auto& k = scalar_table();
  double a[] = {1, 2, 3}, b[] = {4, 5, 6};
  CHECK(k.dot(a, b, 3) == 32.0);
  double w[] = {1, 2, 3, 4}, x[] = {1, 1}, bias[] = {0.5, -0.5}, y[2];
  k.gemv(w, bias, x, y, 2, 2);
  CHECK(y[0] == 3.5);
  CHECK(y[1] == 6.5);
  double q[] = {0, 0, 0}, yy[] = {1, -1, 0};
  // under-prediction costs alpha, over-prediction 1 - alpha
  CHECK(k.pinball_sum(yy, q, 0.9, 3) == doctest::Approx(0.9 + 0.1));
}

TEST_CASE("vector kernels match the scalar reference") {
  if (const auto* t = avx2_table()) check_table(*t);
  if (const auto* t = neon_table()) check_table(*t);
  check_table(active());
}

TEST_CASE("forcing the scalar path") {
  const Isa before = active().isa;
  set_active(Isa::kScalar);
  CHECK(active().isa == Isa::kScalar);
  set_active(before);
  CHECK(isa_name(Isa::kScalar) == "scalar");
}
