#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"
#include "wwps/kernels.hpp"

namespace wwps::kernels {

namespace {

using namespace detail;

const KernelTable kScalar{Isa::kScalar, dot_scalar,  axpy_scalar,       gemv_scalar,
                          gemv_t_scalar, ger_scalar, pinball_sum_scalar};

#if defined(WWPS_HAVE_AVX2)
const KernelTable kAvx2{Isa::kAvx2, dot_avx2, axpy_avx2, gemv_avx2, gemv_t_avx2, ger_avx2, pinball_sum_avx2};
#endif

#if defined(WWPS_HAVE_NEON)
const KernelTable kNeon{Isa::kNeon, dot_neon, axpy_neon, gemv_neon, gemv_t_neon, ger_neon, pinball_sum_neon};
#endif

const KernelTable* detect() {
  if (const char* forced = std::getenv("WWPS_ISA"); forced && std::strcmp(forced, "scalar") == 0) {
    return &kScalar;
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{detect()};
  return s;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(WWPS_HAVE_AVX2)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(WWPS_HAVE_NEON)
  return &kNeon;  // Advanced SIMD is mandatory on aarch64.
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  const KernelTable* t = &kScalar;
  if (isa == Isa::kAvx2 && avx2_table()) t = avx2_table();
  if (isa == Isa::kNeon && neon_table()) t = neon_table();
  slot().store(t, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
    case Isa::kScalar:
      break;
  }
  return "scalar";
}

}  // namespace wwps::kernels
