// Runtime kernel selection. No intrinsics in this file.

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "rgbtvg/kernels.hpp"

namespace rgbtvg::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(RGBTVG_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("RGBTVG_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && cpu_has_avx2_fma()) return Isa::avx2;
  }
  return cpu_has_avx2_fma() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2_fma(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("kernel ISA not available: " + std::string(isa_name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

#if defined(RGBTVG_HAVE_AVX2)
#define RGBTVG_DISPATCH(fn, ...)                                 \
  if (active_isa() == Isa::avx2) return avx2::fn(__VA_ARGS__); \
  return scalar::fn(__VA_ARGS__)
#else
#define RGBTVG_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  RGBTVG_DISPATCH(gemm_nn, m, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  RGBTVG_DISPATCH(gemm_nt, m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  RGBTVG_DISPATCH(gemm_tn, m, n, k, a, b, c, accumulate);
}

double dot(const double* x, const double* y, std::size_t n) { RGBTVG_DISPATCH(dot, x, y, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) { RGBTVG_DISPATCH(axpy, alpha, x, y, n); }

#undef RGBTVG_DISPATCH

}  // namespace rgbtvg::kernels
