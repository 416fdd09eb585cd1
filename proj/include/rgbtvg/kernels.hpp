#pragma once

// Dense double-precision kernels behind every matrix product in the model.
//
// Two implementations exist: a scalar reference and an AVX2+FMA variant.
// The active one is chosen once at startup from CPUID; RGBTVG_ISA=scalar
// (or avx2) in the environment overrides the choice, and force_isa() lets
// tests pin a path. All matrices are dense row-major.

#include <cstddef>
#include <string_view>

namespace rgbtvg::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
// Throws std::invalid_argument if the ISA is not available on this CPU.
void force_isa(Isa isa);

// c[m x n] (+)= a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// c[m x n] (+)= a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// c[m x n] (+)= a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

namespace scalar {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(RGBTVG_HAVE_AVX2)
namespace avx2 {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace rgbtvg::kernels
