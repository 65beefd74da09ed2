#pragma once

// Vector kernels behind the convolution inner loops. Each kernel has a
// portable scalar reference and an AVX2+FMA variant; the active variant is
// chosen once at startup from CPU features and may be overridden with
// LCMKIT_SIMD=scalar|avx2 or set_isa().

#include <cstddef>
#include <string_view>

namespace lcm::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Throws ContractError if the ISA is not available on this CPU/build.
void set_isa(Isa isa);

// sum_i a[i] * b[i]
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
// sum_i x[i]
float sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);
// C[m x n] += A[m x k] * B[k x n]; row-major with leading dimensions.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define LCMKIT_HAVE_AVX2_KERNELS 1
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
}  // namespace avx2
#endif

}  // namespace lcm::kernels
