#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace fpt::simd {

// Inner-loop primitives used by the backbone. Each has a scalar reference
// implementation and, where the target supports it, an AVX2+FMA (x86-64) or
// NEON (aarch64) variant. The variant is chosen once at first use from CPUID;
// FPT_SIMD=scalar forces the reference path.
//
// axpy and the gemm family use fused multiply-add in every variant, so the
// elementwise results are bit-identical across variants. dot reduces in a
// different order per variant and agrees to rounding only.

enum class Isa { scalar, avx2, neon };

Isa active_isa() noexcept;
std::string_view to_string(Isa isa) noexcept;
/// Override the dispatch choice (tests). Falls back to scalar if unsupported.
void force_isa(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;

float dot(std::span<const float> a, std::span<const float> b) noexcept;
double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept;
void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept;

/// C[m x n] += A[m x k] * B[k x n], all row-major and contiguous.
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) noexcept {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], std::span<const T>(b + p * n, n), std::span<T>(c + i * n, n));
}

/// C[m x n] += A[m x k] * B[n x k]^T.
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) noexcept {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot(std::span<const T>(a + i * k, k), std::span<const T>(b + j * k, k));
}

/// C[k x n] += A[m x k]^T * B[m x n].
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) noexcept {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], std::span<const T>(b + i * n, n), std::span<T>(c + p * n, n));
}

namespace scalar {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace neon
#endif

}  // namespace fpt::simd
