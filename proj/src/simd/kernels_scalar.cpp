#include <cmath>

#include "fpt/simd/kernels.hpp"

namespace fpt::simd::scalar {

// Four accumulators, mirroring the lane structure of the vector paths closely
// enough that results stay within a few ulps of them.
template <class T>
static T dot_impl(const T* a, const T* b, std::size_t n) noexcept {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = std::fma(a[i], b[i], acc0);
    acc1 = std::fma(a[i + 1], b[i + 1], acc1);
    acc2 = std::fma(a[i + 2], b[i + 2], acc2);
    acc3 = std::fma(a[i + 3], b[i + 3], acc3);
  }
  T acc = (acc0 + acc1) + (acc2 + acc3);
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

template <class T>
static void axpy_impl(T alpha, const T* x, T* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

float dot(const float* a, const float* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept { axpy_impl(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept { axpy_impl(alpha, x, y, n); }

}  // namespace fpt::simd::scalar
