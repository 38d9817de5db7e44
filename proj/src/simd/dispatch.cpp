#include <atomic>
#include <cstdlib>
#include <string>

#include "fpt/simd/kernels.hpp"

namespace fpt::simd {

namespace {

Isa detect() noexcept {
  if (const char* env = std::getenv("FPT_SIMD"); env && std::string(env) == "scalar") return Isa::scalar;
#if defined(__x86_64__) || defined(_M_X64)
  if (isa_supported(Isa::avx2)) return Isa::avx2;
#elif defined(__aarch64__)
  return Isa::neon;
#endif
  return Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) noexcept { current().store(isa_supported(isa) ? isa : Isa::scalar); }

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

#if defined(__x86_64__) || defined(_M_X64)
#define FPT_VECTOR_NS avx2
#define FPT_VECTOR_ISA Isa::avx2
#elif defined(__aarch64__)
#define FPT_VECTOR_NS neon
#define FPT_VECTOR_ISA Isa::neon
#endif

float dot(std::span<const float> a, std::span<const float> b) noexcept {
#ifdef FPT_VECTOR_NS
  if (active_isa() == FPT_VECTOR_ISA) return FPT_VECTOR_NS::dot(a.data(), b.data(), a.size());
#endif
  return scalar::dot(a.data(), b.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
#ifdef FPT_VECTOR_NS
  if (active_isa() == FPT_VECTOR_ISA) return FPT_VECTOR_NS::dot(a.data(), b.data(), a.size());
#endif
  return scalar::dot(a.data(), b.data(), a.size());
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept {
#ifdef FPT_VECTOR_NS
  if (active_isa() == FPT_VECTOR_ISA) return FPT_VECTOR_NS::axpy(alpha, x.data(), y.data(), x.size());
#endif
  scalar::axpy(alpha, x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
#ifdef FPT_VECTOR_NS
  if (active_isa() == FPT_VECTOR_ISA) return FPT_VECTOR_NS::axpy(alpha, x.data(), y.data(), x.size());
#endif
  scalar::axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace fpt::simd
