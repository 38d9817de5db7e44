#pragma once

#include <span>
#include <utility>

#include "fpt/numerics/matrix.hpp"

namespace fpt::preprocess {

inline constexpr double kDefaultEps = 1e-5;

/// Per-window statistics captured by the normalizer and re-applied to the
/// model output. No learnable affine term.
struct InstanceStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation of the window
  double eps = kDefaultEps;

  double effective_std() const noexcept;  // sqrt(std^2 + eps)
};

struct Normalized {
  Vector values;
  InstanceStats stats;
};

/// (x - mean) / sqrt(var + eps). Constant windows map to zeros.
Normalized revin_normalize(std::span<const double> x, double eps = kDefaultEps);

/// Statistics from observed points only (mask == 1); masked positions are
/// emitted as 0 after normalization.
Normalized revin_normalize_masked(std::span<const double> x, std::span<const double> mask,
                                  double eps = kDefaultEps);

/// y * sqrt(var + eps) + mean.
Vector revin_denormalize(std::span<const double> y, const InstanceStats& stats);

struct PatchConfig {
  std::size_t patch_len = 16;
  std::size_t stride = 8;
};

std::size_t patch_count(std::size_t length, const PatchConfig& cfg);

/// n_patches x patch_len matrix; patch i covers x[i*stride, i*stride + patch_len).
/// Steps after the last full patch are dropped.
Matrix patchify(std::span<const double> x, const PatchConfig& cfg);

}  // namespace fpt::preprocess
