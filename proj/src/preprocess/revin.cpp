#include "fpt/preprocess/revin.hpp"

#include <cmath>
#include <string>

namespace fpt::preprocess {

namespace {

void require_finite(std::span<const double> x, const char* op) {
  for (double v : x) require(std::isfinite(v), ErrorKind::InvalidInput, std::string(op) + ": non-finite input");
}

}  // namespace

double InstanceStats::effective_std() const noexcept { return std::sqrt(std * std + eps); }

Normalized revin_normalize(std::span<const double> x, double eps) {
  require(!x.empty(), ErrorKind::InvalidInput, "revin_normalize: empty window");
  require(eps >= 0.0, ErrorKind::InvalidInput, "revin_normalize: negative eps");
  require_finite(x, "revin_normalize");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;

  Normalized out{Vector(x.size(), 0.0), InstanceStats{mean, std::sqrt(var), eps}};
  const double denom = std::sqrt(var + eps);
  if (denom > 0.0)
    for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = (x[i] - mean) / denom;
  return out;
}

Normalized revin_normalize_masked(std::span<const double> x, std::span<const double> mask, double eps) {
  require(x.size() == mask.size(), ErrorKind::ShapeError, "revin_normalize_masked: mask length mismatch");
  require(eps >= 0.0, ErrorKind::InvalidInput, "revin_normalize_masked: negative eps");
  require_finite(x, "revin_normalize_masked");
  double count = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] != 0.0) {
      mean += x[i];
      count += 1.0;
    }
  require(count > 0.0, ErrorKind::InvalidInput, "revin_normalize_masked: every point is masked");
  mean /= count;
  double var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] != 0.0) var += (x[i] - mean) * (x[i] - mean);
  var /= count;

  Normalized out{Vector(x.size(), 0.0), InstanceStats{mean, std::sqrt(var), eps}};
  const double denom = std::sqrt(var + eps);
  if (denom > 0.0)
    for (std::size_t i = 0; i < x.size(); ++i)
      if (mask[i] != 0.0) out.values[i] = (x[i] - mean) / denom;
  return out;
}

Vector revin_denormalize(std::span<const double> y, const InstanceStats& stats) {
  const double scale = stats.effective_std();
  Vector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * scale + stats.mean;
  return out;
}

std::size_t patch_count(std::size_t length, const PatchConfig& cfg) {
  require(cfg.patch_len >= 1 && cfg.stride >= 1, ErrorKind::InvalidInput, "patch length and stride must be positive");
  require(length >= cfg.patch_len, ErrorKind::InsufficientData,
          "window of " + std::to_string(length) + " steps is shorter than patch length " +
              std::to_string(cfg.patch_len));
  return (length - cfg.patch_len) / cfg.stride + 1;
}

Matrix patchify(std::span<const double> x, const PatchConfig& cfg) {
  const std::size_t n = patch_count(x.size(), cfg);
  Matrix out(n, cfg.patch_len);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cfg.patch_len; ++j) out(i, j) = x[i * cfg.stride + j];
  return out;
}

}  // namespace fpt::preprocess
