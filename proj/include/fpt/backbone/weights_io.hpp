#pragma once

#include <filesystem>

#include "fpt/backbone/params.hpp"

namespace fpt::backbone {

// Weight container: a directory with manifest.json and weights.bin.
//   manifest: {"format_version":1,"tensors":[{"name","dtype":"f32","shape","offset"}...]}
//   blob: little-endian f32, row-major, tensors back to back in manifest order.

inline constexpr int kWeightFormatVersion = 1;

/// Writes the container, creating the directory. IoError on failure.
void save_weights(const ParameterStore& store, const std::filesystem::path& dir);

/// Loads every tensor the manifest lists, in manifest order.
ParameterStore load_weights(const std::filesystem::path& dir);

/// Loads and checks the store against cfg's layout (FormatError naming a
/// missing tensor, ShapeError with both shapes), returned in canonical order.
ParameterStore load_weights(const std::filesystem::path& dir, const BackboneConfig& cfg);

}  // namespace fpt::backbone
