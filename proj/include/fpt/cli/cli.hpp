#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpt/data/dataset.hpp"
#include "fpt/numerics/error.hpp"
#include "fpt/tasks/config.hpp"
#include "fpt/tasks/runners.hpp"

namespace fpt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Either a manifest entry or a generated sinusoid.
struct DatasetRef {
  std::filesystem::path manifest;
  std::string name;
  bool synthetic = false;
  std::size_t n_steps = 3000;
  double period = 24.0, phase = 0.0, noise = 0.0;
  std::uint64_t seed = 1;

  data::TimeSeriesDataset load() const;
};

struct RunConfig {
  std::filesystem::path source;  // the config file; relative paths resolve against its directory
  DatasetRef dataset;
  tasks::RunSpec run;
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> output;
  nlohmann::json sections = nlohmann::json::object();  // fewshot, zeroshot, ablation, mix_sweep, similarity
};

/// Parses and validates a run config file: unknown keys, bad values and
/// missing referenced files raise InvalidInput or IoError.
RunConfig load_run_config(const std::filesystem::path& file);
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
DatasetRef parse_dataset_ref(const nlohmann::json& j, const std::filesystem::path& base_dir);
tasks::DonorConfig parse_donor_config(const nlohmann::json& j);

/// Config-class errors map to 2, numerical ones to 3.
int exit_code_for(ErrorKind kind) noexcept;

/// Entry point of the `fpt` binary. argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpt::cli
