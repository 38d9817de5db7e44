#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fpt/numerics/matrix.hpp"
#include "fpt/numerics/rng.hpp"

namespace fpt::data {

enum class Frequency { yearly, quarterly, monthly, weekly, daily, hourly, minutely, unknown };

Frequency parse_frequency(std::string_view name);
std::string_view to_string(Frequency f) noexcept;
/// M4-competition seasonal periods used by MASE.
std::size_t default_seasonal_period(Frequency f) noexcept;

/// Train/val/test fractions; must sum to 1.
struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;

  void validate() const;
};

enum class Split { train, val, test };
std::string_view to_string(Split s) noexcept;

/// Half-open timestep ranges per split. Fresh splits are contiguous and
/// cover [0, T); few-shot subsetting may shrink the train range.
struct SplitBounds {
  std::size_t train_begin = 0;
  std::size_t train_end = 0;
  std::size_t val_begin = 0;
  std::size_t val_end = 0;
  std::size_t test_begin = 0;
  std::size_t test_end = 0;

  std::size_t begin(Split s) const noexcept;
  std::size_t end(Split s) const noexcept;
  std::size_t length(Split s) const noexcept { return end(s) - begin(s); }

  static SplitBounds from_fractions(std::size_t n_steps, const SplitSpec& spec);
};

/// T timesteps x C channels. For classification corpora the columns are the
/// individual series and `labels` holds one class index per column; for
/// anomaly corpora `labels` holds one 0/1 flag per timestep.
struct TimeSeriesDataset {
  std::string name;
  Matrix values;
  Frequency frequency = Frequency::unknown;
  std::size_t seasonal_period = 1;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> channel_names;
  SplitBounds bounds;

  std::size_t n_steps() const noexcept { return values.rows(); }
  std::size_t n_channels() const noexcept { return values.cols(); }
  Vector channel(std::size_t c) const;
  Matrix segment(Split s) const;

  void validate() const;
};

/// Build a dataset from a T x C matrix and split fractions.
TimeSeriesDataset make_dataset(std::string name, Matrix values, Frequency frequency = Frequency::unknown,
                               SplitSpec split = {});

/// sin(2 pi t / period + phase) + noise * N(0, 1), one hourly channel.
TimeSeriesDataset sinusoid_dataset(std::size_t n_steps, double period = 24.0, double phase = 0.0, double noise = 0.0,
                                   std::uint64_t seed = 1, std::string name = "sinusoid");

enum class TimestampColumn { automatic, present, absent };

struct CsvSchema {
  TimestampColumn timestamp = TimestampColumn::automatic;
  /// Column holding per-timestep integer labels (excluded from values).
  std::optional<std::string> label_column;
};

/// Load a UTF-8 comma-separated file with one header row. An optional leading
/// timestamp column (ISO-8601 text or integer index) is checked for strictly
/// increasing order and dropped. Every other cell must be a finite decimal.
TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Classification layout: one series per row, `label_column` holds the class,
/// every other column is a timestep. Series become dataset columns.
TimeSeriesDataset load_series_rows_csv(const std::filesystem::path& path, const std::string& label_column);

void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& d);

enum class CsvLayout { timeseries, series_rows };

struct ManifestEntry {
  std::string name;
  std::filesystem::path path;
  Frequency frequency = Frequency::unknown;
  std::optional<std::size_t> seasonal_period;
  SplitSpec split;
  std::optional<std::string> label_column;
  CsvLayout layout = CsvLayout::timeseries;
};

/// JSON object mapping dataset name -> {path, frequency, seasonal_period,
/// split:[train,val,test], label_column?, layout?}. Relative paths resolve
/// against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_path);
TimeSeriesDataset load_from_manifest(const std::filesystem::path& manifest_path, const std::string& name);
TimeSeriesDataset load_entry(const ManifestEntry& entry);

/// One univariate dataset per channel; metadata and split bounds preserved.
std::vector<TimeSeriesDataset> channel_split(const TimeSeriesDataset& d);

struct WindowSpec {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t stride = 1;
  /// When set, val/test inputs may start up to `lookback` steps before the
  /// segment (targets still stay inside it).
  bool extend_into_previous = false;
};

struct Window {
  std::size_t start = 0;  // absolute index of the first input step
  Matrix input;           // lookback x C
  Matrix target;          // horizon x C
};

std::size_t window_count(std::size_t segment_len, const WindowSpec& w);
std::vector<Window> make_windows(const TimeSeriesDataset& d, const WindowSpec& w, Split split);

enum class SubsetPosition { suffix, prefix };

/// Keep ceil(percent * train_len) training steps (suffix by default).
TimeSeriesDataset few_shot_subset(const TimeSeriesDataset& d, double percent,
                                  SubsetPosition position = SubsetPosition::suffix);

/// Binary mask (1 observed, 0 masked) of n_steps x n_channels.
struct ImputationMask {
  Matrix mask;
  double ratio = 0.0;

  std::size_t masked_count() const;
};

/// Exactly round(ratio * n_steps * n_channels) masked cells, drawn uniformly
/// without replacement.
ImputationMask random_mask(std::size_t n_steps, std::size_t n_channels, double ratio, RandomStream& rng);
/// Same, with the masked count given explicitly.
ImputationMask random_mask_count(std::size_t n_steps, std::size_t n_channels, std::size_t n_masked,
                                 RandomStream& rng);

}  // namespace fpt::data
