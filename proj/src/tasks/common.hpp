#pragma once

// Shared plumbing for the runners; not installed.

#include <vector>

#include "fpt/preprocess/revin.hpp"
#include "fpt/tasks/runners.hpp"

namespace fpt::tasks::detail {

inline constexpr std::uint64_t kInitStream = 0x494e4954;
inline constexpr std::uint64_t kMaskStream = 0x4d41534b;
inline constexpr std::uint64_t kSplitStream = 0x53504c54;

/// Normalized forecasting windows of every channel plus what is needed to
/// map predictions back to data units.
struct ForecastSet {
  std::vector<backbone::Example<float>> examples;
  std::vector<preprocess::InstanceStats> stats;
  std::vector<Vector> target;  // data units
  Vector last_input;           // for the repeat-last baseline
};

ForecastSet forecast_set(const data::TimeSeriesDataset& d, const data::WindowSpec& w, const RunSpec& spec,
                         data::Split split);

/// Backbone for a flattened head over the patches of `length` steps.
backbone::BackboneConfig flatten_head_config(const RunSpec& spec, std::size_t length, std::size_t head_out);

struct ForecastEval {
  double mse = 0, mae = 0;
  double naive_mse = 0, naive_mae = 0;
  Vector y, yhat;
};

ForecastEval evaluate_forecast(const backbone::ParameterStore& store, const backbone::BackboneConfig& cfg,
                               const ForecastSet& set);

/// make_ablation with the run's init stream, then train_model.
RunResult train_on(const RunSpec& spec, const backbone::BackboneConfig& cfg,
                   std::span<const backbone::Example<float>> train, std::span<const backbone::Example<float>> val,
                   backbone::LossKind loss, const backbone::ParameterStore* weights);

/// Forecaster trained on d's train split with early stopping on val.
RunResult train_forecaster(const data::TimeSeriesDataset& d, const RunSpec& spec,
                           const backbone::ParameterStore* weights);

metrics::MetricReport base_report(std::string_view task, const data::TimeSeriesDataset& d, const RunSpec& spec);
void record_history(metrics::MetricReport& r, const TrainHistory& h);

}  // namespace fpt::tasks::detail
