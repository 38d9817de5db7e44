#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fpt/backbone/model.hpp"
#include "fpt/backbone/params.hpp"
#include "fpt/data/dataset.hpp"
#include "fpt/metrics/report.hpp"
#include "fpt/tasks/config.hpp"

namespace fpt::tasks {

/// Backbone shape, initial parameters and freeze mask of one ablation arm.
struct AblationModel {
  backbone::BackboneConfig cfg;
  backbone::ParameterStore store;
  backbone::FreezeMask mask;
};

/// fpt: every tensor the weights provide with a matching shape (tensors
/// they lack, typically the input embedding and output head, stay freshly
/// initialized), attention and FFN frozen. no_freeze: same parameters, all trainable.
/// no_pretrain / no_pretrain_freeze: init_random with all trainable / the
/// default mask. gpt0: no transformer layers, all trainable.
/// Throws MissingWeights when fpt or no_freeze gets no weights.
AblationModel make_ablation(AblationArm arm, const backbone::BackboneConfig& cfg, RandomStream& rng,
                            const backbone::ParameterStore* weights = nullptr);

/// Copy every tensor of `from` into `to` whose name and shape match. Blocks
/// below to's layer count and the final LayerNorm must match (ShapeError
/// otherwise); a positional table of a different length contributes its
/// overlapping rows; other mismatches keep their initialization.
void transfer_pretrained(const backbone::ParameterStore& from, backbone::ParameterStore& to,
                         const backbone::BackboneConfig& to_cfg);

struct TrainHistory {
  std::vector<double> train_loss;           // mean per epoch
  std::vector<double> val_loss;             // per epoch
  std::vector<double> first_epoch_steps;    // batch losses of epoch 1
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;               // 1-based
  std::size_t steps = 0;
};

/// Mini-batch Adam on the trainable tensors with per-epoch shuffling and
/// early stopping on `val` (train loss when val is empty). The parameters
/// of the best epoch are restored on exit.
TrainHistory train_model(backbone::ParameterStore& store, const backbone::BackboneConfig& cfg,
                         const backbone::FreezeMask& mask, std::span<const backbone::Example<float>> train,
                         std::span<const backbone::Example<float>> val, backbone::LossKind loss,
                         const TrainConfig& tc);

/// Predictions for every example in order (forward only, worker-parallel).
std::vector<std::vector<float>> predict(const backbone::ParameterStore& store, const backbone::BackboneConfig& cfg,
                                        std::span<const backbone::Example<float>> examples);

struct RunResult {
  metrics::MetricReport report;
  backbone::BackboneConfig cfg;
  backbone::ParameterStore store;
  backbone::FreezeMask mask;
  TrainHistory history;
};

/// Channel-independent forecasting: RevIN, patching, backbone with a
/// flattened linear head to O values, de-normalization. Trains with MSE in
/// normalized space and reports MSE/MAE on the test split in data units.
RunResult run_forecast(const data::TimeSeriesDataset& d, const RunSpec& spec,
                       const backbone::ParameterStore* weights = nullptr);

/// Test-split metrics of an already trained forecaster (the store written by
/// a forecasting run with the same spec); no parameter updates.
metrics::MetricReport evaluate_forecaster(const data::TimeSeriesDataset& d, const RunSpec& spec,
                                          const backbone::ParameterStore& trained);

/// One model per mask ratio; metrics on masked points only, per ratio and
/// averaged.
RunResult run_imputation(const data::TimeSeriesDataset& d, const RunSpec& spec,
                         const backbone::ParameterStore* weights = nullptr);

/// Each dataset column is one labeled series; series are split train/val/test
/// by a seeded permutation. Mean pooling, cross entropy, test accuracy.
RunResult run_classification(const data::TimeSeriesDataset& d, const RunSpec& spec,
                             const backbone::ParameterStore* weights = nullptr);

/// Windows autoencoded with MSE on the train split; points whose test
/// reconstruction error exceeds the q-quantile of train errors are flagged.
RunResult run_anomaly(const data::TimeSeriesDataset& d, const RunSpec& spec,
                      const backbone::ParameterStore* weights = nullptr);

/// One forecasting run per percent on few_shot_subset(d, percent); rows
/// "percent=<p>".
metrics::MetricReport run_few_shot(const data::TimeSeriesDataset& d, std::span<const double> percents,
                                   const RunSpec& spec, const backbone::ParameterStore* weights = nullptr);

enum class ZeroShotMetric { smape, mape, nd, mse };

ZeroShotMetric parse_zero_shot_metric(std::string_view s);
std::string_view to_string(ZeroShotMetric m) noexcept;

/// Train on `source`, then evaluate the test split of `target` with no
/// parameter updates. target_window must agree with spec.window on lookback
/// and horizon (InvalidInput otherwise); its stride may differ.
RunResult run_zero_shot(const data::TimeSeriesDataset& source, const data::TimeSeriesDataset& target,
                        const RunSpec& spec, const data::WindowSpec& target_window, ZeroShotMetric metric,
                        const backbone::ParameterStore* weights = nullptr);

/// Forecasting on few_shot_subset(d, percent) once per arm; rows named by
/// arm with MSE and MAE. extra.step0_identical records whether fpt and
/// no_freeze agree on every test prediction before training.
metrics::MetricReport run_ablation(const data::TimeSeriesDataset& d, const RunSpec& spec,
                                   const backbone::ParameterStore* weights, double percent,
                                   std::span<const AblationArm> arms = kAllArms);

/// Linear-interpolated empirical quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct DonorConfig {
  std::size_t n_series = 64;
  std::size_t series_len = 1200;
  std::size_t window_stride = 4;
  std::size_t epochs = 8;
  std::uint64_t seed = 1234;
};

/// Procedural corpus for donor pretraining: each series sums two or three
/// sines with random periods in [5, 90], a random square or sawtooth
/// component and small noise.
data::TimeSeriesDataset synthetic_donor_corpus(const DonorConfig& dc);

/// Train a same-shape forecaster (all tensors trainable) on the donor
/// corpus; its transformer tensors stand in for pretrained weights.
backbone::ParameterStore pretrain_synthetic_donor(const RunSpec& spec, const DonorConfig& dc = {});

}  // namespace fpt::tasks
