#include "../tasks/common.hpp"
#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

namespace {

std::pair<TokenSimilarityProfile, TokenSimilarityProfile> trace_similarity(const backbone::ParameterStore& store,
                                                                           const backbone::BackboneConfig& cfg,
                                                                           const tasks::detail::ForecastSet& eval,
                                                                           std::size_t n_eval,
                                                                           std::size_t pca_components) {
  auto trace_with = [&](backbone::ForwardOptions fo) {
    fo.keep_trace = true;
    fo.apply_head = false;
    std::vector<backbone::ForwardTrace> traces;
    for (std::size_t i = 0; i < n_eval; ++i)
      traces.push_back(backbone::forward<float>(store, cfg, eval.examples[i].tokens, fo).trace);
    return token_similarity(traces);
  };
  std::pair<TokenSimilarityProfile, TokenSimilarityProfile> out{trace_with({}), {}};
  if (pca_components > 0) {
    backbone::ForwardOptions fo;
    fo.mode = backbone::AttentionMode::pca;
    fo.pca_components = pca_components;
    out.second = trace_with(fo);
  }
  return out;
}

tasks::RunSpec forecast_run(const tasks::RunSpec& spec) {
  require(spec.task.kind == tasks::TaskKind::forecast, ErrorKind::InvalidInput, "similarity runs a forecasting task");
  auto run = spec;
  if (spec.task.horizon) run.window.horizon = *spec.task.horizon;
  return run;
}

}  // namespace

std::pair<TokenSimilarityProfile, TokenSimilarityProfile> forecaster_similarity(
    const backbone::ParameterStore& trained, const tasks::RunSpec& spec, const data::TimeSeriesDataset& d,
    std::size_t eval_windows, std::size_t pca_components) {
  require(eval_windows >= 1, ErrorKind::InvalidInput, "eval_windows must be >= 1");
  const auto run = forecast_run(spec);
  const auto eval = tasks::detail::forecast_set(d, run.window, run, data::Split::test);
  require(!eval.examples.empty(), ErrorKind::InsufficientData, "no test windows to trace");
  const auto cfg = tasks::detail::flatten_head_config(run, run.window.lookback, run.window.horizon);
  backbone::check_layout(trained, cfg);
  return trace_similarity(trained, cfg, eval, std::min(eval_windows, eval.examples.size()), pca_components);
}

std::vector<SweepRow> mixed_weights_similarity_sweep(const backbone::ParameterStore* pretrained,
                                                     const tasks::RunSpec& spec, const data::TimeSeriesDataset& d,
                                                     std::span<const double> ratios, std::uint64_t seed,
                                                     const SweepOptions& opts) {
  if (!pretrained) fail(ErrorKind::MissingWeights, "mix-sweep needs pretrained weights");
  require(opts.eval_windows >= 1, ErrorKind::InvalidInput, "eval_windows must be >= 1");
  for (double r : ratios) require(r >= 0.0 && r <= 1.0, ErrorKind::InvalidInput, "mix ratios must be in [0, 1]");
  auto run = forecast_run(spec);
  run.train.ablation = tasks::AblationArm::fpt;
  const auto eval = tasks::detail::forecast_set(d, run.window, run, data::Split::test);
  require(!eval.examples.empty(), ErrorKind::InsufficientData, "no test windows to trace");
  const std::size_t n_eval = std::min(opts.eval_windows, eval.examples.size());
  const auto cfg = tasks::detail::flatten_head_config(run, run.window.lookback, run.window.horizon);
  RandomStream load_rng(derive_seed(seed, 0x4c4f4144));
  auto loaded = backbone::init_random(cfg, load_rng);
  tasks::transfer_pretrained(*pretrained, loaded, cfg);

  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    RandomStream rng(derive_seed(seed, k));
    const auto fresh = backbone::init_random(cfg, rng);
    const auto mixed = backbone::mix_weights(loaded, fresh, ratios[k], rng, opts.mode);
    const auto r = tasks::run_forecast(d, run, &mixed);

    SweepRow row;
    row.ratio = ratios[k];
    row.test_mse = r.report.value("O=" + std::to_string(run.window.horizon), "MSE");
    auto [soft, pca] = trace_similarity(r.store, r.cfg, eval, n_eval, opts.pca_components);
    row.similarity = std::move(soft);
    row.pca_similarity = std::move(pca);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fpt::analysis
