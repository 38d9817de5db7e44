#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "fpt/metrics/metrics.hpp"

namespace fpt::tasks {

using backbone::Example;

namespace {

struct ImputationSet {
  std::vector<Example<float>> examples;
  std::vector<preprocess::InstanceStats> stats;
  std::vector<Vector> values;  // full window, data units
  std::vector<Vector> mask;    // 1 observed, 0 masked
};

/// Masked windows of every channel. Masked values are zero after
/// normalization; with mask_channel each token also carries its patch of
/// the mask.
ImputationSet imputation_set(const data::TimeSeriesDataset& d, const RunSpec& spec, double ratio, data::Split split,
                             RandomStream& rng) {
  const preprocess::PatchConfig pc{spec.backbone.patch_len, spec.patch_stride};
  const std::size_t len = spec.window.lookback;
  const auto n_masked = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(len))));
  data::WindowSpec w = spec.window;
  w.horizon = 0;
  ImputationSet set;
  for (const auto& series : data::channel_split(d)) {
    for (const auto& win : data::make_windows(series, w, split)) {
      const Vector x(win.input.flat().begin(), win.input.flat().end());
      const auto m = data::random_mask_count(len, 1, n_masked, rng);
      const Vector mask(m.mask.flat().begin(), m.mask.flat().end());
      const auto n = preprocess::revin_normalize_masked(x, mask, spec.revin_eps);
      Matrix tokens = preprocess::patchify(n.values, pc);
      if (spec.task.mask_channel) {
        const Matrix mp = preprocess::patchify(mask, pc);
        Matrix both(tokens.rows(), 2 * pc.patch_len);
        for (std::size_t r = 0; r < tokens.rows(); ++r)
          for (std::size_t c = 0; c < pc.patch_len; ++c) {
            both(r, c) = tokens(r, c);
            both(r, pc.patch_len + c) = mp(r, c);
          }
        tokens = std::move(both);
      }
      Example<float> ex;
      ex.tokens = tokens.cast<float>();
      const double scale = n.stats.effective_std();
      for (std::size_t i = 0; i < len; ++i) {
        ex.target.push_back(static_cast<float>((x[i] - n.stats.mean) / scale));
        ex.weight.push_back(static_cast<float>(1.0 - mask[i]));
      }
      set.examples.push_back(std::move(ex));
      set.stats.push_back(n.stats);
      set.values.push_back(x);
      set.mask.push_back(mask);
    }
  }
  return set;
}

}  // namespace

RunResult run_imputation(const data::TimeSeriesDataset& d, const RunSpec& spec, const backbone::ParameterStore* weights) {
  spec.validate();
  require(spec.task.kind == TaskKind::imputation, ErrorKind::InvalidInput, "imputation runner needs an imputation task");
  auto cfg = detail::flatten_head_config(spec, spec.window.lookback, spec.window.lookback);
  if (spec.task.mask_channel) cfg.patch_len *= 2;

  RunResult out;
  out.report = detail::base_report("imputation", d, spec);
  nlohmann::json baseline = nlohmann::json::object(), runs = nlohmann::json::object();
  for (std::size_t k = 0; k < spec.task.mask_ratios.size(); ++k) {
    const double ratio = spec.task.mask_ratios[k];
    RandomStream rng(derive_seed(spec.train.seed, detail::kMaskStream + k));
    const auto train = imputation_set(d, spec, ratio, data::Split::train, rng);
    const auto val = imputation_set(d, spec, ratio, data::Split::val, rng);
    const auto test = imputation_set(d, spec, ratio, data::Split::test, rng);
    auto r = detail::train_on(spec, cfg, train.examples, val.examples, backbone::LossKind::masked_mse, weights);

    const auto pred = predict(r.store, r.cfg, test.examples);
    Vector y, yhat, ymean;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const Vector p(pred[i].begin(), pred[i].end());
      const auto back = preprocess::revin_denormalize(p, test.stats[i]);
      for (std::size_t t = 0; t < back.size(); ++t) {
        if (test.mask[i][t] != 0.0) continue;
        y.push_back(test.values[i][t]);
        yhat.push_back(back[t]);
        ymean.push_back(test.stats[i].mean);
      }
    }
    char scope[32];
    std::snprintf(scope, sizeof scope, "ratio=%g", ratio);
    out.report.add_row(scope).values = {{"MSE", metrics::mse(y, yhat)}, {"MAE", metrics::mae(y, yhat)}};
    baseline[scope] = {{"MSE", metrics::mse(y, ymean)}, {"MAE", metrics::mae(y, ymean)}, {"masked_points", y.size()}};
    runs[scope] = {{"epochs_run", r.history.epochs_run}, {"best_epoch", r.history.best_epoch},
                   {"val_loss", r.history.val_loss}};
    out.cfg = r.cfg;
    out.store = std::move(r.store);
    out.mask = std::move(r.mask);
    out.history = std::move(r.history);
  }
  out.report.add_average_row();
  out.report.extra["baseline"] = {{"window_mean", baseline}};
  out.report.extra["runs"] = runs;
  return out;
}

}  // namespace fpt::tasks
