#include <algorithm>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "fpt/metrics/metrics.hpp"

namespace fpt::tasks {

using backbone::Example;

namespace {

Example<float> autoencode_example(std::span<const double> x, const RunSpec& spec, preprocess::InstanceStats* stats,
                                  const preprocess::InstanceStats* fixed) {
  preprocess::Normalized n;
  if (fixed) {
    n.stats = *fixed;
    for (double v : x) n.values.push_back((v - fixed->mean) / fixed->effective_std());
  } else {
    n = preprocess::revin_normalize(x, spec.revin_eps);
  }
  Example<float> ex;
  ex.tokens = preprocess::patchify(n.values, {spec.backbone.patch_len, spec.patch_stride}).cast<float>();
  for (double v : n.values) ex.target.push_back(static_cast<float>(v));
  if (stats) *stats = n.stats;
  return ex;
}

/// Per-channel mean and std of the train split.
std::vector<preprocess::InstanceStats> train_scaler(const data::TimeSeriesDataset& d, const RunSpec& spec) {
  std::vector<preprocess::InstanceStats> out;
  const auto seg = d.segment(data::Split::train);
  for (std::size_t c = 0; c < d.n_channels(); ++c) {
    Vector x(seg.rows());
    for (std::size_t t = 0; t < seg.rows(); ++t) x[t] = seg(t, c);
    out.push_back(preprocess::revin_normalize(x, spec.revin_eps).stats);
  }
  return out;
}

std::vector<Example<float>> autoencode_set(const data::TimeSeriesDataset& d, const RunSpec& spec, data::Split split,
                                           const std::vector<preprocess::InstanceStats>* scaler) {
  data::WindowSpec w = spec.window;
  w.horizon = 0;
  std::vector<Example<float>> out;
  const auto series = data::channel_split(d);
  for (std::size_t c = 0; c < series.size(); ++c)
    for (const auto& win : data::make_windows(series[c], w, split))
      out.push_back(autoencode_example(win.input.flat(), spec, nullptr, scaler ? &(*scaler)[c] : nullptr));
  return out;
}

/// Squared reconstruction error of every step of the split, averaged over
/// channels. Non-overlapping windows tile the segment; the last one is
/// aligned to the segment end and only scores steps not yet covered.
Vector point_errors(const backbone::ParameterStore& store, const backbone::BackboneConfig& cfg,
                    const data::TimeSeriesDataset& d, const RunSpec& spec, data::Split split,
                    const std::vector<preprocess::InstanceStats>* scaler) {
  const std::size_t begin = d.bounds.begin(split), end = d.bounds.end(split), len = spec.window.lookback;
  require(end - begin >= len, ErrorKind::InsufficientData,
          std::string(data::to_string(split)) + " segment shorter than the window length " + std::to_string(len));
  std::vector<std::size_t> starts;
  for (std::size_t s = begin; s + len <= end; s += len) starts.push_back(s);
  if (starts.back() + len < end) starts.push_back(end - len);

  Vector err(end - begin, 0.0);
  for (std::size_t c = 0; c < d.n_channels(); ++c) {
    const Vector x = d.channel(c);
    std::vector<Example<float>> batch;
    std::vector<preprocess::InstanceStats> stats(starts.size());
    for (std::size_t k = 0; k < starts.size(); ++k)
      batch.push_back(autoencode_example(std::span<const double>(x).subspan(starts[k], len), spec, &stats[k],
                                                scaler ? &(*scaler)[c] : nullptr));
    const auto pred = predict(store, cfg, batch);
    std::size_t covered = begin;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const Vector p(pred[k].begin(), pred[k].end());
      const auto back = preprocess::revin_denormalize(p, stats[k]);
      for (std::size_t t = std::max(covered, starts[k]); t < starts[k] + len; ++t) {
        const double e = back[t - starts[k]] - x[t];
        err[t - begin] += e * e / static_cast<double>(d.n_channels());
      }
      covered = starts[k] + len;
    }
  }
  return err;
}

}  // namespace

RunResult run_anomaly(const data::TimeSeriesDataset& d, const RunSpec& spec, const backbone::ParameterStore* weights) {
  spec.validate();
  require(spec.task.kind == TaskKind::anomaly, ErrorKind::InvalidInput, "anomaly runner needs an anomaly task");
  require(d.labels.has_value() && d.labels->size() == d.n_steps(), ErrorKind::InvalidInput,
          "anomaly detection needs one 0/1 label per timestep");
  const auto cfg = detail::flatten_head_config(spec, spec.window.lookback, spec.window.lookback);
  std::vector<preprocess::InstanceStats> scaler_stats;
  if (!spec.task.window_revin) scaler_stats = train_scaler(d, spec);
  const auto* scaler = spec.task.window_revin ? nullptr : &scaler_stats;
  const auto train = autoencode_set(d, spec, data::Split::train, scaler);
  const auto val = autoencode_set(d, spec, data::Split::val, scaler);
  auto r = detail::train_on(spec, cfg, train, val, backbone::LossKind::mse, weights);

  const double q = *spec.task.anomaly_quantile;
  const double threshold = quantile(point_errors(r.store, r.cfg, d, spec, data::Split::train, scaler), q);
  const auto test_err = point_errors(r.store, r.cfg, d, spec, data::Split::test, scaler);
  const std::size_t t0 = d.bounds.begin(data::Split::test);
  std::vector<int> pred(test_err.size()), truth(test_err.size());
  for (std::size_t i = 0; i < test_err.size(); ++i) {
    pred[i] = test_err[i] > threshold ? 1 : 0;
    truth[i] = (*d.labels)[t0 + i] != 0 ? 1 : 0;
  }
  const auto s = metrics::prf1(pred, truth, spec.task.point_adjust);

  r.report = detail::base_report("anomaly", d, spec);
  r.report.add_row("test").values = {{"precision", s.precision}, {"recall", s.recall}, {"F1", s.f1}};
  r.report.warnings = s.warnings;
  r.report.extra["threshold"] = threshold;
  r.report.extra["quantile"] = q;
  r.report.extra["point_adjust"] = spec.task.point_adjust;
  r.report.extra["normalization"] = spec.task.window_revin ? "window_revin" : "train_zscore";
  r.report.extra["flagged"] = std::count(pred.begin(), pred.end(), 1);
  detail::record_history(r.report, r.history);
  return r;
}

}  // namespace fpt::tasks
