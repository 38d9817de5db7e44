#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "fpt/metrics/metrics.hpp"

namespace fpt::tasks {

using backbone::BackboneConfig;
using backbone::Example;
using backbone::ParameterStore;

namespace detail {

ForecastSet forecast_set(const data::TimeSeriesDataset& d, const data::WindowSpec& w, const RunSpec& spec,
                         data::Split split) {
  const preprocess::PatchConfig pc{spec.backbone.patch_len, spec.patch_stride};
  ForecastSet set;
  for (const auto& series : data::channel_split(d)) {
    for (const auto& win : data::make_windows(series, w, split)) {
      const auto n = preprocess::revin_normalize(win.input.flat(), spec.revin_eps);
      Example<float> ex;
      ex.tokens = preprocess::patchify(n.values, pc).cast<float>();
      const double scale = n.stats.effective_std();
      for (double v : win.target.flat()) ex.target.push_back(static_cast<float>((v - n.stats.mean) / scale));
      set.examples.push_back(std::move(ex));
      set.stats.push_back(n.stats);
      set.target.emplace_back(win.target.flat().begin(), win.target.flat().end());
      set.last_input.push_back(win.input.flat().back());
    }
  }
  return set;
}

BackboneConfig flatten_head_config(const RunSpec& spec, std::size_t length, std::size_t head_out) {
  BackboneConfig cfg = spec.backbone;
  const std::size_t tokens = preprocess::patch_count(length, {cfg.patch_len, spec.patch_stride});
  require(tokens >= 1, ErrorKind::InvalidInput,
          "window of " + std::to_string(length) + " steps yields no patch of length " + std::to_string(cfg.patch_len));
  require(tokens <= cfg.max_tokens, ErrorKind::InvalidInput,
          std::to_string(tokens) + " patches exceed max_tokens " + std::to_string(cfg.max_tokens));
  cfg.pooling = backbone::HeadPooling::flatten;
  cfg.head_tokens = tokens;
  cfg.head_out = head_out;
  cfg.validate();
  return cfg;
}

ForecastEval evaluate_forecast(const ParameterStore& store, const BackboneConfig& cfg, const ForecastSet& set) {
  const auto pred = predict(store, cfg, set.examples);
  ForecastEval e;
  Vector naive;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vector p(pred[i].begin(), pred[i].end());
    const auto back = preprocess::revin_denormalize(p, set.stats[i]);
    e.yhat.insert(e.yhat.end(), back.begin(), back.end());
    e.y.insert(e.y.end(), set.target[i].begin(), set.target[i].end());
    naive.insert(naive.end(), set.target[i].size(), set.last_input[i]);
  }
  require(!e.y.empty(), ErrorKind::InsufficientData, "no evaluation windows");
  e.mse = metrics::mse(e.y, e.yhat);
  e.mae = metrics::mae(e.y, e.yhat);
  e.naive_mse = metrics::mse(e.y, naive);
  e.naive_mae = metrics::mae(e.y, naive);
  return e;
}

RunResult train_on(const RunSpec& spec, const BackboneConfig& cfg, std::span<const Example<float>> train,
                   std::span<const Example<float>> val, backbone::LossKind loss, const ParameterStore* weights) {
  RandomStream rng(derive_seed(spec.train.seed, kInitStream));
  auto model = make_ablation(spec.train.ablation, cfg, rng, weights);
  RunResult r;
  r.history = train_model(model.store, model.cfg, model.mask, train, val, loss, spec.train);
  r.cfg = model.cfg;
  r.store = std::move(model.store);
  r.mask = std::move(model.mask);
  return r;
}

RunResult train_forecaster(const data::TimeSeriesDataset& d, const RunSpec& spec, const ParameterStore* weights) {
  const auto cfg = flatten_head_config(spec, spec.window.lookback, spec.window.horizon);
  const auto train = forecast_set(d, spec.window, spec, data::Split::train);
  const auto val = forecast_set(d, spec.window, spec, data::Split::val);
  return train_on(spec, cfg, train.examples, val.examples, backbone::LossKind::mse, weights);
}

metrics::MetricReport base_report(std::string_view task, const data::TimeSeriesDataset& d, const RunSpec& spec) {
  metrics::MetricReport r;
  r.task = std::string(task);
  r.dataset = d.name;
  r.seed = spec.train.seed;
  r.config_hash = metrics::config_hash(to_json(spec));
  r.extra["ablation"] = to_string(spec.train.ablation);
  return r;
}

void record_history(metrics::MetricReport& r, const TrainHistory& h) {
  r.extra["training"] = {{"epochs_run", h.epochs_run},
                         {"best_epoch", h.best_epoch},
                         {"steps", h.steps},
                         {"train_loss", h.train_loss},
                         {"val_loss", h.val_loss}};
}

}  // namespace detail

namespace {

RunSpec forecast_spec(const RunSpec& spec) {
  spec.validate();
  require(spec.task.kind == TaskKind::forecast, ErrorKind::InvalidInput, "forecast runner needs a forecast task");
  RunSpec s = spec;
  s.window.horizon = *s.task.horizon;
  return s;
}

}  // namespace

RunResult run_forecast(const data::TimeSeriesDataset& d, const RunSpec& spec, const ParameterStore* weights) {
  const RunSpec s = forecast_spec(spec);
  auto r = detail::train_forecaster(d, s, weights);
  const auto test = detail::forecast_set(d, s.window, s, data::Split::test);
  const auto e = detail::evaluate_forecast(r.store, r.cfg, test);
  r.report = detail::base_report("forecast", d, s);
  r.report.add_row("O=" + std::to_string(s.window.horizon)).values = {{"MSE", e.mse}, {"MAE", e.mae}};
  r.report.extra["baseline"] = {{"repeat_last", {{"MSE", e.naive_mse}, {"MAE", e.naive_mae}}}};
  r.report.extra["test_windows"] = test.examples.size();
  detail::record_history(r.report, r.history);
  return r;
}

metrics::MetricReport evaluate_forecaster(const data::TimeSeriesDataset& d, const RunSpec& spec,
                                          const ParameterStore& trained) {
  const RunSpec s = forecast_spec(spec);
  const auto cfg = detail::flatten_head_config(s, s.window.lookback, s.window.horizon);
  backbone::check_layout(trained, cfg);
  const auto test = detail::forecast_set(d, s.window, s, data::Split::test);
  const auto e = detail::evaluate_forecast(trained, cfg, test);
  auto r = detail::base_report("eval", d, s);
  r.add_row("O=" + std::to_string(s.window.horizon)).values = {{"MSE", e.mse}, {"MAE", e.mae}};
  r.extra["baseline"] = {{"repeat_last", {{"MSE", e.naive_mse}, {"MAE", e.naive_mae}}}};
  r.extra["test_windows"] = test.examples.size();
  r.extra["parameter_hash"] = backbone::parameter_hash(trained);
  return r;
}

metrics::MetricReport run_few_shot(const data::TimeSeriesDataset& d, std::span<const double> percents,
                                   const RunSpec& spec, const ParameterStore* weights) {
  const RunSpec s = forecast_spec(spec);
  require(!percents.empty(), ErrorKind::InvalidInput, "few-shot needs at least one percent");
  auto report = detail::base_report("fewshot", d, s);
  nlohmann::json per = nlohmann::json::array();
  for (double p : percents) {
    require(p > 0.0 && p <= 1.0, ErrorKind::InvalidInput, "few-shot percent must be in (0, 1]");
    const auto sub = data::few_shot_subset(d, p);
    const auto r = run_forecast(sub, s, weights);
    const auto& row = r.report.rows.front();
    char scope[32];
    std::snprintf(scope, sizeof scope, "percent=%g", p);
    report.add_row(scope).values = row.values;
    per.push_back({{"percent", p}, {"train_steps", sub.bounds.length(data::Split::train)},
                   {"training", r.report.extra["training"]}});
  }
  report.extra["percents"] = std::vector<double>(percents.begin(), percents.end());
  report.extra["runs"] = per;
  return report;
}

ZeroShotMetric parse_zero_shot_metric(std::string_view s) {
  if (s == "smape") return ZeroShotMetric::smape;
  if (s == "mape") return ZeroShotMetric::mape;
  if (s == "nd") return ZeroShotMetric::nd;
  if (s == "mse") return ZeroShotMetric::mse;
  fail(ErrorKind::InvalidInput, "unknown zero-shot metric '" + std::string(s) + "'");
}

std::string_view to_string(ZeroShotMetric m) noexcept {
  switch (m) {
    case ZeroShotMetric::smape: return "sMAPE";
    case ZeroShotMetric::mape: return "MAPE";
    case ZeroShotMetric::nd: return "ND";
    case ZeroShotMetric::mse: return "MSE";
  }
  return "?";
}

RunResult run_zero_shot(const data::TimeSeriesDataset& source, const data::TimeSeriesDataset& target,
                        const RunSpec& spec, const data::WindowSpec& target_window, ZeroShotMetric metric,
                        const ParameterStore* weights) {
  const RunSpec s = forecast_spec(spec);
  require(target_window.lookback == s.window.lookback && target_window.horizon == s.window.horizon,
          ErrorKind::InvalidInput,
          "target windows (L=" + std::to_string(target_window.lookback) + ", O=" +
              std::to_string(target_window.horizon) + ") incompatible with source (L=" +
              std::to_string(s.window.lookback) + ", O=" + std::to_string(s.window.horizon) + ")");
  auto r = detail::train_forecaster(source, s, weights);
  const auto before = backbone::parameter_hash(r.store);
  const auto test = detail::forecast_set(target, target_window, s, data::Split::test);
  const auto e = detail::evaluate_forecast(r.store, r.cfg, test);
  const auto after = backbone::parameter_hash(r.store);

  r.report = detail::base_report("zeroshot", target, s);
  auto& row = r.report.add_row("O=" + std::to_string(s.window.horizon));
  row.values = {{"MSE", e.mse}, {"MAE", e.mae}};
  double naive_metric = e.naive_mse;
  if (metric != ZeroShotMetric::mse) {
    Vector naive;
    for (std::size_t i = 0; i < test.target.size(); ++i) naive.insert(naive.end(), test.target[i].size(), test.last_input[i]);
    auto f = metric == ZeroShotMetric::smape ? metrics::smape : metric == ZeroShotMetric::mape ? metrics::mape : metrics::nd;
    row.values[std::string(to_string(metric))] = f(e.y, e.yhat);
    naive_metric = f(e.y, naive);
  }
  r.report.extra["source"] = source.name;
  r.report.extra["metric"] = to_string(metric);
  r.report.extra["baseline"] = {{"repeat_last", {{std::string(to_string(metric)), naive_metric}}}};
  r.report.extra["parameter_hash_before"] = before;
  r.report.extra["parameter_hash_after"] = after;
  detail::record_history(r.report, r.history);
  return r;
}

metrics::MetricReport run_ablation(const data::TimeSeriesDataset& d, const RunSpec& spec, const ParameterStore* weights,
                                   double percent, std::span<const AblationArm> arms) {
  RunSpec s = forecast_spec(spec);
  const auto sub = data::few_shot_subset(d, percent);
  auto report = detail::base_report("ablation", sub, s);
  report.extra.erase("ablation");
  report.extra["percent"] = percent;

  const auto cfg = detail::flatten_head_config(s, s.window.lookback, s.window.horizon);
  const auto test = detail::forecast_set(sub, s.window, s, data::Split::test);
  std::vector<std::vector<float>> step0[2];
  nlohmann::json runs = nlohmann::json::object();
  for (auto arm : arms) {
    s.train.ablation = arm;
    if (arm == AblationArm::fpt || arm == AblationArm::no_freeze) {
      RandomStream rng(derive_seed(s.train.seed, detail::kInitStream));
      const auto m = make_ablation(arm, cfg, rng, weights);
      step0[arm == AblationArm::fpt ? 0 : 1] = predict(m.store, m.cfg, test.examples);
    }
    const auto r = run_forecast(sub, s, weights);
    report.add_row(std::string(to_string(arm))).values = r.report.rows.front().values;
    runs[std::string(to_string(arm))] = r.report.extra["training"];
  }
  if (!step0[0].empty() && !step0[1].empty()) report.extra["step0_identical"] = step0[0] == step0[1];
  report.extra["runs"] = runs;
  return report;
}

}  // namespace fpt::tasks
