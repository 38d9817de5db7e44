#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace fpt::tasks {

using backbone::Example;

RunResult run_classification(const data::TimeSeriesDataset& d, const RunSpec& spec,
                             const backbone::ParameterStore* weights) {
  spec.validate();
  require(spec.task.kind == TaskKind::classification, ErrorKind::InvalidInput,
          "classification runner needs a classification task");
  const std::size_t n_classes = *spec.task.n_classes;
  const std::size_t n = d.n_channels();
  require(d.labels.has_value() && d.labels->size() == n, ErrorKind::InvalidInput,
          "classification needs one label per series (" + std::to_string(n) + " series)");
  std::set<int> seen;
  for (int l : *d.labels) {
    require(l >= 0 && static_cast<std::size_t>(l) < n_classes, ErrorKind::InvalidInput,
            "label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
    seen.insert(l);
  }
  require(seen.size() >= 2, ErrorKind::InvalidInput, "classification corpus holds a single class");

  backbone::BackboneConfig cfg = spec.backbone;
  const preprocess::PatchConfig pc{cfg.patch_len, spec.patch_stride};
  const std::size_t tokens = preprocess::patch_count(d.n_steps(), pc);
  require(tokens >= 1 && tokens <= cfg.max_tokens, ErrorKind::InvalidInput,
          "series of " + std::to_string(d.n_steps()) + " steps gives " + std::to_string(tokens) +
              " patches; need 1.." + std::to_string(cfg.max_tokens));
  cfg.pooling = backbone::HeadPooling::mean;
  cfg.head_out = n_classes;

  std::vector<Example<float>> all(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto norm = preprocess::revin_normalize(d.channel(c), spec.revin_eps);
    all[c].tokens = preprocess::patchify(norm.values, pc).cast<float>();
    all[c].label = static_cast<std::size_t>((*d.labels)[c]);
  }

  RandomStream rng(derive_seed(spec.train.seed, detail::kSplitStream));
  const auto order = rng.permutation(n);
  const auto& f = spec.task.series_split;
  const auto n_test = static_cast<std::size_t>(std::lround(f.test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(f.val_fraction * static_cast<double>(n)));
  require(n_test >= 1 && n_test + n_val < n, ErrorKind::InsufficientData,
          "too few series (" + std::to_string(n) + ") for the train/val/test split");
  std::vector<Example<float>> train, val, test;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_test ? test : i < n_test + n_val ? val : train;
    dst.push_back(all[order[i]]);
  }

  auto r = detail::train_on(spec, cfg, train, val, backbone::LossKind::cross_entropy, weights);
  const auto pred = predict(r.store, r.cfg, test);
  std::size_t correct = 0;
  std::vector<std::size_t> predicted;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::max_element(pred[i].begin(), pred[i].end()) - pred[i].begin());
    predicted.push_back(k);
    correct += k == test[i].label;
  }
  r.report = detail::base_report("classification", d, spec);
  r.report.add_row("test").values = {{"accuracy", static_cast<double>(correct) / static_cast<double>(test.size())}};
  r.report.extra["n_train"] = train.size();
  r.report.extra["n_test"] = test.size();
  r.report.extra["predicted"] = predicted;
  detail::record_history(r.report, r.history);
  return r;
}

}  // namespace fpt::tasks
