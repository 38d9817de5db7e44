#include "fpt/tasks/config.hpp"

#include <cmath>
#include <initializer_list>

#include <nlohmann/json.hpp>

#include "fpt/numerics/error.hpp"

namespace fpt::tasks {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::InvalidInput, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::InvalidInput, "unknown key '" + key + "' in " + where);
  }
}

template <class F>
auto wrap_json(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, where + ": " + e.what());
  }
}

}  // namespace

TaskKind parse_task_kind(std::string_view s) {
  if (s == "forecast") return TaskKind::forecast;
  if (s == "imputation") return TaskKind::imputation;
  if (s == "classification") return TaskKind::classification;
  if (s == "anomaly") return TaskKind::anomaly;
  fail(ErrorKind::InvalidInput, "unknown task kind '" + std::string(s) + "'");
}

std::string_view to_string(TaskKind k) noexcept {
  switch (k) {
    case TaskKind::forecast: return "forecast";
    case TaskKind::imputation: return "imputation";
    case TaskKind::classification: return "classification";
    case TaskKind::anomaly: return "anomaly";
  }
  return "?";
}

TaskSpec TaskSpec::forecast(std::size_t horizon) {
  TaskSpec t;
  t.kind = TaskKind::forecast;
  t.horizon = horizon;
  return t;
}

TaskSpec TaskSpec::imputation(std::vector<double> ratios) {
  TaskSpec t;
  t.kind = TaskKind::imputation;
  t.mask_ratios = std::move(ratios);
  return t;
}

TaskSpec TaskSpec::classification(std::size_t n_classes) {
  TaskSpec t;
  t.kind = TaskKind::classification;
  t.n_classes = n_classes;
  return t;
}

TaskSpec TaskSpec::anomaly(double quantile) {
  TaskSpec t;
  t.kind = TaskKind::anomaly;
  t.anomaly_quantile = quantile;
  return t;
}

void TaskSpec::validate() const {
  const bool f = kind == TaskKind::forecast, i = kind == TaskKind::imputation, c = kind == TaskKind::classification,
             a = kind == TaskKind::anomaly;
  const std::string name(to_string(kind));
  require(horizon.has_value() == f, ErrorKind::InvalidInput,
          f ? "forecast task needs a horizon" : name + " task must not set horizon");
  require(!mask_ratios.empty() == i, ErrorKind::InvalidInput,
          i ? "imputation task needs mask ratios" : name + " task must not set mask ratios");
  require(n_classes.has_value() == c, ErrorKind::InvalidInput,
          c ? "classification task needs n_classes" : name + " task must not set n_classes");
  require(anomaly_quantile.has_value() == a, ErrorKind::InvalidInput,
          a ? "anomaly task needs a quantile" : name + " task must not set anomaly_quantile");
  if (f) require(*horizon >= 1, ErrorKind::InvalidInput, "horizon must be positive");
  for (double r : mask_ratios)
    require(r > 0.0 && r < 1.0, ErrorKind::InvalidInput, "mask ratio " + std::to_string(r) + " not in (0, 1)");
  if (c) require(*n_classes >= 2, ErrorKind::InvalidInput, "classification needs n_classes >= 2");
  if (a)
    require(*anomaly_quantile > 0.0 && *anomaly_quantile < 1.0, ErrorKind::InvalidInput,
            "anomaly quantile must be in (0, 1)");
  if (c) series_split.validate();
}

AblationArm parse_ablation_arm(std::string_view s) {
  for (auto a : kAllArms)
    if (to_string(a) == s) return a;
  fail(ErrorKind::InvalidInput, "unknown ablation arm '" + std::string(s) + "'");
}

std::string_view to_string(AblationArm a) noexcept {
  switch (a) {
    case AblationArm::fpt: return "fpt";
    case AblationArm::no_freeze: return "no_freeze";
    case AblationArm::no_pretrain: return "no_pretrain";
    case AblationArm::no_pretrain_freeze: return "no_pretrain_freeze";
    case AblationArm::gpt0: return "gpt0";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::InvalidInput, "epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::InvalidInput, "batch_size must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::InvalidInput,
          "learning_rate must be finite and >= 0");
  require(early_stop_patience >= 1, ErrorKind::InvalidInput, "early_stop_patience must be >= 1");
}

void RunSpec::validate() const {
  task.validate();
  train.validate();
  require(window.lookback >= 1 && window.stride >= 1, ErrorKind::InvalidInput,
          "window lookback and stride must be positive");
  require(patch_stride >= 1, ErrorKind::InvalidInput, "patch_stride must be positive");
  require(revin_eps >= 0.0, ErrorKind::InvalidInput, "revin_eps must be >= 0");
  if (task.kind != TaskKind::classification)
    require(window.lookback >= backbone.patch_len, ErrorKind::InvalidInput,
            "lookback " + std::to_string(window.lookback) + " shorter than patch_len " +
                std::to_string(backbone.patch_len));
  auto b = backbone;
  b.head_tokens = 1;
  b.validate();
}

nlohmann::json to_json(const TaskSpec& t) {
  nlohmann::json j{{"kind", to_string(t.kind)}};
  if (t.horizon) j["horizon"] = *t.horizon;
  if (!t.mask_ratios.empty()) j["mask_ratios"] = t.mask_ratios;
  if (t.n_classes) j["n_classes"] = *t.n_classes;
  if (t.anomaly_quantile) j["anomaly_quantile"] = *t.anomaly_quantile;
  if (t.kind == TaskKind::imputation) j["mask_channel"] = t.mask_channel;
  if (t.kind == TaskKind::anomaly) {
    j["point_adjust"] = t.point_adjust;
    j["window_revin"] = t.window_revin;
  }
  if (t.kind == TaskKind::classification)
    j["series_split"] = {t.series_split.train_fraction, t.series_split.val_fraction, t.series_split.test_fraction};
  return j;
}

nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"early_stop_patience", t.early_stop_patience},
          {"seed", t.seed},
          {"ablation", to_string(t.ablation)},
          {"max_steps_per_epoch", t.max_steps_per_epoch}};
}

nlohmann::json to_json(const RunSpec& s) {
  return {{"task", to_json(s.task)},
          {"window",
           {{"lookback", s.window.lookback},
            {"horizon", s.window.horizon},
            {"stride", s.window.stride},
            {"extend_into_previous", s.window.extend_into_previous}}},
          {"patch_stride", s.patch_stride},
          {"backbone", backbone::to_json(s.backbone)},
          {"train", to_json(s.train)},
          {"revin_eps", s.revin_eps}};
}

TaskSpec task_spec_from_json(const nlohmann::json& j) {
  return wrap_json("task", [&] {
    check_keys(j,
               {"kind", "horizon", "mask_ratios", "n_classes", "anomaly_quantile", "anomaly_ratio", "mask_channel",
                "point_adjust", "window_revin", "series_split"},
               "task");
    require(j.contains("kind"), ErrorKind::InvalidInput, "task.kind is required");
    TaskSpec t;
    t.kind = parse_task_kind(j.at("kind").get<std::string>());
    if (j.contains("horizon")) t.horizon = j["horizon"].get<std::size_t>();
    if (j.contains("mask_ratios")) t.mask_ratios = j["mask_ratios"].get<std::vector<double>>();
    if (j.contains("n_classes")) t.n_classes = j["n_classes"].get<std::size_t>();
    if (j.contains("anomaly_quantile")) t.anomaly_quantile = j["anomaly_quantile"].get<double>();
    if (j.contains("anomaly_ratio")) {
      require(!j.contains("anomaly_quantile"), ErrorKind::InvalidInput,
              "set anomaly_quantile or anomaly_ratio, not both");
      const double r = j["anomaly_ratio"].get<double>();
      require(r > 0.0 && r < 1.0, ErrorKind::InvalidInput, "anomaly_ratio must be in (0, 1)");
      t.anomaly_quantile = 1.0 - r;
    }
    t.mask_channel = j.value("mask_channel", false);
    t.point_adjust = j.value("point_adjust", false);
    t.window_revin = j.value("window_revin", false);
    if (j.contains("series_split")) {
      const auto f = j["series_split"].get<std::vector<double>>();
      require(f.size() == 3, ErrorKind::InvalidInput, "series_split needs three fractions");
      t.series_split = {f[0], f[1], f[2]};
    }
    t.validate();
    return t;
  });
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t) {
  return wrap_json("train", [&] {
    check_keys(j,
               {"epochs", "batch_size", "learning_rate", "early_stop_patience", "seed", "ablation",
                "max_steps_per_epoch"},
               "train");
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.early_stop_patience = j.value("early_stop_patience", t.early_stop_patience);
    t.seed = j.value("seed", t.seed);
    if (j.contains("ablation")) t.ablation = parse_ablation_arm(j["ablation"].get<std::string>());
    t.max_steps_per_epoch = j.value("max_steps_per_epoch", t.max_steps_per_epoch);
    t.validate();
    return t;
  });
}

RunSpec run_spec_from_json(const nlohmann::json& j) {
  return wrap_json("run spec", [&] {
    check_keys(j, {"task", "window", "patch_stride", "backbone", "train", "revin_eps"}, "run spec");
    require(j.contains("task"), ErrorKind::InvalidInput, "'task' section is required");
    RunSpec s;
    s.task = task_spec_from_json(j["task"]);
    if (j.contains("window")) {
      const auto& w = j["window"];
      check_keys(w, {"lookback", "horizon", "stride", "extend_into_previous"}, "window");
      s.window.lookback = w.value("lookback", s.window.lookback);
      s.window.horizon = w.value("horizon", s.window.horizon);
      s.window.stride = w.value("stride", s.window.stride);
      s.window.extend_into_previous = w.value("extend_into_previous", s.window.extend_into_previous);
    }
    if (s.task.horizon) s.window.horizon = *s.task.horizon;
    s.patch_stride = j.value("patch_stride", s.patch_stride);
    if (j.contains("backbone")) {
      check_keys(j["backbone"],
                 {"n_layers", "d_model", "n_heads", "d_ff", "max_tokens", "dropout", "causal", "ln_eps", "patch_len",
                  "pooling", "head_tokens", "head_out"},
                 "backbone");
      s.backbone = backbone::backbone_config_from_json(j["backbone"], s.backbone);
    }
    if (j.contains("train")) s.train = train_config_from_json(j["train"]);
    s.revin_eps = j.value("revin_eps", s.revin_eps);
    s.validate();
    return s;
  });
}

}  // namespace fpt::tasks
