#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fpt/backbone/params.hpp"
#include "fpt/data/dataset.hpp"

namespace fpt::tasks {

enum class TaskKind { forecast, imputation, classification, anomaly };

TaskKind parse_task_kind(std::string_view s);
std::string_view to_string(TaskKind k) noexcept;

/// Exactly the fields of `kind` are populated; validate() enforces it.
struct TaskSpec {
  TaskKind kind = TaskKind::forecast;
  std::optional<std::size_t> horizon;            // forecast
  std::vector<double> mask_ratios;               // imputation
  std::optional<std::size_t> n_classes;          // classification
  std::optional<double> anomaly_quantile;        // anomaly

  // Secondary knobs with defaults; not part of the populated-field check.
  bool mask_channel = false;  // imputation: append the mask to every patch
  bool point_adjust = false;  // anomaly
  bool window_revin = false;  // anomaly: per-window RevIN instead of train-split z-score
  data::SplitSpec series_split{0.6, 0.1, 0.3};  // classification: fractions of series

  static TaskSpec forecast(std::size_t horizon);
  static TaskSpec imputation(std::vector<double> ratios);
  static TaskSpec classification(std::size_t n_classes);
  static TaskSpec anomaly(double quantile);

  void validate() const;
};

enum class AblationArm { fpt, no_freeze, no_pretrain, no_pretrain_freeze, gpt0 };

AblationArm parse_ablation_arm(std::string_view s);
std::string_view to_string(AblationArm a) noexcept;
inline constexpr AblationArm kAllArms[] = {AblationArm::fpt, AblationArm::gpt0, AblationArm::no_freeze,
                                           AblationArm::no_pretrain, AblationArm::no_pretrain_freeze};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t early_stop_patience = 3;
  std::uint64_t seed = 0;
  AblationArm ablation = AblationArm::fpt;
  std::size_t max_steps_per_epoch = 0;  // 0: full pass over the training windows

  void validate() const;
};

/// Everything a runner needs besides the data and optional weights. The
/// runner derives the head of `backbone` (head_tokens, head_out, pooling)
/// from the task, and for forecasting overrides window.horizon with
/// task.horizon.
struct RunSpec {
  TaskSpec task;
  data::WindowSpec window{96, 0, 1, false};
  std::size_t patch_stride = 8;  // patch length is backbone.patch_len
  backbone::BackboneConfig backbone;
  TrainConfig train;
  double revin_eps = 1e-5;

  void validate() const;
};

nlohmann::json to_json(const TaskSpec& t);
nlohmann::json to_json(const TrainConfig& t);
nlohmann::json to_json(const RunSpec& s);
/// Unknown keys are rejected with InvalidInput.
TaskSpec task_spec_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
RunSpec run_spec_from_json(const nlohmann::json& j);

}  // namespace fpt::tasks
