#include <algorithm>
#include <cmath>
#include <limits>

#include "fpt/numerics/parallel.hpp"
#include "fpt/tasks/runners.hpp"

namespace fpt::tasks {

using backbone::BackboneConfig;
using backbone::Example;
using backbone::FreezeMask;
using backbone::ParameterStore;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kDropoutStream = 0x44524f50;

}  // namespace

void transfer_pretrained(const ParameterStore& from, ParameterStore& to, const BackboneConfig& to_cfg) {
  backbone::check_layout(to, to_cfg);
  for (std::size_t i = 0; i < to.size(); ++i) {
    const std::string& name = to.names()[i];
    const bool block = name.starts_with("blocks.");
    if (!from.contains(name)) {
      require(!block, ErrorKind::ShapeError,
              "pretrained weights lack " + name + " (too few layers for n_layers=" + std::to_string(to_cfg.n_layers) +
                  ")");
      continue;
    }
    const auto& src = from.at(name);
    auto& dst = to.at(i);
    if (src.shape == dst.shape) {
      dst.data = src.data;
    } else if (name == "pos_embedding" && src.shape.size() == 2 && src.shape[1] == dst.shape[1]) {
      const std::size_t n = std::min(src.shape[0], dst.shape[0]) * dst.shape[1];
      std::copy(src.data.begin(), src.data.begin() + static_cast<std::ptrdiff_t>(n), dst.data.begin());
    } else {
      require(!block && !name.starts_with("ln_f."), ErrorKind::ShapeError,
              name + ": pretrained " + backbone::shape_string(src.shape) + " vs model " +
                  backbone::shape_string(dst.shape));
    }
  }
}

AblationModel make_ablation(AblationArm arm, const BackboneConfig& cfg, RandomStream& rng,
                            const ParameterStore* weights) {
  AblationModel m;
  m.cfg = cfg;
  if (arm == AblationArm::gpt0) m.cfg.n_layers = 0;
  m.store = backbone::init_random(m.cfg, rng);
  if (arm == AblationArm::fpt || arm == AblationArm::no_freeze) {
    if (!weights)
      fail(ErrorKind::MissingWeights, "ablation arm " + std::string(to_string(arm)) + " needs pretrained weights");
    transfer_pretrained(*weights, m.store, m.cfg);
  } else if (arm == AblationArm::gpt0 && weights) {
    transfer_pretrained(*weights, m.store, m.cfg);
  }
  m.mask = (arm == AblationArm::fpt || arm == AblationArm::no_pretrain_freeze) ? FreezeMask::fpt_default(m.store)
                                                                                : FreezeMask::all(m.store);
  return m;
}

TrainHistory train_model(ParameterStore& store, const BackboneConfig& cfg, const FreezeMask& mask,
                         std::span<const Example<float>> train, std::span<const Example<float>> val,
                         backbone::LossKind loss, const TrainConfig& tc) {
  tc.validate();
  require(!train.empty(), ErrorKind::InsufficientData, "no training examples");
  auto adam = backbone::AdamState<float>::for_store(store);
  RandomStream rng(derive_seed(tc.seed, kShuffleStream));
  backbone::ForwardOptions opts;
  opts.training = cfg.dropout > 0.0;

  TrainHistory h;
  double best = std::numeric_limits<double>::infinity();
  ParameterStore best_store = store;
  std::size_t since_best = 0;
  std::vector<Example<float>> batch;
  batch.reserve(tc.batch_size);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto order = rng.permutation(train.size());
    std::size_t n_batches = (train.size() + tc.batch_size - 1) / tc.batch_size;
    if (tc.max_steps_per_epoch) n_batches = std::min(n_batches, tc.max_steps_per_epoch);
    double sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      batch.clear();
      const std::size_t end = std::min(train.size(), (b + 1) * tc.batch_size);
      for (std::size_t k = b * tc.batch_size; k < end; ++k) batch.push_back(train[order[k]]);
      opts.dropout_seed = derive_seed(tc.seed, kDropoutStream + h.steps);
      const double l = backbone::backward_and_step<float>(store, cfg, batch, loss, adam, mask, tc.learning_rate, opts);
      ++h.steps;
      sum += l;
      if (epoch == 1) h.first_epoch_steps.push_back(l);
    }
    h.train_loss.push_back(sum / static_cast<double>(n_batches));
    const double vl = val.empty() ? backbone::batch_loss<float>(store, cfg, train, loss)
                                  : backbone::batch_loss<float>(store, cfg, val, loss);
    h.val_loss.push_back(vl);
    h.epochs_run = epoch;
    if (vl < best) {
      best = vl;
      best_store = store;
      h.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tc.early_stop_patience) {
      break;
    }
  }
  store = std::move(best_store);
  return h;
}

std::vector<std::vector<float>> predict(const ParameterStore& store, const BackboneConfig& cfg,
                                        std::span<const Example<float>> examples) {
  std::vector<std::vector<float>> out(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    out[i] = backbone::forward<float>(store, cfg, examples[i].tokens).prediction;
  });
  return out;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::InvalidInput, "quantile of an empty set");
  require(q >= 0.0 && q <= 1.0, ErrorKind::InvalidInput, "quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace fpt::tasks
