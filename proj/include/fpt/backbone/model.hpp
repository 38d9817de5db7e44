#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpt/backbone/params.hpp"
#include "fpt/numerics/matrix.hpp"

namespace fpt::backbone {

enum class AttentionMode { softmax, pca };

struct ForwardOptions {
  AttentionMode mode = AttentionMode::softmax;
  std::size_t pca_components = 0;  // m, used when mode == pca
  bool training = false;           // enables dropout
  std::uint64_t dropout_seed = 0;
  bool apply_head = true;
  bool keep_trace = false;
};

/// Residual-stream outputs, embedding output first; n_layers + 1 entries.
struct ForwardTrace {
  std::vector<Matrix> layers;
};

template <class T>
struct ForwardOutput {
  BasicMatrix<T> head_input;  // final LayerNorm output, n_tokens x d_model
  std::vector<T> prediction;  // output head, empty when apply_head is false
  ForwardTrace trace;
};

/// tokens: n_tokens x patch_len. Throws InvalidInput when n_tokens exceeds
/// max_tokens and ShapeError when the width is not patch_len.
template <class T>
ForwardOutput<T> forward(const BasicParameterStore<T>& store, const BackboneConfig& cfg, const BasicMatrix<T>& tokens,
                         const ForwardOptions& opts = {});

enum class LossKind { mse, masked_mse, cross_entropy };

LossKind parse_loss(const std::string& s);

/// One training example. `weight` is used by masked_mse (empty means all
/// ones); `label` by cross_entropy.
template <class T>
struct Example {
  BasicMatrix<T> tokens;
  std::vector<T> target;
  std::vector<T> weight;
  std::size_t label = 0;
};

/// Per-example loss; writes dL/dy * scale into dy when non-null.
template <class T>
double example_loss(LossKind kind, std::span<const T> y, const Example<T>& ex, std::vector<T>* dy = nullptr,
                    T scale = T{1});

/// Mean loss over the batch (forward only).
template <class T>
double batch_loss(const BasicParameterStore<T>& store, const BackboneConfig& cfg, std::span<const Example<T>> batch,
                  LossKind kind, const ForwardOptions& opts = {});

/// Mean batch loss and its gradient, accumulated into `grad` (same layout as
/// store, overwritten). Tensors with need[i] == 0 get no gradient (left
/// zero); a null `need` computes all. The batch is split into fixed shards
/// reduced in shard order, so results do not depend on the thread count.
/// Softmax mode only.
template <class T>
double loss_and_gradient(const BasicParameterStore<T>& store, const BackboneConfig& cfg,
                         std::span<const Example<T>> batch, LossKind kind, BasicParameterStore<T>& grad,
                         const std::vector<char>* need = nullptr, const ForwardOptions& opts = {});

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  BasicParameterStore<T> m;
  BasicParameterStore<T> v;

  static AdamState for_store(const BasicParameterStore<T>& store) {
    AdamState s;
    s.m = store;
    s.m.fill(T{0});
    s.v = s.m;
    return s;
  }
};

/// One Adam step on the trainable tensors. Frozen tensors are not touched.
/// Returns the batch loss before the update; NumericalFailure if it is not
/// finite.
template <class T>
double backward_and_step(BasicParameterStore<T>& store, const BackboneConfig& cfg, std::span<const Example<T>> batch,
                         LossKind kind, AdamState<T>& adam, const FreezeMask& freeze, double learning_rate,
                         const ForwardOptions& opts = {});

}  // namespace fpt::backbone
