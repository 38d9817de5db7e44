#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fpt/numerics/error.hpp"
#include "fpt/numerics/rng.hpp"

namespace fpt::backbone {

enum class HeadPooling { flatten, mean };

/// Shape of the transformer stack plus the task-specific ends (patch input
/// width and output head).
struct BackboneConfig {
  std::size_t n_layers = 6;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_tokens = 64;
  double dropout = 0.0;
  bool causal = false;
  double ln_eps = 1e-5;

  std::size_t patch_len = 16;   // input embedding fan-in
  HeadPooling pooling = HeadPooling::flatten;
  std::size_t head_tokens = 1;  // tokens flattened into the head (flatten pooling)
  std::size_t head_out = 1;

  void validate() const;
  std::size_t head_dim() const noexcept { return d_model / n_heads; }
  std::size_t head_in() const noexcept { return pooling == HeadPooling::flatten ? head_tokens * d_model : d_model; }
};

nlohmann::json to_json(const BackboneConfig& cfg);
BackboneConfig backbone_config_from_json(const nlohmann::json& j, BackboneConfig defaults = {});

template <class T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  std::size_t numel() const noexcept { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape) noexcept;
std::string shape_string(const std::vector<std::size_t>& shape);

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

/// Canonical tensor names and shapes, in container order.
std::vector<TensorSpec> parameter_layout(const BackboneConfig& cfg);

/// Named tensors in canonical order.
template <class T>
class BasicParameterStore {
 public:
  BasicParameterStore() = default;

  /// Zero-filled store laid out for cfg.
  static BasicParameterStore zeros(const BackboneConfig& cfg) {
    BasicParameterStore s;
    for (auto& spec : parameter_layout(cfg)) s.add(spec.name, spec.shape);
    return s;
  }

  Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape, T fill = T{0}) {
    require(!index_.contains(name), ErrorKind::InvalidInput, "duplicate tensor '" + name + "'");
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    const std::size_t n = shape_numel(shape);
    tensors_.push_back(Tensor<T>{std::move(shape), std::vector<T>(n, fill)});
    return tensors_.back();
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const {
    const auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::FormatError, "no tensor named '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor<T>& at(const std::string& name) const { return tensors_[index_of(name)]; }
  Tensor<T>& at(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& at(std::size_t i) const { return tensors_[i]; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t numel() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  void fill(T value) {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), value);
  }

  template <class U>
  BasicParameterStore<U> cast() const {
    BasicParameterStore<U> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto& t = out.add(names_[i], tensors_[i].shape);
      for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] = static_cast<U>(tensors_[i].data[k]);
    }
    return out;
  }

  friend bool operator==(const BasicParameterStore& a, const BasicParameterStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParameterStore = BasicParameterStore<float>;

/// Throws ShapeError/FormatError unless store matches cfg's layout exactly.
template <class T>
void check_layout(const BasicParameterStore<T>& store, const BackboneConfig& cfg);

/// GPT-2 initialization: weights ~ N(0, 0.02^2), biases 0, LayerNorm gamma 1 beta 0.
ParameterStore init_random(const BackboneConfig& cfg, RandomStream& rng);

/// True for tensors inside the attention and feed-forward sublayers.
bool is_frozen_block_tensor(std::string_view name) noexcept;

/// Set of trainable tensor names; everything else is frozen.
struct FreezeMask {
  std::set<std::string> trainable;

  bool is_trainable(const std::string& name) const { return trainable.contains(name); }

  /// Embedding, positional embedding, every LayerNorm and the output head.
  template <class T>
  static FreezeMask fpt_default(const BasicParameterStore<T>& store) {
    FreezeMask m;
    for (const auto& n : store.names())
      if (!is_frozen_block_tensor(n)) m.trainable.insert(n);
    return m;
  }
  template <class T>
  static FreezeMask all(const BasicParameterStore<T>& store) {
    return FreezeMask{{store.names().begin(), store.names().end()}};
  }
};

enum class MixMode { replace, interpolate };

/// Blend frozen-block tensors of `pretrained` with `random`. replace: each
/// scalar independently swapped for the random entry with probability
/// `ratio`; interpolate: (1 - ratio) * pretrained + ratio * random. Tensors
/// outside attention/FFN are copied from `pretrained` untouched.
ParameterStore mix_weights(const ParameterStore& pretrained, const ParameterStore& random, double ratio,
                           RandomStream& rng, MixMode mode = MixMode::replace);

/// FNV-1a over names, shapes and raw bytes.
template <class T>
std::uint64_t parameter_hash(const BasicParameterStore<T>& store);

}  // namespace fpt::backbone
