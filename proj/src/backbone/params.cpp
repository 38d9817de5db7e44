#include "fpt/backbone/params.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

namespace fpt::backbone {

void BackboneConfig::validate() const {
  require(d_model >= 1 && n_heads >= 1 && d_ff >= 1 && max_tokens >= 1 && patch_len >= 1 && head_out >= 1,
          ErrorKind::InvalidInput, "backbone dimensions must be positive");
  require(d_model % n_heads == 0, ErrorKind::InvalidInput,
          "d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::InvalidInput, "dropout must be in [0, 1)");
  require(ln_eps > 0.0, ErrorKind::InvalidInput, "LayerNorm eps must be positive");
  require(pooling != HeadPooling::flatten || (head_tokens >= 1 && head_tokens <= max_tokens),
          ErrorKind::InvalidInput, "flatten head needs 1 <= head_tokens <= max_tokens");
}

nlohmann::json to_json(const BackboneConfig& c) {
  return {{"n_layers", c.n_layers},     {"d_model", c.d_model},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},
          {"max_tokens", c.max_tokens}, {"dropout", c.dropout},
          {"causal", c.causal},         {"ln_eps", c.ln_eps},
          {"patch_len", c.patch_len},   {"pooling", c.pooling == HeadPooling::flatten ? "flatten" : "mean"},
          {"head_tokens", c.head_tokens}, {"head_out", c.head_out}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j, BackboneConfig c) {
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.dropout = j.value("dropout", c.dropout);
  c.causal = j.value("causal", c.causal);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.patch_len = j.value("patch_len", c.patch_len);
  if (j.contains("pooling")) {
    const auto p = j["pooling"].get<std::string>();
    require(p == "flatten" || p == "mean", ErrorKind::InvalidInput, "pooling must be flatten or mean");
    c.pooling = p == "flatten" ? HeadPooling::flatten : HeadPooling::mean;
  }
  c.head_tokens = j.value("head_tokens", c.head_tokens);
  c.head_out = j.value("head_out", c.head_out);
  return c;
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) noexcept {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

std::vector<TensorSpec> parameter_layout(const BackboneConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  std::vector<TensorSpec> out = {
      {"input_embedding.w", {cfg.patch_len, d}},
      {"input_embedding.b", {d}},
      {"pos_embedding", {cfg.max_tokens, d}},
  };
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gamma", {d}});
    out.push_back({p + "ln1.beta", {d}});
    for (const char* w : {"wq", "wk", "wv", "wo"}) out.push_back({p + "attn." + w, {d, d}});
    for (const char* b : {"bq", "bk", "bv", "bo"}) out.push_back({p + "attn." + b, {d}});
    out.push_back({p + "ln2.gamma", {d}});
    out.push_back({p + "ln2.beta", {d}});
    out.push_back({p + "mlp.w1", {d, cfg.d_ff}});
    out.push_back({p + "mlp.b1", {cfg.d_ff}});
    out.push_back({p + "mlp.w2", {cfg.d_ff, d}});
    out.push_back({p + "mlp.b2", {d}});
  }
  out.push_back({"ln_f.gamma", {d}});
  out.push_back({"ln_f.beta", {d}});
  out.push_back({"output_head.w", {cfg.head_in(), cfg.head_out}});
  out.push_back({"output_head.b", {cfg.head_out}});
  return out;
}

template <class T>
void check_layout(const BasicParameterStore<T>& store, const BackboneConfig& cfg) {
  const auto layout = parameter_layout(cfg);
  for (const auto& spec : layout) {
    require(store.contains(spec.name), ErrorKind::FormatError, "missing tensor " + spec.name);
    const auto& t = store.at(spec.name);
    require(t.shape == spec.shape, ErrorKind::ShapeError,
            spec.name + ": expected " + shape_string(spec.shape) + ", got " + shape_string(t.shape));
  }
  require(store.size() == layout.size(), ErrorKind::FormatError,
          "store has " + std::to_string(store.size()) + " tensors, layout expects " + std::to_string(layout.size()));
}

template void check_layout(const BasicParameterStore<float>&, const BackboneConfig&);
template void check_layout(const BasicParameterStore<double>&, const BackboneConfig&);

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_layer_norm(std::string_view name) {
  return ends_with(name, ".gamma") || ends_with(name, ".beta");
}

bool is_bias(std::string_view name) {
  return ends_with(name, ".b") || ends_with(name, ".b1") || ends_with(name, ".b2") || ends_with(name, ".bq") ||
         ends_with(name, ".bk") || ends_with(name, ".bv") || ends_with(name, ".bo");
}

}  // namespace

ParameterStore init_random(const BackboneConfig& cfg, RandomStream& rng) {
  auto store = ParameterStore::zeros(cfg);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.names()[i];
    auto& t = store.at(i);
    if (is_layer_norm(name)) {
      if (ends_with(name, ".gamma")) std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else if (!is_bias(name)) {
      for (auto& v : t.data) v = static_cast<float>(rng.gaussian(0.0, 0.02));
    }
  }
  return store;
}

bool is_frozen_block_tensor(std::string_view name) noexcept {
  return name.find(".attn.") != std::string_view::npos || name.find(".mlp.") != std::string_view::npos;
}

ParameterStore mix_weights(const ParameterStore& pretrained, const ParameterStore& random, double ratio,
                           RandomStream& rng, MixMode mode) {
  require(ratio >= 0.0 && ratio <= 1.0, ErrorKind::InvalidInput, "mix ratio must be in [0, 1]");
  require(pretrained.names() == random.names(), ErrorKind::ShapeError, "mix_weights: stores have different tensors");
  ParameterStore out = pretrained;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& name = out.names()[i];
    const auto& r = random.at(i);
    auto& t = out.at(i);
    require(t.shape == r.shape, ErrorKind::ShapeError,
            "mix_weights: " + name + " " + shape_string(t.shape) + " vs " + shape_string(r.shape));
    if (!is_frozen_block_tensor(name)) continue;
    if (mode == MixMode::replace) {
      for (std::size_t k = 0; k < t.data.size(); ++k)
        if (rng.bernoulli(ratio)) t.data[k] = r.data[k];
    } else {
      for (std::size_t k = 0; k < t.data.size(); ++k)
        t.data[k] = static_cast<float>((1.0 - ratio) * t.data[k] + ratio * r.data[k]);
    }
  }
  return out;
}

template <class T>
std::uint64_t parameter_hash(const BasicParameterStore<T>& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < store.size(); ++i) {
    mix(store.names()[i].data(), store.names()[i].size());
    const auto& t = store.at(i);
    mix(t.shape.data(), t.shape.size() * sizeof(std::size_t));
    mix(t.data.data(), t.data.size() * sizeof(T));
  }
  return h;
}

template std::uint64_t parameter_hash(const BasicParameterStore<float>&);
template std::uint64_t parameter_hash(const BasicParameterStore<double>&);

}  // namespace fpt::backbone
