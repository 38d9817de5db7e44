#include "fpt/backbone/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "fpt/numerics/linalg.hpp"
#include "fpt/numerics/parallel.hpp"
#include "fpt/numerics/rng.hpp"
#include "fpt/simd/kernels.hpp"

namespace fpt::backbone {

namespace {

constexpr std::size_t kShardSize = 4;

// Tensor indices for one layer in the store.
struct LayerIdx {
  std::size_t ln1_g, ln1_b, wq, wk, wv, wo, bq, bk, bv, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Indices {
  std::size_t in_w, in_b, pos, lnf_g, lnf_b, head_w, head_b;
  std::vector<LayerIdx> layers;
};

template <class T>
Indices resolve(const BasicParameterStore<T>& s, const BackboneConfig& cfg) {
  Indices ix{s.index_of("input_embedding.w"), s.index_of("input_embedding.b"), s.index_of("pos_embedding"),
             s.index_of("ln_f.gamma"),        s.index_of("ln_f.beta"),        s.index_of("output_head.w"),
             s.index_of("output_head.b"),     {}};
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    auto at = [&](const char* n) { return s.index_of(p + n); };
    ix.layers.push_back({at("ln1.gamma"), at("ln1.beta"), at("attn.wq"), at("attn.wk"), at("attn.wv"), at("attn.wo"),
                         at("attn.bq"), at("attn.bk"), at("attn.bv"), at("attn.bo"), at("ln2.gamma"), at("ln2.beta"),
                         at("mlp.w1"), at("mlp.b1"), at("mlp.w2"), at("mlp.b2")});
  }
  return ix;
}

template <class T>
void add_bias(BasicMatrix<T>& m, const std::vector<T>& b) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
}

template <class T>
void col_sum_into(const BasicMatrix<T>& m, std::vector<T>& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) simd::axpy(T{1}, m.row(i), std::span<T>(out));
}

// out = in * W (+ b), in: n x a, W: a x b.
template <class T>
BasicMatrix<T> affine(const BasicMatrix<T>& in, const std::vector<T>& w, const std::vector<T>* b, std::size_t out_dim) {
  BasicMatrix<T> out(in.rows(), out_dim);
  simd::gemm_nn(in.data(), w.data(), out.data(), in.rows(), in.cols(), out_dim);
  if (b) add_bias(out, *b);
  return out;
}

template <class T>
struct LnCache {
  BasicMatrix<T> xhat;
  std::vector<T> rstd;
};

template <class T>
BasicMatrix<T> layer_norm_fwd(const BasicMatrix<T>& x, const std::vector<T>& g, const std::vector<T>& b, double eps,
                              LnCache<T>* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  BasicMatrix<T> y(n, d);
  if (cache) {
    cache->xhat = BasicMatrix<T>(n, d);
    cache->rstd.assign(n, T{0});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    T mean = 0;
    for (T v : r) mean += v;
    mean /= static_cast<T>(d);
    T var = 0;
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (r[j] - mean) * rstd;
      y(i, j) = g[j] * xh + b[j];
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return y;
}

// Returns dx; accumulates dgamma/dbeta when the pointers are non-null.
template <class T>
BasicMatrix<T> layer_norm_bwd(const BasicMatrix<T>& dy, const LnCache<T>& c, const std::vector<T>& g,
                              std::vector<T>* dg, std::vector<T>* db) {
  const std::size_t n = dy.rows(), d = dy.cols();
  BasicMatrix<T> dx(n, d);
  std::vector<T> dxh(d);
  for (std::size_t i = 0; i < n; ++i) {
    T m1 = 0, m2 = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dxh[j] = dy(i, j) * g[j];
      m1 += dxh[j];
      m2 += dxh[j] * c.xhat(i, j);
      if (dg) (*dg)[j] += dy(i, j) * c.xhat(i, j);
      if (db) (*db)[j] += dy(i, j);
    }
    m1 /= static_cast<T>(d);
    m2 /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) dx(i, j) = c.rstd[i] * (dxh[j] - m1 - c.xhat(i, j) * m2);
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  return T{0.5} * x * (T{1} + std::tanh(u));
}

template <class T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  const T t = std::tanh(u);
  return T{0.5} * (T{1} + t) +
         T{0.5} * x * (T{1} - t * t) * static_cast<T>(kGeluC) * (T{1} + T{3} * static_cast<T>(kGeluA) * x * x);
}

template <class T>
std::vector<T> dropout_mask(std::size_t n, double p, RandomStream& rng) {
  std::vector<T> mask(n);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = rng.bernoulli(p) ? T{0} : keep;
  return mask;
}

template <class T>
void apply_mask(BasicMatrix<T>& m, const std::vector<T>& mask) {
  auto f = m.flat();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= mask[i];
}

template <class T>
struct LayerCache {
  LnCache<T> ln1, ln2;
  BasicMatrix<T> a, q, k, v, o;
  std::vector<BasicMatrix<T>> probs;  // per head, n x n
  std::vector<T> drop_attn, drop_mlp;
  BasicMatrix<T> b, hpre, g;
};

template <class T>
struct Cache {
  BasicMatrix<T> tokens;
  std::vector<LayerCache<T>> layers;
  LnCache<T> lnf;
  std::vector<T> pooled;
};

template <class T>
class Model {
 public:
  Model(const BasicParameterStore<T>& store, const BackboneConfig& cfg) : s_(store), cfg_(cfg), ix_(resolve(store, cfg)) {}

  const std::vector<T>& p(std::size_t i) const { return s_.at(i).data; }

  ForwardOutput<T> run(const BasicMatrix<T>& tokens, const ForwardOptions& opts, Cache<T>* cache) const {
    const std::size_t n = tokens.rows(), d = cfg_.d_model;
    require(tokens.cols() == cfg_.patch_len, ErrorKind::ShapeError,
            "tokens have width " + std::to_string(tokens.cols()) + ", expected patch_len " +
                std::to_string(cfg_.patch_len));
    require(n >= 1, ErrorKind::InvalidInput, "forward needs at least one token");
    require(n <= cfg_.max_tokens, ErrorKind::InvalidInput,
            std::to_string(n) + " tokens exceed max_tokens " + std::to_string(cfg_.max_tokens));
    if (opts.mode == AttentionMode::pca)
      require(opts.pca_components >= 1 && opts.pca_components <= d, ErrorKind::InvalidInput,
              "pca_components must be in [1, d_model]");
    const bool drop = opts.training && cfg_.dropout > 0.0;
    RandomStream rng(opts.dropout_seed);

    ForwardOutput<T> out;
    if (cache) {
      cache->tokens = tokens;
      cache->layers.assign(cfg_.n_layers, {});
    }
    BasicMatrix<T> x = affine(tokens, p(ix_.in_w), &p(ix_.in_b), d);
    const auto& pos = p(ix_.pos);
    for (std::size_t i = 0; i < n; ++i) simd::axpy(T{1}, std::span<const T>(pos.data() + i * d, d), x.row(i));
    if (opts.keep_trace) out.trace.layers.push_back(x.template cast<double>());

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const auto& L = ix_.layers[l];
      LayerCache<T>* lc = cache ? &cache->layers[l] : nullptr;
      BasicMatrix<T> a = layer_norm_fwd(x, p(L.ln1_g), p(L.ln1_b), cfg_.ln_eps, lc ? &lc->ln1 : nullptr);
      BasicMatrix<T> att =
          opts.mode == AttentionMode::pca ? pca_attention(a, opts.pca_components) : attention(a, L, lc);
      if (drop) {
        auto mask = dropout_mask<T>(att.size(), cfg_.dropout, rng);
        apply_mask(att, mask);
        if (lc) lc->drop_attn = std::move(mask);
      }
      if (lc) lc->a = std::move(a);
      simd::axpy(T{1}, att.flat(), x.flat());

      BasicMatrix<T> b = layer_norm_fwd(x, p(L.ln2_g), p(L.ln2_b), cfg_.ln_eps, lc ? &lc->ln2 : nullptr);
      BasicMatrix<T> h = affine(b, p(L.w1), &p(L.b1), cfg_.d_ff);
      BasicMatrix<T> g(h.rows(), h.cols());
      for (std::size_t i = 0; i < h.size(); ++i) g.flat()[i] = gelu(h.flat()[i]);
      BasicMatrix<T> m = affine(g, p(L.w2), &p(L.b2), d);
      if (drop) {
        auto mask = dropout_mask<T>(m.size(), cfg_.dropout, rng);
        apply_mask(m, mask);
        if (lc) lc->drop_mlp = std::move(mask);
      }
      if (lc) {
        lc->b = std::move(b);
        lc->hpre = std::move(h);
        lc->g = std::move(g);
      }
      simd::axpy(T{1}, m.flat(), x.flat());
      if (opts.keep_trace) out.trace.layers.push_back(x.template cast<double>());
    }

    out.head_input = layer_norm_fwd(x, p(ix_.lnf_g), p(ix_.lnf_b), cfg_.ln_eps, cache ? &cache->lnf : nullptr);
    if (opts.apply_head) {
      std::vector<T> pooled = pool(out.head_input);
      out.prediction.assign(cfg_.head_out, T{0});
      const auto& w = p(ix_.head_w);
      simd::gemm_nn(pooled.data(), w.data(), out.prediction.data(), 1, pooled.size(), cfg_.head_out);
      simd::axpy(T{1}, std::span<const T>(p(ix_.head_b)), std::span<T>(out.prediction));
      if (cache) cache->pooled = std::move(pooled);
    }
    return out;
  }

  // Backpropagates dy (gradient of the loss w.r.t. the head output) through
  // the cached forward pass, accumulating into grad.
  void backward(const Cache<T>& c, const ForwardOutput<T>& fwd, const std::vector<T>& dy, BasicParameterStore<T>& grad,
                const std::vector<char>& need) const {
    const std::size_t n = c.tokens.rows(), d = cfg_.d_model;
    auto G = [&](std::size_t i) -> std::vector<T>* { return need[i] ? &grad.at(i).data : nullptr; };

    // Head.
    if (auto* gw = G(ix_.head_w)) simd::gemm_tn(c.pooled.data(), dy.data(), gw->data(), 1, c.pooled.size(), dy.size());
    if (auto* gb = G(ix_.head_b)) simd::axpy(T{1}, std::span<const T>(dy), std::span<T>(*gb));
    std::vector<T> dpooled(c.pooled.size(), T{0});
    simd::gemm_nt(dy.data(), p(ix_.head_w).data(), dpooled.data(), 1, dy.size(), c.pooled.size());
    BasicMatrix<T> dz(n, d);
    if (cfg_.pooling == HeadPooling::flatten) {
      std::copy(dpooled.begin(), dpooled.end(), dz.data());
    } else {
      const T inv = T{1} / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dz(i, j) = dpooled[j] * inv;
    }
    (void)fwd;

    BasicMatrix<T> dx = layer_norm_bwd(dz, c.lnf, p(ix_.lnf_g), G(ix_.lnf_g), G(ix_.lnf_b));

    for (std::size_t l = cfg_.n_layers; l-- > 0;) {
      const auto& L = ix_.layers[l];
      const auto& lc = c.layers[l];

      // FFN branch.
      BasicMatrix<T> dm = dx;
      if (!lc.drop_mlp.empty()) apply_mask(dm, lc.drop_mlp);
      if (auto* gw = G(L.w2)) simd::gemm_tn(lc.g.data(), dm.data(), gw->data(), n, cfg_.d_ff, d);
      if (auto* gb = G(L.b2)) col_sum_into(dm, *gb);
      BasicMatrix<T> dh(n, cfg_.d_ff);
      simd::gemm_nt(dm.data(), p(L.w2).data(), dh.data(), n, d, cfg_.d_ff);
      for (std::size_t i = 0; i < dh.size(); ++i) dh.flat()[i] *= gelu_grad(lc.hpre.flat()[i]);
      if (auto* gw = G(L.w1)) simd::gemm_tn(lc.b.data(), dh.data(), gw->data(), n, d, cfg_.d_ff);
      if (auto* gb = G(L.b1)) col_sum_into(dh, *gb);
      BasicMatrix<T> db(n, d);
      simd::gemm_nt(dh.data(), p(L.w1).data(), db.data(), n, cfg_.d_ff, d);
      BasicMatrix<T> dx_ln2 = layer_norm_bwd(db, lc.ln2, p(L.ln2_g), G(L.ln2_g), G(L.ln2_b));
      simd::axpy(T{1}, dx_ln2.flat(), dx.flat());

      // Attention branch.
      BasicMatrix<T> datt = dx;
      if (!lc.drop_attn.empty()) apply_mask(datt, lc.drop_attn);
      BasicMatrix<T> da = attention_backward(datt, L, lc, G);
      BasicMatrix<T> dx_ln1 = layer_norm_bwd(da, lc.ln1, p(L.ln1_g), G(L.ln1_g), G(L.ln1_b));
      simd::axpy(T{1}, dx_ln1.flat(), dx.flat());
    }

    // Embedding.
    if (auto* gw = G(ix_.in_w)) simd::gemm_tn(c.tokens.data(), dx.data(), gw->data(), n, cfg_.patch_len, d);
    if (auto* gb = G(ix_.in_b)) col_sum_into(dx, *gb);
    if (auto* gp = G(ix_.pos))
      for (std::size_t i = 0; i < n; ++i) simd::axpy(T{1}, dx.row(i), std::span<T>(gp->data() + i * d, d));
  }

 private:
  std::vector<T> pool(const BasicMatrix<T>& z) const {
    if (cfg_.pooling == HeadPooling::flatten) {
      require(z.rows() == cfg_.head_tokens, ErrorKind::InvalidInput,
              "flatten head expects " + std::to_string(cfg_.head_tokens) + " tokens, got " + std::to_string(z.rows()));
      return z.values();
    }
    std::vector<T> out(z.cols(), T{0});
    col_sum_into(z, out);
    for (auto& v : out) v /= static_cast<T>(z.rows());
    return out;
  }

  BasicMatrix<T> attention(const BasicMatrix<T>& a, const LayerIdx& L, LayerCache<T>* lc) const {
    const std::size_t n = a.rows(), d = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.head_dim();
    BasicMatrix<T> q = affine(a, p(L.wq), &p(L.bq), d);
    BasicMatrix<T> k = affine(a, p(L.wk), &p(L.bk), d);
    BasicMatrix<T> v = affine(a, p(L.wv), &p(L.bv), d);
    BasicMatrix<T> o(n, d);
    std::vector<BasicMatrix<T>> probs;
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    for (std::size_t h = 0; h < H; ++h) {
      BasicMatrix<T> P(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t jmax = cfg_.causal ? i + 1 : n;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < jmax; ++j) {
          P(i, j) = scale * simd::dot(std::span<const T>(q.data() + i * d + h * dh, dh),
                                      std::span<const T>(k.data() + j * d + h * dh, dh));
          mx = std::max(mx, P(i, j));
        }
        T sum = 0;
        for (std::size_t j = 0; j < jmax; ++j) sum += (P(i, j) = std::exp(P(i, j) - mx));
        for (std::size_t j = 0; j < jmax; ++j) {
          P(i, j) /= sum;
          simd::axpy(P(i, j), std::span<const T>(v.data() + j * d + h * dh, dh),
                     std::span<T>(o.data() + i * d + h * dh, dh));
        }
      }
      probs.push_back(std::move(P));
    }
    BasicMatrix<T> att = affine(o, p(L.wo), &p(L.bo), d);
    if (lc) {
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->o = std::move(o);
      lc->probs = std::move(probs);
    }
    return att;
  }

  template <class GradFn>
  BasicMatrix<T> attention_backward(const BasicMatrix<T>& datt, const LayerIdx& L, const LayerCache<T>& lc,
                                    GradFn&& G) const {
    require(!lc.probs.empty() || cfg_.n_heads == 0, ErrorKind::InvalidInput,
            "backward is not available in pca attention mode");
    const std::size_t n = datt.rows(), d = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.head_dim();
    if (auto* gw = G(L.wo)) simd::gemm_tn(lc.o.data(), datt.data(), gw->data(), n, d, d);
    if (auto* gb = G(L.bo)) col_sum_into(datt, *gb);
    BasicMatrix<T> dO(n, d);
    simd::gemm_nt(datt.data(), p(L.wo).data(), dO.data(), n, d, d);

    BasicMatrix<T> dq(n, d), dk(n, d), dv(n, d);
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    std::vector<T> dP(n);
    for (std::size_t h = 0; h < H; ++h) {
      const auto& P = lc.probs[h];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t jmax = cfg_.causal ? i + 1 : n;
        const std::span<const T> dOi(dO.data() + i * d + h * dh, dh);
        T rowdot = 0;
        for (std::size_t j = 0; j < jmax; ++j) {
          dP[j] = simd::dot(dOi, std::span<const T>(lc.v.data() + j * d + h * dh, dh));
          rowdot += P(i, j) * dP[j];
          simd::axpy(P(i, j), dOi, std::span<T>(dv.data() + j * d + h * dh, dh));
        }
        for (std::size_t j = 0; j < jmax; ++j) {
          const T ds = P(i, j) * (dP[j] - rowdot) * scale;
          simd::axpy(ds, std::span<const T>(lc.k.data() + j * d + h * dh, dh),
                     std::span<T>(dq.data() + i * d + h * dh, dh));
          simd::axpy(ds, std::span<const T>(lc.q.data() + i * d + h * dh, dh),
                     std::span<T>(dk.data() + j * d + h * dh, dh));
        }
      }
    }

    BasicMatrix<T> da(n, d);
    const std::pair<const BasicMatrix<T>*, std::array<std::size_t, 2>> parts[] = {
        {&dq, {L.wq, L.bq}}, {&dk, {L.wk, L.bk}}, {&dv, {L.wv, L.bv}}};
    for (const auto& [dmat, idx] : parts) {
      if (auto* gw = G(idx[0])) simd::gemm_tn(lc.a.data(), dmat->data(), gw->data(), n, d, d);
      if (auto* gb = G(idx[1])) col_sum_into(*dmat, *gb);
      simd::gemm_nt(dmat->data(), p(idx[0]).data(), da.data(), n, d, d);
    }
    return da;
  }

  // Centered LN1 output projected onto its top-m principal directions.
  BasicMatrix<T> pca_attention(const BasicMatrix<T>& a, std::size_t m) const {
    const Matrix centered = center_columns(a.template cast<double>());
    const auto eig = sym_eig(gram(centered));
    const std::size_t d = a.cols();
    Matrix proj(d, d);
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) proj(i, j) += eig.eigenvectors(i, k) * eig.eigenvectors(j, k);
    return matmul(centered, proj).template cast<T>();
  }

  const BasicParameterStore<T>& s_;
  const BackboneConfig& cfg_;
  Indices ix_;
};

}  // namespace

template <class T>
ForwardOutput<T> forward(const BasicParameterStore<T>& store, const BackboneConfig& cfg, const BasicMatrix<T>& tokens,
                         const ForwardOptions& opts) {
  return Model<T>(store, cfg).run(tokens, opts, nullptr);
}

LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "masked_mse") return LossKind::masked_mse;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  fail(ErrorKind::InvalidInput, "unknown loss '" + s + "'");
}

template <class T>
double example_loss(LossKind kind, std::span<const T> y, const Example<T>& ex, std::vector<T>* dy, T scale) {
  if (dy) dy->assign(y.size(), T{0});
  switch (kind) {
    case LossKind::mse:
    case LossKind::masked_mse: {
      require(ex.target.size() == y.size(), ErrorKind::ShapeError,
              "target length " + std::to_string(ex.target.size()) + " vs output " + std::to_string(y.size()));
      const bool weighted = kind == LossKind::masked_mse && !ex.weight.empty();
      require(!weighted || ex.weight.size() == y.size(), ErrorKind::ShapeError, "weight length mismatch");
      double wsum = 0.0, acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = weighted ? static_cast<double>(ex.weight[i]) : 1.0;
        const double e = static_cast<double>(y[i]) - static_cast<double>(ex.target[i]);
        acc += w * e * e;
        wsum += w;
      }
      require(wsum > 0.0, ErrorKind::InvalidInput, "masked loss has no weighted positions");
      if (dy)
        for (std::size_t i = 0; i < y.size(); ++i) {
          const double w = weighted ? static_cast<double>(ex.weight[i]) : 1.0;
          (*dy)[i] = static_cast<T>(2.0 * w * (static_cast<double>(y[i]) - static_cast<double>(ex.target[i])) / wsum *
                                    static_cast<double>(scale));
        }
      return acc / wsum;
    }
    case LossKind::cross_entropy: {
      require(ex.label < y.size(), ErrorKind::InvalidInput,
              "label " + std::to_string(ex.label) + " out of range for " + std::to_string(y.size()) + " classes");
      double mx = -std::numeric_limits<double>::infinity();
      for (T v : y) mx = std::max(mx, static_cast<double>(v));
      double sum = 0.0;
      for (T v : y) sum += std::exp(static_cast<double>(v) - mx);
      const double lse = mx + std::log(sum);
      if (dy)
        for (std::size_t i = 0; i < y.size(); ++i) {
          const double pi = std::exp(static_cast<double>(y[i]) - lse);
          (*dy)[i] = static_cast<T>((pi - (i == ex.label ? 1.0 : 0.0)) * static_cast<double>(scale));
        }
      return lse - static_cast<double>(y[ex.label]);
    }
  }
  fail(ErrorKind::InvalidInput, "unknown loss kind");
}

template <class T>
double batch_loss(const BasicParameterStore<T>& store, const BackboneConfig& cfg, std::span<const Example<T>> batch,
                  LossKind kind, const ForwardOptions& opts) {
  require(!batch.empty(), ErrorKind::InvalidInput, "empty batch");
  const Model<T> model(store, cfg);
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    auto o = opts;
    o.apply_head = true;
    o.dropout_seed = derive_seed(opts.dropout_seed, i);
    const auto out = model.run(batch[i].tokens, o, nullptr);
    losses[i] = example_loss<T>(kind, out.prediction, batch[i]);
  });
  double acc = 0.0;
  for (double l : losses) acc += l;
  return acc / static_cast<double>(batch.size());
}

namespace {

template <class T>
void check_finite_loss(const std::vector<double>& losses, double mean, const char* where) {
  if (std::isfinite(mean)) return;
  std::size_t bad = 0;
  while (bad < losses.size() && std::isfinite(losses[bad])) ++bad;
  fail(ErrorKind::NumericalFailure, std::string(where) + ": non-finite loss " + std::to_string(mean) +
                                        " (batch of " + std::to_string(losses.size()) + ", first bad example " +
                                        std::to_string(bad) + ")");
}

}  // namespace

template <class T>
double loss_and_gradient(const BasicParameterStore<T>& store, const BackboneConfig& cfg,
                         std::span<const Example<T>> batch, LossKind kind, BasicParameterStore<T>& grad,
                         const std::vector<char>* need, const ForwardOptions& opts) {
  require(!batch.empty(), ErrorKind::InvalidInput, "empty batch");
  require(opts.mode == AttentionMode::softmax, ErrorKind::InvalidInput, "gradients need softmax attention");
  const Model<T> model(store, cfg);
  const std::vector<char> all(store.size(), 1);
  const std::vector<char>& mask = need ? *need : all;
  require(mask.size() == store.size(), ErrorKind::ShapeError, "need-mask length mismatch");

  const std::size_t shards = (batch.size() + kShardSize - 1) / kShardSize;
  std::vector<BasicParameterStore<T>> partial(shards);
  std::vector<double> losses(batch.size());
  const T scale = T{1} / static_cast<T>(batch.size());
  parallel_for(shards, [&](std::size_t s) {
    auto& g = partial[s];
    g = store;
    g.fill(T{0});
    for (std::size_t i = s * kShardSize; i < std::min(batch.size(), (s + 1) * kShardSize); ++i) {
      auto o = opts;
      o.apply_head = true;
      o.keep_trace = false;
      o.dropout_seed = derive_seed(opts.dropout_seed, i);
      Cache<T> cache;
      const auto out = model.run(batch[i].tokens, o, &cache);
      std::vector<T> dy;
      losses[i] = example_loss<T>(kind, out.prediction, batch[i], &dy, scale);
      if (!std::isfinite(losses[i])) continue;
      model.backward(cache, out, dy, g, mask);
    }
  });

  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(batch.size());
  check_finite_loss<T>(losses, mean, "loss_and_gradient");

  grad = std::move(partial[0]);
  for (std::size_t s = 1; s < shards; ++s)
    for (std::size_t t = 0; t < grad.size(); ++t)
      if (mask[t]) simd::axpy(T{1}, std::span<const T>(partial[s].at(t).data), std::span<T>(grad.at(t).data));
  return mean;
}

template <class T>
double backward_and_step(BasicParameterStore<T>& store, const BackboneConfig& cfg, std::span<const Example<T>> batch,
                         LossKind kind, AdamState<T>& adam, const FreezeMask& freeze, double learning_rate,
                         const ForwardOptions& opts) {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidInput,
          "learning rate must be finite and non-negative");
  if (adam.m.size() != store.size()) adam = AdamState<T>::for_store(store);
  std::vector<char> need(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) need[i] = freeze.is_trainable(store.names()[i]) ? 1 : 0;

  BasicParameterStore<T> grad;
  const double loss = loss_and_gradient(store, cfg, batch, kind, grad, &need, opts);

  ++adam.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  const T b1 = static_cast<T>(adam.beta1), b2 = static_cast<T>(adam.beta2);
  const T step = static_cast<T>(learning_rate / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(adam.eps);
  for (std::size_t t = 0; t < store.size(); ++t) {
    if (!need[t]) continue;
    auto& w = store.at(t).data;
    auto& m = adam.m.at(t).data;
    auto& v = adam.v.at(t).data;
    const auto& g = grad.at(t).data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
  return loss;
}

#define FPT_INSTANTIATE(T)                                                                                            \
  template ForwardOutput<T> forward(const BasicParameterStore<T>&, const BackboneConfig&, const BasicMatrix<T>&,      \
                                    const ForwardOptions&);                                                           \
  template double example_loss(LossKind, std::span<const T>, const Example<T>&, std::vector<T>*, T);                 \
  template double batch_loss(const BasicParameterStore<T>&, const BackboneConfig&, std::span<const Example<T>>,       \
                             LossKind, const ForwardOptions&);                                                        \
  template double loss_and_gradient(const BasicParameterStore<T>&, const BackboneConfig&,                             \
                                    std::span<const Example<T>>, LossKind, BasicParameterStore<T>&,                   \
                                    const std::vector<char>*, const ForwardOptions&);                                 \
  template double backward_and_step(BasicParameterStore<T>&, const BackboneConfig&, std::span<const Example<T>>,      \
                                    LossKind, AdamState<T>&, const FreezeMask&, double, const ForwardOptions&);

FPT_INSTANTIATE(float)
FPT_INSTANTIATE(double)

#undef FPT_INSTANTIATE

}  // namespace fpt::backbone
