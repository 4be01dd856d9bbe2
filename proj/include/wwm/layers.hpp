/**
 * @file layers.hpp
 * @brief Transformer building blocks over the autodiff graph.
 */
#pragma once

#include <string>
#include <vector>

#include "wwm/autodiff.hpp"
#include "wwm/rng.hpp"

namespace wwm {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, ad::Var<T>>>;

template <typename T>
struct Linear {
  ad::Var<T> w;  // (in, out)
  ad::Var<T> b;  // (out)

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, double stddev = 0.02) {
    w = ad::leaf(Tensor<T>::trunc_normal({in, out}, rng, stddev), true);
    b = ad::leaf(Tensor<T>::zeros({out}), true);
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    return ad::add_bias(ad::matmul(x, w), b);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <typename T>
struct LayerNormParams {
  ad::Var<T> gamma;
  ad::Var<T> beta;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d) {
    gamma = ad::leaf(Tensor<T>::full({d}, T(1)), true);
    beta = ad::leaf(Tensor<T>::zeros({d}), true);
  }

  ad::Var<T> forward(const ad::Var<T>& x, double eps = 1e-5) const {
    return ad::layer_norm(x, gamma, beta, eps);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

/// Two-layer position-wise feed-forward with GELU.
template <typename T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng)
      : fc1(d_in, d_hidden, rng), fc2(d_hidden, d_out, rng) {}

  ad::Var<T> forward(const ad::Var<T>& x) const {
    return fc2.forward(ad::gelu(fc1.forward(x)));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

/// Token counts of the three modality segments, in fixed order CSI, PC, POS.
struct Segments {
  std::size_t csi = 0, pc = 0, pos = 0;
  std::size_t total() const { return csi + pc + pos; }
};

/// Pre-norm multi-head self-attention shared across modalities.
template <typename T>
struct SharedAttention {
  LayerNormParams<T> ln;
  Linear<T> wq, wk, wv, wo;
  std::size_t n_heads = 0, d_head = 0;

  SharedAttention() = default;
  SharedAttention(std::size_t d, std::size_t heads, Rng& rng)
      : ln(d), wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng),
        n_heads(heads), d_head(d / heads) {}

  // x + MHSA(LN(x))
  ad::Var<T> forward(const ad::Var<T>& x) const {
    auto h = ln.forward(x);
    auto q = wq.forward(h);
    auto k = wk.forward(h);
    auto v = wv.forward(h);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    std::vector<ad::Var<T>> heads;
    heads.reserve(n_heads);
    for (std::size_t hd = 0; hd < n_heads; ++hd) {
      const std::size_t c0 = hd * d_head, c1 = c0 + d_head;
      heads.push_back(ad::attention(ad::slice_cols(q, c0, c1),
                                    ad::slice_cols(k, c0, c1),
                                    ad::slice_cols(v, c0, c1), att_scale));
    }
    return ad::add(x, wo.forward(ad::concat_cols(heads)));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    ln.collect(out, prefix + ".ln");
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
  }
};

/// Shared attention plus per-modality feed-forward experts. Routing is
/// deterministic by modality identity: the sequence splits into contiguous
/// CSI / PC / POS segments, each expert transforms its own segment, and the
/// outputs concatenate back in order before the residual.
template <typename T>
struct MmoeBlock {
  SharedAttention<T> attn;
  LayerNormParams<T> ln2;
  Mlp<T> expert_csi, expert_pc, expert_pos;

  MmoeBlock() = default;
  MmoeBlock(std::size_t d, std::size_t heads, std::size_t ffn_hidden, Rng& rng)
      : attn(d, heads, rng),
        ln2(d),
        expert_csi(d, ffn_hidden, d, rng),
        expert_pc(d, ffn_hidden, d, rng),
        expert_pos(d, ffn_hidden, d, rng) {}

  ad::Var<T> forward(const ad::Var<T>& x, const Segments& seg) const {
    if (seg.total() != x->val.rows())
      ad::op_error("expert_ffn_apply", "segment sum " + std::to_string(seg.total()) +
                                           " != rows " + std::to_string(x->val.rows()));
    auto x1 = attn.forward(x);
    auto h = ln2.forward(x1);
    std::vector<ad::Var<T>> parts;
    std::size_t r = 0;
    if (seg.csi) {
      parts.push_back(expert_csi.forward(ad::slice_rows(h, r, r + seg.csi)));
      r += seg.csi;
    }
    if (seg.pc) {
      parts.push_back(expert_pc.forward(ad::slice_rows(h, r, r + seg.pc)));
      r += seg.pc;
    }
    if (seg.pos) {
      parts.push_back(expert_pos.forward(ad::slice_rows(h, r, r + seg.pos)));
      r += seg.pos;
    }
    return ad::add(x1, ad::concat_rows(parts));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    attn.collect(out, prefix + ".attn");
    ln2.collect(out, prefix + ".ln2");
    expert_csi.collect(out, prefix + ".expert_csi");
    expert_pc.collect(out, prefix + ".expert_pc");
    expert_pos.collect(out, prefix + ".expert_pos");
  }
};

/// Plain pre-norm transformer block with a single feed-forward (decoders).
template <typename T>
struct PlainBlock {
  SharedAttention<T> attn;
  LayerNormParams<T> ln2;
  Mlp<T> ffn;

  PlainBlock() = default;
  PlainBlock(std::size_t d, std::size_t heads, std::size_t ffn_hidden, Rng& rng)
      : attn(d, heads, rng), ln2(d), ffn(d, ffn_hidden, d, rng) {}

  ad::Var<T> forward(const ad::Var<T>& x) const {
    auto x1 = attn.forward(x);
    return ad::add(x1, ffn.forward(ln2.forward(x1)));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    attn.collect(out, prefix + ".attn");
    ln2.collect(out, prefix + ".ln2");
    ffn.collect(out, prefix + ".ffn");
  }
};

template <typename T>
std::vector<ad::Var<T>> param_list(const NamedParams<T>& named) {
  std::vector<ad::Var<T>> out;
  out.reserve(named.size());
  for (const auto& [name, p] : named) out.push_back(p);
  return out;
}

}  // namespace wwm
