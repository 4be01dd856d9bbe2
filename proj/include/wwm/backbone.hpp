/**
 * @file backbone.hpp
 * @brief Shared-attention + modality-expert transformer: online encoder,
 *        predictor with learnable mask token, EMA target encoder.
 */
#pragma once

#include <algorithm>

#include "wwm/tokenizers.hpp"

namespace wwm {

struct BackboneConfig {
  std::size_t d = 96;
  std::size_t depth_enc = 4;
  std::size_t depth_pred = 4;
  std::size_t n_heads = 6;
  std::size_t ffn_mult = 4;
  std::size_t d_head() const { return d / n_heads; }

  void validate() const {
    if (n_heads == 0 || d % n_heads)
      throw std::runtime_error("BackboneConfig: D must equal n_heads * d_head");
  }
};

/// Embedders plus encoder blocks; the unit that the EMA target copies.
template <typename T>
struct EncoderStack {
  CsiEmbed<T> csi;
  PcTokenizer<T> pc;
  TrajEmbed<T> pos;
  std::vector<MmoeBlock<T>> blocks;

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    csi.collect(out, prefix + "embed.csi");
    pc.collect(out, prefix + "embed.pc");
    pos.collect(out, prefix + "embed.pos");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, prefix + "enc.block" + std::to_string(i));
  }
};

template <typename T>
struct Backbone {
  BackboneConfig cfg;
  EncoderStack<T> online;
  std::vector<MmoeBlock<T>> pred_blocks;
  ad::Var<T> mask_token;  // (1, d), shared across positions
  EncoderStack<T> target;  // EMA copy, never receives gradients

  Backbone() = default;
  Backbone(const BackboneConfig& bc, const CsiPatchConfig& csi_cfg,
           const PcTokenizerConfig& pc_cfg, std::size_t n_pos, Rng& rng) {
    cfg = bc;
    cfg.validate();
    online.csi = CsiEmbed<T>(csi_cfg, rng);
    online.pc = PcTokenizer<T>(pc_cfg, rng);
    online.pos = TrajEmbed<T>(n_pos, bc.d, rng);
    for (std::size_t i = 0; i < bc.depth_enc; ++i)
      online.blocks.emplace_back(bc.d, bc.n_heads, bc.d * bc.ffn_mult, rng);
    for (std::size_t i = 0; i < bc.depth_pred; ++i)
      pred_blocks.emplace_back(bc.d, bc.n_heads, bc.d * bc.ffn_mult, rng);
    mask_token = ad::leaf(Tensor<T>::trunc_normal({1, bc.d}, rng, 0.02), true);
    target = deep_copy(online);
  }

  /// Trainable parameters: embedders, encoder, predictor, mask token.
  NamedParams<T> trainable_params() const {
    NamedParams<T> out;
    online.collect(out, "");
    for (std::size_t i = 0; i < pred_blocks.size(); ++i)
      pred_blocks[i].collect(out, "pred.block" + std::to_string(i));
    out.emplace_back("mask_token", mask_token);
    return out;
  }

  NamedParams<T> target_params() const {
    NamedParams<T> out;
    target.collect(out, "target.");
    return out;
  }

 private:
  static Linear<T> copy_linear(const Linear<T>& l) {
    Linear<T> out;
    out.w = ad::leaf(l.w->val, false);
    out.b = ad::leaf(l.b->val, false);
    return out;
  }
  static LayerNormParams<T> copy_ln(const LayerNormParams<T>& l) {
    LayerNormParams<T> out;
    out.gamma = ad::leaf(l.gamma->val, false);
    out.beta = ad::leaf(l.beta->val, false);
    return out;
  }
  static Mlp<T> copy_mlp(const Mlp<T>& m) {
    Mlp<T> out;
    out.fc1 = copy_linear(m.fc1);
    out.fc2 = copy_linear(m.fc2);
    return out;
  }
  static MmoeBlock<T> copy_block(const MmoeBlock<T>& b) {
    MmoeBlock<T> out;
    out.attn.ln = copy_ln(b.attn.ln);
    out.attn.wq = copy_linear(b.attn.wq);
    out.attn.wk = copy_linear(b.attn.wk);
    out.attn.wv = copy_linear(b.attn.wv);
    out.attn.wo = copy_linear(b.attn.wo);
    out.attn.n_heads = b.attn.n_heads;
    out.attn.d_head = b.attn.d_head;
    out.ln2 = copy_ln(b.ln2);
    out.expert_csi = copy_mlp(b.expert_csi);
    out.expert_pc = copy_mlp(b.expert_pc);
    out.expert_pos = copy_mlp(b.expert_pos);
    return out;
  }

 public:
  static EncoderStack<T> deep_copy(const EncoderStack<T>& src) {
    EncoderStack<T> dst;
    dst.csi.cfg = src.csi.cfg;
    dst.csi.pe = src.csi.pe;
    dst.csi.gather_idx = src.csi.gather_idx;
    dst.csi.proj = copy_linear(src.csi.proj);
    dst.pc.cfg = src.pc.cfg;
    dst.pc.point_fc1 = copy_linear(src.pc.point_fc1);
    dst.pc.point_fc2 = copy_linear(src.pc.point_fc2);
    dst.pc.to_logits = copy_linear(src.pc.to_logits);
    dst.pc.codebook = ad::leaf(src.pc.codebook->val, false);
    dst.pc.refine = copy_mlp(src.pc.refine);
    dst.pc.center_proj = copy_linear(src.pc.center_proj);
    dst.pos.n_pos = src.pos.n_pos;
    dst.pos.mlp = copy_mlp(src.pos.mlp);
    dst.pos.pe = src.pos.pe;
    for (const auto& b : src.blocks) dst.blocks.push_back(copy_block(b));
    return dst;
  }
};

/// theta_bar <- m * theta_bar + (1-m) * theta, elementwise.
template <typename T>
void ema_update(EncoderStack<T>& target, const EncoderStack<T>& online, double m) {
  NamedParams<T> tp, op;
  target.collect(tp, "");
  online.collect(op, "");
  if (tp.size() != op.size())
    throw std::runtime_error("ema_update: parameter count mismatch");
  const T mm = static_cast<T>(m);
  const T om = static_cast<T>(1.0 - m);
  for (std::size_t i = 0; i < tp.size(); ++i) {
    auto& t = tp[i].second->val;
    const auto& o = op[i].second->val;
    if (!t.same_shape(o)) throw std::runtime_error("ema_update: shape mismatch");
    for (std::size_t j = 0; j < t.numel(); ++j) t.v[j] = mm * t.v[j] + om * o.v[j];
  }
}

/// Raw model inputs for one sample, already cast for the graph scalar type.
template <typename T>
struct SampleInputs {
  Tensor<T> csi;       // (2,T,H,W)
  const PcGroups* groups = nullptr;
  Tensor<T> traj;      // (n_pos, 3)
};

/// Tokenize all modalities and build the unified sequence (PE applied).
/// gumbel == nullptr selects eval-mode codebook lookup.
template <typename T>
TokenSequence<T> tokenize(const EncoderStack<T>& stack, const SampleInputs<T>& in,
                          double tau, Rng* gumbel) {
  auto csi_tok = stack.csi.forward(ad::constant(in.csi));
  auto pc_tok = stack.pc.forward(*in.groups, tau, gumbel);
  auto pos_tok = stack.pos.forward(ad::constant(in.traj));
  return build_unified_sequence(csi_tok, pc_tok, pos_tok);
}

inline Segments segments_of_indices(const std::vector<std::size_t>& sorted_idx,
                                    const Segments& full) {
  Segments out;
  for (auto i : sorted_idx) {
    if (i < full.csi)
      ++out.csi;
    else if (i < full.csi + full.pc)
      ++out.pc;
    else
      ++out.pos;
  }
  return out;
}

/// Gathers the visible rows and runs the encoder blocks over them.
template <typename T>
ad::Var<T> encoder_forward(const EncoderStack<T>& stack, const TokenSequence<T>& seq,
                           const std::vector<std::size_t>& enc_idx) {
  if (enc_idx.empty()) ad::op_error("encoder_forward", "empty visible index set");
  if (!std::is_sorted(enc_idx.begin(), enc_idx.end()))
    ad::op_error("encoder_forward", "visible indices must be sorted");
  Segments seg = segments_of_indices(enc_idx, seq.seg);
  ad::Var<T> x = enc_idx.size() == seq.seg.total() && enc_idx.front() == 0
                     ? seq.tokens
                     : ad::gather_rows(seq.tokens, enc_idx);
  for (const auto& b : stack.blocks) x = b.forward(x, seg);
  return x;
}

/// Positional row added to the shared mask token at a masked position:
/// the modality's own fixed encoding (CSI 3D PE, trajectory temporal PE);
/// PC positions carry no fixed encoding and use zeros.
template <typename T>
Tensor<T> mask_position_pe(const EncoderStack<T>& stack, const Segments& full,
                           const std::vector<std::size_t>& pred_idx) {
  const std::size_t d = stack.csi.cfg.d;
  Tensor<T> pe({pred_idx.size(), d});
  for (std::size_t r = 0; r < pred_idx.size(); ++r) {
    const std::size_t i = pred_idx[r];
    if (i < full.csi) {
      for (std::size_t j = 0; j < d; ++j) pe.at(r, j) = stack.csi.pe.at(i, j);
    } else if (i >= full.csi + full.pc) {
      const std::size_t p = i - full.csi - full.pc;
      for (std::size_t j = 0; j < d; ++j) pe.at(r, j) = stack.pos.pe.at(p, j);
    }
  }
  return pe;
}

/// Predictor output over the full ordered union of context and masked
/// positions, plus the union's global position list.
template <typename T>
struct PredictorOut {
  ad::Var<T> union_out;                 // (|I_enc|+|I_pred|, d), position order
  std::vector<std::size_t> positions;   // ascending global positions
  std::size_t row_of(std::size_t global_pos) const {
    const auto it = std::lower_bound(positions.begin(), positions.end(), global_pos);
    if (it == positions.end() || *it != global_pos)
      ad::op_error("predictor_forward", "position not in the union");
    return static_cast<std::size_t>(it - positions.begin());
  }
};

/// Builds [z_ctx ; mask_token + PE(j)] in global position order and runs the
/// predictor blocks with expert routing over the union sequence.
template <typename T>
PredictorOut<T> predictor_forward_full(const std::vector<MmoeBlock<T>>& blocks,
                                       const ad::Var<T>& mask_token,
                                       const EncoderStack<T>& stack,
                                       const ad::Var<T>& z_ctx,
                                       const std::vector<std::size_t>& enc_idx,
                                       const std::vector<std::size_t>& pred_idx,
                                       const Segments& full) {
  for (std::size_t i : pred_idx)
    if (std::binary_search(enc_idx.begin(), enc_idx.end(), i))
      ad::op_error("predictor_forward", "I_enc and I_pred overlap at " +
                                            std::to_string(i));
  const std::size_t n_ctx = enc_idx.size(), n_pred = pred_idx.size();
  auto ones = ad::constant(Tensor<T>::full({n_pred, 1}, T(1)));
  auto masks = ad::add(ad::matmul(ones, mask_token),
                       ad::constant(mask_position_pe(stack, full, pred_idx)));
  auto stacked = ad::concat_rows<T>({z_ctx, masks});

  // interleave into ascending global position order
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (global pos, src row)
  order.reserve(n_ctx + n_pred);
  for (std::size_t i = 0; i < n_ctx; ++i) order.emplace_back(enc_idx[i], i);
  for (std::size_t i = 0; i < n_pred; ++i) order.emplace_back(pred_idx[i], n_ctx + i);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> perm(order.size());
  PredictorOut<T> out;
  out.positions.resize(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    perm[r] = order[r].second;
    out.positions[r] = order[r].first;
  }
  auto x = ad::gather_rows(stacked, perm);
  const Segments seg = segments_of_indices(out.positions, full);
  for (const auto& b : blocks) x = b.forward(x, seg);
  out.union_out = x;
  return out;
}

/// Predicted embeddings at pred_idx (in pred_idx order).
template <typename T>
ad::Var<T> predictor_forward(const std::vector<MmoeBlock<T>>& blocks,
                             const ad::Var<T>& mask_token,
                             const EncoderStack<T>& stack, const ad::Var<T>& z_ctx,
                             const std::vector<std::size_t>& enc_idx,
                             const std::vector<std::size_t>& pred_idx,
                             const Segments& full) {
  auto full_out = predictor_forward_full(blocks, mask_token, stack, z_ctx, enc_idx,
                                         pred_idx, full);
  std::vector<std::size_t> rows(pred_idx.size());
  for (std::size_t i = 0; i < pred_idx.size(); ++i)
    rows[i] = full_out.row_of(pred_idx[i]);
  return ad::gather_rows(full_out.union_out, rows);
}

}  // namespace wwm
