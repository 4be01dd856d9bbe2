/**
 * @file tokenizers.hpp
 * @brief Modality embedders: CSI tube patchify, point-cloud discrete
 *        tokenizer, trajectory MLP. All map into the shared D-dim space.
 */
#pragma once

#include <array>
#include <optional>

#include "wwm/layers.hpp"
#include "wwm/pe.hpp"
#include "wwm/pointcloud.hpp"

namespace wwm {

struct CsiPatchConfig {
  std::size_t t_p = 2, h_p = 4, w_p = 4;
  std::size_t t = 16, h = 32, w = 32;
  std::size_t d = 96;

  std::size_t grid_t() const { return t / t_p; }
  std::size_t grid_h() const { return h / h_p; }
  std::size_t grid_w() const { return w / w_p; }
  std::size_t n_tokens() const { return grid_t() * grid_h() * grid_w(); }
  std::size_t tube_volume() const { return 2 * t_p * h_p * w_p; }

  void validate() const {
    if (t % t_p || h % h_p || w % w_p)
      throw std::runtime_error("CsiPatchConfig: extents must divide (T,H,W): got (" +
                               std::to_string(t_p) + "," + std::to_string(h_p) + "," +
                               std::to_string(w_p) + ") over (" + std::to_string(t) +
                               "," + std::to_string(h) + "," + std::to_string(w) + ")");
  }
};

/// Flat gather indices that pull each non-overlapping tube out of the
/// (2,T,H,W) tensor, token order time-major then H then W.
std::vector<std::size_t> csi_patch_indices(const CsiPatchConfig& cfg);

/// Non-overlapping tube flattening + linear projection + fixed 3D PE.
template <typename T>
struct CsiEmbed {
  CsiPatchConfig cfg;
  Linear<T> proj;
  Tensor<T> pe;                         // (n_tokens, d)
  std::vector<std::size_t> gather_idx;  // built once

  CsiEmbed() = default;
  CsiEmbed(const CsiPatchConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    proj = Linear<T>(cfg.tube_volume(), cfg.d, rng);
    pe = sinusoidal_pe_3d({cfg.grid_t(), cfg.grid_h(), cfg.grid_w()}, cfg.d)
             .template cast<T>();
    gather_idx = csi_patch_indices(cfg);
  }

  ad::Var<T> forward(const ad::Var<T>& csi) const {
    if (csi->val.numel() != 2 * cfg.t * cfg.h * cfg.w)
      ad::op_error("embed_csi", "input shape " + csi->val.shape_str());
    auto patches =
        ad::gather_flat(csi, gather_idx, {cfg.n_tokens(), cfg.tube_volume()});
    return ad::add(proj.forward(patches), ad::constant(pe));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    proj.collect(out, prefix + ".proj");
  }
};

struct PcTokenizerConfig {
  std::size_t n_centers = 256;
  std::size_t k_neighbors = 32;
  std::size_t codebook_size = 512;
  std::size_t d = 96;
  std::size_t point_hidden = 64;
  std::size_t local_feat = 128;
  double codebook_init = 0.02;
};

/// Precomputed grouping for one crop; parameter-free, cacheable per sample.
struct PcGroups {
  TensorF group_coords;  // (n_centers*k, 3) re-centered to the group center
  TensorF center_xyz;    // (n_centers, 3)
};
PcGroups build_pc_groups(const std::vector<Point3f>& points,
                         const PcTokenizerConfig& cfg, std::size_t fps_start = 0);

/// FPS centers -> kNN groups -> shared point MLP + max-pool -> Gumbel-softmax
/// codebook lookup (hard straight-through in training, argmax at eval) ->
/// shallow refinement + projected center coordinates.
template <typename T>
struct PcTokenizer {
  PcTokenizerConfig cfg;
  Linear<T> point_fc1, point_fc2;
  Linear<T> to_logits;
  ad::Var<T> codebook;  // (V, d)
  Mlp<T> refine;
  Linear<T> center_proj;

  PcTokenizer() = default;
  PcTokenizer(const PcTokenizerConfig& c, Rng& rng)
      : cfg(c),
        point_fc1(3, c.point_hidden, rng),
        point_fc2(c.point_hidden, c.local_feat, rng),
        to_logits(c.local_feat, c.codebook_size, rng),
        refine(c.d, c.d, c.d, rng),
        center_proj(3, c.d, rng) {
    codebook = ad::leaf(
        Tensor<T>::uniform({c.codebook_size, c.d}, rng, -c.codebook_init, c.codebook_init),
        true);
  }

  /// gumbel == nullptr selects eval mode (argmax, no noise).
  ad::Var<T> forward(const PcGroups& groups, double tau, Rng* gumbel) const {
    auto coords = ad::constant(groups.group_coords.template cast<T>());
    auto pointwise = ad::gelu(point_fc2.forward(ad::gelu(point_fc1.forward(coords))));
    auto feat = ad::group_max_rows(pointwise, cfg.k_neighbors);
    auto logits = to_logits.forward(feat);
    ad::Var<T> selection;
    if (gumbel) {
      Tensor<T> noise({cfg.n_centers, cfg.codebook_size});
      for (auto& x : noise.v) x = static_cast<T>(gumbel->gumbel());
      auto perturbed = ad::scale(ad::add(logits, ad::constant(noise)), 1.0 / tau);
      selection = ad::hard_onehot_st(ad::softmax_rows(perturbed));
    } else {
      selection = ad::hard_onehot_st(ad::softmax_rows(logits));
    }
    auto code = ad::matmul(selection, codebook);
    auto centers = ad::constant(groups.center_xyz.template cast<T>());
    return ad::add(refine.forward(code), center_proj.forward(centers));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    point_fc1.collect(out, prefix + ".point_fc1");
    point_fc2.collect(out, prefix + ".point_fc2");
    to_logits.collect(out, prefix + ".to_logits");
    out.emplace_back(prefix + ".codebook", codebook);
    refine.collect(out, prefix + ".refine");
    center_proj.collect(out, prefix + ".center_proj");
  }
};

/// Per-position MLP projection plus temporal sinusoidal encoding.
template <typename T>
struct TrajEmbed {
  std::size_t n_pos = 16;
  Mlp<T> mlp;
  Tensor<T> pe;  // (n_pos, d)

  TrajEmbed() = default;
  TrajEmbed(std::size_t n, std::size_t d, Rng& rng)
      : n_pos(n), mlp(3, 64, d, rng) {
    pe = sinusoidal_pe_1d(n, d).template cast<T>();
  }

  ad::Var<T> forward(const ad::Var<T>& positions) const {
    if (positions->val.rows() != n_pos || positions->val.cols() != 3)
      ad::op_error("embed_trajectory", "expected (" + std::to_string(n_pos) +
                                           ",3), got " + positions->val.shape_str());
    return ad::add(mlp.forward(positions), ad::constant(pe));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    mlp.collect(out, prefix + ".mlp");
  }
};

/// Concatenate modality tokens in the fixed CSI -> PC -> POS order.
template <typename T>
struct TokenSequence {
  ad::Var<T> tokens;
  Segments seg;
};

template <typename T>
TokenSequence<T> build_unified_sequence(const ad::Var<T>& csi_tokens,
                                        const ad::Var<T>& pc_tokens,
                                        const ad::Var<T>& pos_tokens) {
  std::vector<ad::Var<T>> parts;
  Segments seg;
  std::size_t d = 0;
  auto take = [&](const ad::Var<T>& t, std::size_t& len) {
    if (!t || t->val.numel() == 0) {
      len = 0;
      return;
    }
    if (d == 0) d = t->val.cols();
    if (t->val.cols() != d)
      ad::op_error("build_unified_sequence", "embedding dim mismatch " +
                                                 t->val.shape_str());
    len = t->val.rows();
    parts.push_back(t);
  };
  take(csi_tokens, seg.csi);
  take(pc_tokens, seg.pc);
  take(pos_tokens, seg.pos);
  TokenSequence<T> out;
  out.tokens = ad::concat_rows(parts);
  out.seg = seg;
  return out;
}

}  // namespace wwm
