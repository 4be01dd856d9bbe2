/**
 * @file tasks.hpp
 * @brief Downstream tasks over the frozen (or fine-tuned) backbone: temporal
 *        CSI prediction, compression/feedback, cross-band beam prediction,
 *        localization, frequency-domain prediction.
 */
#pragma once

#include <complex>
#include <optional>

#include "wwm/backbone.hpp"
#include "wwm/chan_synth.hpp"
#include "wwm/jepa.hpp"
#include "wwm/metrics.hpp"

namespace wwm {

// ---------------------------------------------------------------------------
// composite CSI reconstruction loss
// ---------------------------------------------------------------------------

struct CsiLossGeometry {
  std::size_t t_pred = 2, h = 32, w = 32;
  std::size_t n_r = 4, n_sb = 8;
  bool w_subband_major = false;
  std::size_t power_iters = 16;
};

template <typename T>
std::optional<ad::Var<T>> differentiable_sgcs_t(const ad::Var<T>& y_hat,
                                                const ad::Var<T>& y, std::size_t t,
                                                const CsiLossGeometry& geo);

/// Raw MSE + alpha * magnitude MSE + beta * phase consistency +
/// gamma * mean_t (1 - SGCS_t). y_hat and y are (2, t_pred, h, w) tensors in
/// the graph; the SGCS term runs an unrolled differentiable power iteration
/// on the predicted side and numeric dominant vectors on the truth side.
template <typename T>
ad::Var<T> composite_csi_loss(const ad::Var<T>& y_hat, const ad::Var<T>& y,
                              double alpha, double beta, double gamma,
                              const CsiLossGeometry& geo) {
  const std::size_t n_complex = geo.t_pred * geo.h * geo.w;
  if (y_hat->val.numel() != 2 * n_complex || y->val.numel() != 2 * n_complex)
    ad::op_error("composite_csi_loss", "shape mismatch " + y_hat->val.shape_str() +
                                           " vs expected (2," +
                                           std::to_string(geo.t_pred) + ",...)");
  auto flat_hat = ad::reshape(y_hat, {2, n_complex});
  auto flat = ad::reshape(y, {2, n_complex});
  auto re_hat = ad::slice_rows(flat_hat, 0, 1);
  auto im_hat = ad::slice_rows(flat_hat, 1, 2);
  auto re = ad::slice_rows(flat, 0, 1);
  auto im = ad::slice_rows(flat, 1, 2);

  // raw MSE over all 2*t*h*w real values
  auto loss = ad::mse_mean(y_hat, y);

  if (alpha != 0.0) {
    auto mag_hat = ad::complex_abs(re_hat, im_hat);
    auto mag = ad::complex_abs(re, im);
    // formula divides by N = 2*t*h*w although there are N/2 magnitudes
    loss = ad::add(loss, ad::scale(ad::mse_mean(mag_hat, mag), alpha * 0.5));
  }
  if (beta != 0.0) {
    auto cosm = ad::phase_cosine_mean(re_hat, im_hat, re, im);
    auto one = ad::constant(Tensor<T>::full({1}, T(1)));
    loss = ad::add(loss, ad::scale(ad::sub(one, cosm), beta));
  }
  if (gamma != 0.0) {
    auto sgcs_term = ad::constant(Tensor<T>::zeros({1}));
    std::size_t used_t = 0;
    for (std::size_t t = 0; t < geo.t_pred; ++t) {
      auto per_t = differentiable_sgcs_t(y_hat, y, t, geo);
      if (!per_t) continue;
      auto one = ad::constant(Tensor<T>::full({1}, T(1)));
      sgcs_term = ad::add(sgcs_term, ad::sub(one, *per_t));
      ++used_t;
    }
    if (used_t)
      loss = ad::add(loss, ad::scale(sgcs_term, gamma / static_cast<double>(used_t)));
  }
  return loss;
}

/// SGCS of predicted vs true CSI at one timestep, differentiable through the
/// predicted side. Returns nullopt when every subband of the truth is zero.
template <typename T>
std::optional<ad::Var<T>> differentiable_sgcs_t(const ad::Var<T>& y_hat,
                                                const ad::Var<T>& y, std::size_t t,
                                                const CsiLossGeometry& geo) {
  // truth-side dominant vectors, numeric
  Tensor<T> y_val = y->val;
  TensorF y_f32({2, geo.t_pred, geo.h, geo.w});
  for (std::size_t i = 0; i < y_val.numel(); ++i)
    y_f32.v[i] = static_cast<float>(y_val.v[i]);
  auto mats = subband_matrices(y_f32, t, geo.n_r, geo.n_sb, geo.w_subband_major);

  std::vector<ad::Var<T>> scores;
  const std::size_t plane = geo.t_pred * geo.h * geo.w;
  for (std::size_t sb = 0; sb < geo.n_sb; ++sb) {
    if (mats[sb].frobenius_norm() == 0.0) continue;
    auto vt = dominant_right_singular_vector(mats[sb]);
    Tensor<T> vt_re({geo.h, 1}), vt_im({geo.h, 1});
    for (std::size_t i = 0; i < geo.h; ++i) {
      vt_re.v[i] = static_cast<T>(vt.v[i].real());
      vt_im.v[i] = static_cast<T>(vt.v[i].imag());
    }

    // predicted subband matrix as two (n_r, h) gathers
    std::vector<std::size_t> idx_re, idx_im;
    idx_re.reserve(geo.n_r * geo.h);
    idx_im.reserve(geo.n_r * geo.h);
    for (std::size_t r = 0; r < geo.n_r; ++r) {
      const std::size_t wi =
          geo.w_subband_major ? sb * geo.n_r + r : r * geo.n_sb + sb;
      for (std::size_t hh = 0; hh < geo.h; ++hh) {
        const std::size_t base = (t * geo.h + hh) * geo.w + wi;
        idx_re.push_back(base);
        idx_im.push_back(plane + base);
      }
    }
    auto m_re = ad::gather_flat(y_hat, idx_re, {geo.n_r, geo.h});
    auto m_im = ad::gather_flat(y_hat, idx_im, {geo.n_r, geo.h});

    // G = M^H M as real/imag parts
    auto mret = ad::transpose(m_re);
    auto mimt = ad::transpose(m_im);
    auto g_re = ad::add(ad::matmul(mret, m_re), ad::matmul(mimt, m_im));
    auto g_im = ad::sub(ad::matmul(mret, m_im), ad::matmul(mimt, m_re));

    // unrolled power iteration from e1
    Tensor<T> e1({geo.h, 1});
    e1.v[0] = T(1);
    auto v_re = ad::constant(e1);
    auto v_im = ad::constant(Tensor<T>::zeros({geo.h, 1}));
    for (std::size_t it = 0; it < geo.power_iters; ++it) {
      auto u_re = ad::sub(ad::matmul(g_re, v_re), ad::matmul(g_im, v_im));
      auto u_im = ad::add(ad::matmul(g_re, v_im), ad::matmul(g_im, v_re));
      auto nrm2 = ad::add(ad::sum_all(ad::mul(u_re, u_re)),
                          ad::sum_all(ad::mul(u_im, u_im)));
      auto inv = ad::rsqrt_scalar(nrm2, 1e-30);
      v_re = ad::mul_scalar_node(u_re, inv);
      v_im = ad::mul_scalar_node(u_im, inv);
    }
    // |<v_hat, v_true>| with v_hat = (v_re, v_im), unit norm by construction
    auto cre = ad::constant(vt_re);
    auto cim = ad::constant(vt_im);
    auto s_re = ad::add(ad::sum_all(ad::mul(v_re, cre)),
                        ad::sum_all(ad::mul(v_im, cim)));
    auto s_im = ad::sub(ad::sum_all(ad::mul(v_re, cim)),
                        ad::sum_all(ad::mul(v_im, cre)));
    auto mag = ad::sqrt_eps(
        ad::add(ad::mul(s_re, s_re), ad::mul(s_im, s_im)), 1e-30);
    scores.push_back(mag);
  }
  if (scores.empty()) return std::nullopt;
  auto acc = scores[0];
  for (std::size_t i = 1; i < scores.size(); ++i) acc = ad::add(acc, scores[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(scores.size()));
}

// ---------------------------------------------------------------------------
// shared head pieces
// ---------------------------------------------------------------------------

/// Transformer decoder over CSI tokens with a projection back to tube values
/// and a fixed scatter into the (2,T,H,W) output layout.
struct CsiDecoder {
  std::vector<PlainBlock<float>> blocks;
  Linear<float> proj;
  std::vector<std::size_t> scatter_idx;
  std::vector<std::size_t> out_shape;

  CsiDecoder() = default;
  CsiDecoder(std::size_t depth, std::size_t d, std::size_t heads,
             std::size_t tube_volume, Rng& rng) {
    for (std::size_t i = 0; i < depth; ++i)
      blocks.emplace_back(d, heads, 4 * d, rng);
    proj = Linear<float>(d, tube_volume, rng);
  }

  ad::Var<float> forward(const ad::Var<float>& tokens) const {
    auto x = tokens;
    for (const auto& b : blocks) x = b.forward(x);
    auto tubes = proj.forward(x);
    return ad::scatter_flat(ad::reshape(tubes, {tubes->val.numel()}), scatter_idx,
                            out_shape);
  }

  void collect(NamedParams<float>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, prefix + ".block" + std::to_string(i));
    proj.collect(out, prefix + ".proj");
  }
};

/// Scatter map for decoding a list of CSI tokens (by flat token order given)
/// into a (2, t_span, h, w) tensor; token tubes follow the patch layout.
std::vector<std::size_t> decoder_scatter_indices(const CsiPatchConfig& cfg,
                                                 std::size_t token_t0,
                                                 std::size_t token_t1,
                                                 std::size_t t_base);

/// Attentive pooling head: learned query, one cross-attention, linear output.
struct AttentiveHead {
  ad::Var<float> query;  // (1, d)
  Linear<float> out;

  AttentiveHead() = default;
  AttentiveHead(std::size_t d, std::size_t n_out, Rng& rng) {
    query = ad::leaf(TensorF::trunc_normal({1, d}, rng, 0.02), true);
    out = Linear<float>(d, n_out, rng);
  }

  ad::Var<float> forward(const ad::Var<float>& tokens) const {
    const double sc = 1.0 / std::sqrt(static_cast<double>(query->val.cols()));
    auto pooled = ad::attention(query, tokens, tokens, sc);
    return out.forward(pooled);
  }

  void collect(NamedParams<float>& out_params, const std::string& prefix) const {
    out_params.emplace_back(prefix + ".query", query);
    out.collect(out_params, prefix + ".out");
  }
};

// ---------------------------------------------------------------------------
// beam codebook
// ---------------------------------------------------------------------------

struct BeamCodebook {
  std::vector<std::vector<std::complex<double>>> beams;  // K x N_t, unit norm
  std::size_t k() const { return beams.size(); }
};

/// Kronecker DFT beams over the panel with horizontal oversampling and two
/// polarization co-phases (+1/-1), ordered (vertical, horizontal, co-phase).
BeamCodebook dft_codebook(const PanelConfig& panel, std::size_t k_beams,
                          std::size_t oversample_h);

/// Channel gain sum_k ||H_k w||^2 over subbands of a (N_t, N_r') last-step
/// channel stored as an (N_t, N_r', 2) float tensor.
double beam_gain(const TensorF& u6g, const std::vector<std::complex<double>>& w,
                 std::size_t n_r, std::size_t n_sb);

/// argmax_b gain; ties break to the lowest index. Throws on a zero channel.
std::size_t label_best_beam(const TensorF& u6g, const BeamCodebook& cb,
                            std::size_t n_r, std::size_t n_sb);

// ---------------------------------------------------------------------------
// mu-law quantizer and compression
// ---------------------------------------------------------------------------

struct MuLawQuantizer {
  double mu = 255.0;
  std::size_t bits = 4;
  bool bypass = false;  // b -> infinity: identity inside [-1,1]

  std::size_t levels() const { return std::size_t{1} << bits; }
  float operator()(float x) const;
  std::vector<float> level_table() const;  // reconstruction values, ascending
};

struct CompressionConfig {
  std::size_t reduction = 96;   // r
  std::size_t bits = 4;         // b
  double mu = 255.0;
  std::size_t decoder_depth = 6;
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double alpha = 1.0, beta = 0.5;
  std::size_t n_r = 4, n_sb = 8;
};

/// Exact rational payload/raw ratio; raw side counts the two unmasked
/// timesteps at 64 bits per real/imaginary pair of values.
std::pair<uint64_t, uint64_t> compression_ratio(std::size_t d, std::size_t r,
                                                std::size_t b, std::size_t tokens,
                                                std::size_t t_pred, std::size_t h,
                                                std::size_t w);

struct Compressor {
  Linear<float> reduce;       // D -> D/r
  ad::Var<float> token_mix;   // (n_tokens, n_tokens)
  Linear<float> expand;       // D/r -> D
  MuLawQuantizer quant;

  Compressor() = default;
  Compressor(std::size_t d, std::size_t r, std::size_t n_tokens,
             const MuLawQuantizer& q, Rng& rng);

  /// Z_csi (n_tokens, D) -> discrete-valued (n_tokens, D/r), STE backward.
  ad::Var<float> compress(const ad::Var<float>& z) const;
  ad::Var<float> expand_tokens(const ad::Var<float>& z_comp) const {
    return expand.forward(z_comp);
  }
  void collect(NamedParams<float>& out, const std::string& prefix) const;
};

// ---------------------------------------------------------------------------
// task records
// ---------------------------------------------------------------------------

struct MetricRecord {
  std::string task;
  std::string scenario;  // in-pattern | velocity-gen | city-gen | train
  std::string metric;
  double value = 0.0;
  std::size_t step = 0;
  uint64_t seed = 0;
};

void write_metric_csv(const std::string& path, const std::vector<MetricRecord>& recs);

// ---------------------------------------------------------------------------
// task datasets (precomputed latent views)
// ---------------------------------------------------------------------------

struct TaskData {
  PretrainData* data = nullptr;      // samples + groups
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> eval_idx;
  std::string eval_scenario = "in-pattern";
};

struct TemporalConfig {
  std::size_t t_ctx = 14, t_pred = 2;
  std::size_t decoder_depth = 6;
  double lr = 2e-5;
  double weight_decay = 0.0;
  std::size_t epochs = 25;
  std::size_t batch = 32;
  std::size_t sgcs_power_iters = 16;
  std::size_t n_r = 4, n_sb = 8;  // W-axis factorization for SGCS reshaping
};

/// Epoch-indexed loss weights: alpha fixed at 1, beta stepped, gamma active
/// only in the final band.
void temporal_loss_weights(std::size_t epoch_1based, double* alpha, double* beta,
                           double* gamma);

struct TemporalResult {
  CsiDecoder decoder;
  std::vector<MetricRecord> records;
  double eval_sgcs = 0.0;        // trained head on eval split
  double persistence_sgcs = 0.0; // copy-last-visible baseline
};

TemporalResult temporal_task(Backbone<float>& net, const TaskData& td,
                             const TemporalConfig& cfg, uint64_t seed);

struct CompressionResult {
  std::vector<MetricRecord> records;
  double eval_sgcs = 0.0;
  double untrained_sgcs = 0.0;
  std::pair<uint64_t, uint64_t> ratio;
};

CompressionResult compression_task(Backbone<float>& net, const TaskData& td,
                                   const CompressionConfig& cfg, uint64_t seed);

struct BeamTaskConfig {
  std::size_t k_beams = 32;
  std::size_t oversample_h = 2;
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch = 32;
};

struct BeamResult {
  AttentiveHead head;
  std::vector<MetricRecord> records;
  double top1 = 0.0;
  double r_bg = 0.0;
};

BeamResult beam_task(Backbone<float>& net, const TaskData& td,
                     const SimConfig& sim, const BeamTaskConfig& cfg, uint64_t seed);

struct LocConfig {
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch = 32;
};

struct LocResult {
  AttentiveHead head;
  std::vector<MetricRecord> records;
  double mean_error_m = 0.0;
  std::vector<double> error_deciles;  // p10..p100
};

LocResult localization_task(Backbone<float>& net, const TaskData& td,
                            const LocConfig& cfg, uint64_t seed);

struct FreqPredConfig {
  std::size_t subbands_total = 8;
  std::size_t subbands_visible = 4;
  std::size_t decoder_depth = 6;
  double lr_stage1 = 2e-4;
  double lr_stage2 = 5e-4;
  std::size_t epochs_stage1 = 2;
  std::size_t epochs_stage2 = 8;
  std::size_t batch = 16;
};

struct FreqPredResult {
  std::vector<MetricRecord> records;
  double hidden_nmse = 0.0;
  double baseline_nmse = 0.0;  // copy-nearest-visible-subband
  double hidden_sgcs = 0.0;
};

/// Two-stage fine-tuning on the subband-major permuted view. Stage 1 adapts
/// encoder+predictor with the latent objective (target encoder untouched);
/// stage 2 freezes the encoder and trains predictor+decoder with full-band
/// MSE.
FreqPredResult freq_pred_task(Backbone<float>& net, const TaskData& td,
                              const SimConfig& sim, const FreqPredConfig& cfg,
                              uint64_t seed);

/// Token ids of one temporal tubelet (all h,w patches at grid time gt).
std::vector<std::size_t> tubelet_token_ids(const CsiPatchConfig& cfg, std::size_t gt);

/// Permute the W axis of a (2,T,H,W) tensor from UE-antenna-major to
/// subband-major layout.
TensorF to_subband_major(const TensorF& csi, std::size_t n_r, std::size_t n_sb);

}  // namespace wwm
