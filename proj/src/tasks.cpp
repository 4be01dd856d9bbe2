#include "wwm/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace wwm {

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

std::vector<std::size_t> tubelet_token_ids(const CsiPatchConfig& cfg, std::size_t gt) {
  const std::size_t per_t = cfg.grid_h() * cfg.grid_w();
  std::vector<std::size_t> ids(per_t);
  for (std::size_t i = 0; i < per_t; ++i) ids[i] = gt * per_t + i;
  return ids;
}

TensorF to_subband_major(const TensorF& csi, std::size_t n_r, std::size_t n_sb) {
  if (csi.ndim() != 4) throw std::runtime_error("to_subband_major: expected 4-D");
  const std::size_t T = csi.shape[1], H = csi.shape[2], W = csi.shape[3];
  if (W != n_r * n_sb) throw std::runtime_error("to_subband_major: W mismatch");
  TensorF out = csi;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t r = 0; r < n_r; ++r)
          for (std::size_t sb = 0; sb < n_sb; ++sb) {
            const std::size_t src = ((c * T + t) * H + h) * W + (r * n_sb + sb);
            const std::size_t dst = ((c * T + t) * H + h) * W + (sb * n_r + r);
            out.v[dst] = csi.v[src];
          }
  return out;
}

std::vector<std::size_t> decoder_scatter_indices(const CsiPatchConfig& cfg,
                                                 std::size_t token_t0,
                                                 std::size_t token_t1,
                                                 std::size_t) {
  const std::size_t t_span = (token_t1 - token_t0) * cfg.t_p;
  std::vector<std::size_t> idx;
  idx.reserve((token_t1 - token_t0) * cfg.grid_h() * cfg.grid_w() *
              cfg.tube_volume());
  for (std::size_t gt = token_t0; gt < token_t1; ++gt)
    for (std::size_t gh = 0; gh < cfg.grid_h(); ++gh)
      for (std::size_t gw = 0; gw < cfg.grid_w(); ++gw)
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t tt = 0; tt < cfg.t_p; ++tt)
            for (std::size_t hh = 0; hh < cfg.h_p; ++hh)
              for (std::size_t ww = 0; ww < cfg.w_p; ++ww) {
                const std::size_t t = (gt - token_t0) * cfg.t_p + tt;
                const std::size_t h = gh * cfg.h_p + hh;
                const std::size_t w = gw * cfg.w_p + ww;
                idx.push_back(((c * t_span + t) * cfg.h + h) * cfg.w + w);
              }
  return idx;
}

void write_metric_csv(const std::string& path, const std::vector<MetricRecord>& recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metric_csv: cannot open " + path);
  out << "scenario,metric,value,seed\n";
  char buf[64];
  for (const auto& r : recs) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.value);
    out << r.scenario << "," << r.metric << "," << buf << "," << r.seed << "\n";
  }
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Frozen-backbone latent extraction shared by the heads.
struct FrozenViews {
  std::vector<TensorF> per_sample;  // arbitrary cached tensor per sample
};

TensorF gather_csi_block(const TensorF& csi, std::size_t t0, std::size_t t1) {
  const std::size_t T = csi.shape[1], H = csi.shape[2], W = csi.shape[3];
  TensorF out({2, t1 - t0, H, W});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = t0; t < t1; ++t)
      std::copy(csi.v.begin() + ((c * T + t) * H) * W,
                csi.v.begin() + ((c * T + t + 1) * H) * W,
                out.v.begin() + ((c * (t1 - t0) + (t - t0)) * H) * W);
  return out;
}

double block_sgcs(const TensorF& pred, const TensorF& truth, std::size_t n_r,
                  std::size_t n_sb, bool w_sb_major = false) {
  const std::size_t t_pred = pred.shape[1];
  double acc = 0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < t_pred; ++t) {
    auto mp = subband_matrices(pred, t, n_r, n_sb, w_sb_major);
    auto mt = subband_matrices(truth, t, n_r, n_sb, w_sb_major);
    auto r = sgcs(mp, mt);
    acc += r.value;
    ++used;
  }
  return acc / static_cast<double>(used);
}

}  // namespace

// ---------------------------------------------------------------------------
// temporal prediction
// ---------------------------------------------------------------------------

void temporal_loss_weights(std::size_t epoch, double* alpha, double* beta,
                           double* gamma) {
  *alpha = 1.0;
  *gamma = 0.0;
  if (epoch <= 10) {
    *beta = 0.2;
  } else if (epoch <= 15) {
    *beta = 0.5;
  } else if (epoch <= 20) {
    *beta = 1.0;
  } else {
    *beta = 0.2;
    *gamma = 1.0;
  }
}

TemporalResult temporal_task(Backbone<float>& net, const TaskData& td,
                             const TemporalConfig& cfg, uint64_t seed) {
  const CsiPatchConfig& pc = net.online.csi.cfg;
  if (cfg.t_pred % pc.t_p)
    throw std::runtime_error("temporal_task: T_pred must be tubelet-aligned");
  if (cfg.t_ctx + cfg.t_pred != pc.t)
    throw std::runtime_error("temporal_task: T_ctx + T_pred != T");
  const std::size_t masked_tubelets = cfg.t_pred / pc.t_p;
  const std::size_t gt0 = pc.grid_t() - masked_tubelets;

  std::vector<std::size_t> pred_ids;
  for (std::size_t gt = gt0; gt < pc.grid_t(); ++gt)
    for (auto id : tubelet_token_ids(pc, gt)) pred_ids.push_back(id);

  // frozen encoder+predictor latents for every referenced sample
  auto latents_of = [&](std::size_t si) {
    ad::NoGradGuard ng;
    const Sample& s = td.data->samples[si];
    SampleInputs<float> in{s.csi, &td.data->groups[si], s.traj};
    auto seq = tokenize(net.online, in, 1.0, nullptr);
    std::vector<std::size_t> enc_idx;
    for (std::size_t i = 0; i < seq.seg.total(); ++i)
      if (!std::binary_search(pred_ids.begin(), pred_ids.end(), i))
        enc_idx.push_back(i);
    auto z = encoder_forward(net.online, seq, enc_idx);
    auto h = predictor_forward(net.pred_blocks, net.mask_token, net.online, z,
                               enc_idx, pred_ids, seq.seg);
    return h->val;
  };

  std::vector<TensorF> train_lat, train_truth, eval_lat, eval_truth;
  for (auto si : td.train_idx) {
    train_lat.push_back(latents_of(si));
    train_truth.push_back(gather_csi_block(td.data->samples[si].csi, cfg.t_ctx, pc.t));
  }
  for (auto si : td.eval_idx) {
    eval_lat.push_back(latents_of(si));
    eval_truth.push_back(gather_csi_block(td.data->samples[si].csi, cfg.t_ctx, pc.t));
  }

  Rng rng(seed);
  TemporalResult res;
  res.decoder = CsiDecoder(cfg.decoder_depth, net.cfg.d, net.cfg.n_heads,
                           pc.tube_volume(), rng);
  res.decoder.scatter_idx = decoder_scatter_indices(pc, gt0, pc.grid_t(), 0);
  res.decoder.out_shape = {2, cfg.t_pred, pc.h, pc.w};

  NamedParams<float> named;
  res.decoder.collect(named, "decoder");
  AdamWConfig ocfg;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(param_list(named), ocfg);

  CsiLossGeometry geo;
  geo.t_pred = cfg.t_pred;
  geo.h = pc.h;
  geo.w = pc.w;
  geo.power_iters = cfg.sgcs_power_iters;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double alpha, beta, gamma;
    temporal_loss_weights(epoch, &alpha, &beta, &gamma);
    Rng erng = rng.child(epoch);
    auto order = shuffled(train_lat.size(), erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        auto y_hat = res.decoder.forward(ad::constant(train_lat[i]));
        auto loss = composite_csi_loss(y_hat, ad::constant(train_truth[i]), alpha,
                                       beta, gamma, geo);
        ad::backward(ad::scale(loss, 1.0 / cfg.batch));
      }
      opt.step(cfg.lr);
    }
  }

  // evaluation: SGCS per predicted step + persistence baseline
  const std::size_t n_r = cfg.n_r;
  const std::size_t n_sb = cfg.n_sb;
  double acc = 0, acc_persist = 0;
  std::vector<double> per_step(cfg.t_pred, 0.0);
  for (std::size_t i = 0; i < eval_lat.size(); ++i) {
    ad::NoGradGuard ng;
    auto y_hat = res.decoder.forward(ad::constant(eval_lat[i]));
    TensorF pred(std::vector<std::size_t>{2, cfg.t_pred, pc.h, pc.w});
    pred.v.assign(y_hat->val.v.begin(), y_hat->val.v.end());
    for (std::size_t t = 0; t < cfg.t_pred; ++t) {
      auto mp = subband_matrices(pred, t, n_r, n_sb);
      auto mt = subband_matrices(eval_truth[i], t, n_r, n_sb);
      per_step[t] += sgcs(mp, mt).value;
    }
    acc += block_sgcs(pred, eval_truth[i], n_r, n_sb);

    // persistence: copy the last visible step into every predicted step
    const Sample& s = td.data->samples[td.eval_idx[i]];
    TensorF persist({2, cfg.t_pred, pc.h, pc.w});
    for (std::size_t c = 0; c < 2; ++c) {
      const float* last =
          s.csi.v.data() + ((c * pc.t + (cfg.t_ctx - 1)) * pc.h) * pc.w;
      for (std::size_t t = 0; t < cfg.t_pred; ++t)
        std::copy(last, last + pc.h * pc.w,
                  persist.v.begin() + ((c * cfg.t_pred + t) * pc.h) * pc.w);
    }
    acc_persist += block_sgcs(persist, eval_truth[i], n_r, n_sb);
  }
  const double n_eval = static_cast<double>(std::max<std::size_t>(1, eval_lat.size()));
  res.eval_sgcs = acc / n_eval;
  res.persistence_sgcs = acc_persist / n_eval;
  for (std::size_t t = 0; t < cfg.t_pred; ++t)
    res.records.push_back({"temporal", td.eval_scenario,
                           "sgcs_t" + std::to_string(cfg.t_ctx + t + 1),
                           per_step[t] / n_eval, 0, seed});
  res.records.push_back({"temporal", td.eval_scenario, "sgcs_avg", res.eval_sgcs, 0, seed});
  res.records.push_back({"temporal", td.eval_scenario, "persistence_sgcs_avg",
                         res.persistence_sgcs, 0, seed});
  return res;
}

// ---------------------------------------------------------------------------
// compression / feedback
// ---------------------------------------------------------------------------

float MuLawQuantizer::operator()(float x) const {
  if (bypass) return x;
  const double L = static_cast<double>(levels());
  double y = std::max(-1.0, std::min(1.0, static_cast<double>(x)));
  const double f = (y >= 0 ? 1.0 : -1.0) * std::log1p(mu * std::fabs(y)) /
                   std::log1p(mu);
  double k = std::round(f * (L / 2.0));
  k = std::max(-L / 2.0, std::min(L / 2.0 - 1.0, k));
  const double fq = k * (2.0 / L);
  const double out =
      (fq >= 0 ? 1.0 : -1.0) * (std::pow(1.0 + mu, std::fabs(fq)) - 1.0) / mu;
  return static_cast<float>(out);
}

std::vector<float> MuLawQuantizer::level_table() const {
  const double L = static_cast<double>(levels());
  std::vector<float> out;
  for (double k = -L / 2.0; k <= L / 2.0 - 1.0; k += 1.0) {
    const double fq = k * (2.0 / L);
    out.push_back(static_cast<float>(
        (fq >= 0 ? 1.0 : -1.0) * (std::pow(1.0 + mu, std::fabs(fq)) - 1.0) / mu));
  }
  return out;
}

std::pair<uint64_t, uint64_t> compression_ratio(std::size_t d, std::size_t r,
                                                std::size_t b, std::size_t tokens,
                                                std::size_t t_pred, std::size_t h,
                                                std::size_t w) {
  if (r == 0 || d % r) throw std::runtime_error("compression_ratio: r must divide D");
  uint64_t num = static_cast<uint64_t>(tokens) * (d / r) * b;
  uint64_t den = 2ull * t_pred * h * w * 64ull;
  const uint64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Compressor::Compressor(std::size_t d, std::size_t r, std::size_t n_tokens,
                       const MuLawQuantizer& q, Rng& rng)
    : reduce(d, d / r, rng), expand(d / r, d, rng), quant(q) {
  if (r == 0 || d % r)
    throw std::runtime_error("compressor: r must divide D (got D=" +
                             std::to_string(d) + ", r=" + std::to_string(r) + ")");
  token_mix = ad::leaf(TensorF::trunc_normal({n_tokens, n_tokens}, rng, 0.02), true);
  // start the mixing near the identity
  for (std::size_t i = 0; i < n_tokens; ++i) token_mix->val.at(i, i) += 1.0f;
}

ad::Var<float> Compressor::compress(const ad::Var<float>& z) const {
  auto reduced = reduce.forward(z);
  auto mixed = ad::matmul(token_mix, reduced);
  // per-feedback-vector max-abs normalization; the scale travels beside the
  // payload and is treated as a constant in the backward pass
  float s = 0.0f;
  for (float v : mixed->val.v) s = std::max(s, std::fabs(v));
  if (s == 0.0f) s = 1.0f;
  auto normalized = ad::scale(mixed, 1.0 / s);
  const MuLawQuantizer q = quant;
  auto quantized = ad::quantize_st<float>(normalized, [q](float x) { return q(x); });
  return ad::scale(quantized, s);
}

void Compressor::collect(NamedParams<float>& out, const std::string& prefix) const {
  reduce.collect(out, prefix + ".reduce");
  out.emplace_back(prefix + ".token_mix", token_mix);
  expand.collect(out, prefix + ".expand");
}

CompressionResult compression_task(Backbone<float>& net, const TaskData& td,
                                   const CompressionConfig& cfg, uint64_t seed) {
  const CsiPatchConfig& pc = net.online.csi.cfg;
  const std::size_t tubelet = 3;  // time steps 7 and 8, 1-based
  const std::size_t t0 = tubelet * pc.t_p, t1 = (tubelet + 1) * pc.t_p;
  auto csi_ids = tubelet_token_ids(pc, tubelet);
  const std::size_t n_tok = csi_ids.size();

  auto z_of = [&](std::size_t si) {
    ad::NoGradGuard ng;
    const Sample& s = td.data->samples[si];
    SampleInputs<float> in{s.csi, &td.data->groups[si], s.traj};
    auto seq = tokenize(net.online, in, 1.0, nullptr);
    std::vector<std::size_t> enc_idx = csi_ids;
    for (std::size_t i = seq.seg.csi; i < seq.seg.total(); ++i) enc_idx.push_back(i);
    auto z = encoder_forward(net.online, seq, enc_idx);
    TensorF out({n_tok, net.cfg.d});
    std::copy(z->val.v.begin(), z->val.v.begin() + n_tok * net.cfg.d, out.v.begin());
    return out;
  };

  std::vector<TensorF> train_z, train_truth, eval_z, eval_truth;
  for (auto si : td.train_idx) {
    train_z.push_back(z_of(si));
    train_truth.push_back(gather_csi_block(td.data->samples[si].csi, t0, t1));
  }
  for (auto si : td.eval_idx) {
    eval_z.push_back(z_of(si));
    eval_truth.push_back(gather_csi_block(td.data->samples[si].csi, t0, t1));
  }

  MuLawQuantizer quant;
  quant.mu = cfg.mu;
  quant.bits = cfg.bits;

  auto build_heads = [&](uint64_t s) {
    Rng rng(s);
    Compressor comp(net.cfg.d, cfg.reduction, n_tok, quant, rng);
    CsiDecoder dec(cfg.decoder_depth, net.cfg.d, net.cfg.n_heads, pc.tube_volume(),
                   rng);
    dec.scatter_idx = decoder_scatter_indices(pc, tubelet, tubelet + 1, 0);
    dec.out_shape = {2, pc.t_p, pc.h, pc.w};
    return std::make_pair(std::move(comp), std::move(dec));
  };

  auto [comp, dec] = build_heads(seed);
  NamedParams<float> named;
  comp.collect(named, "compressor");
  dec.collect(named, "decoder");
  AdamWConfig ocfg;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(param_list(named), ocfg);

  CsiLossGeometry geo;
  geo.t_pred = pc.t_p;
  geo.h = pc.h;
  geo.w = pc.w;

  auto forward_pipe = [&](const Compressor& c, const CsiDecoder& d,
                          const TensorF& z) {
    auto z_comp = c.compress(ad::constant(z));
    return d.forward(c.expand_tokens(z_comp));
  };

  Rng rng(seed);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng = rng.child(epoch);
    auto order = shuffled(train_z.size(), erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        auto y_hat = forward_pipe(comp, dec, train_z[i]);
        auto loss = composite_csi_loss(y_hat, ad::constant(train_truth[i]),
                                       cfg.alpha, cfg.beta, 0.0, geo);
        ad::backward(ad::scale(loss, 1.0 / cfg.batch));
      }
      opt.step(cfg.lr);
    }
  }

  CompressionResult res;
  res.ratio = compression_ratio(net.cfg.d, cfg.reduction, cfg.bits, n_tok, pc.t_p,
                                pc.h, pc.w);
  const std::size_t n_r = cfg.n_r, n_sb = cfg.n_sb;
  auto eval_pair = [&](const Compressor& c, const CsiDecoder& d) {
    ad::NoGradGuard ng;
    double acc = 0;
    for (std::size_t i = 0; i < eval_z.size(); ++i) {
      auto y_hat = forward_pipe(c, d, eval_z[i]);
      TensorF pred(std::vector<std::size_t>{2, pc.t_p, pc.h, pc.w});
      pred.v.assign(y_hat->val.v.begin(), y_hat->val.v.end());
      acc += block_sgcs(pred, eval_truth[i], n_r, n_sb);
    }
    return acc / std::max<std::size_t>(1, eval_z.size());
  };
  res.eval_sgcs = eval_pair(comp, dec);
  auto [comp_u, dec_u] = build_heads(seed + 7919);
  res.untrained_sgcs = eval_pair(comp_u, dec_u);

  const std::string ratio_tag =
      std::to_string(res.ratio.first) + "/" + std::to_string(res.ratio.second);
  res.records.push_back({"compress", td.eval_scenario, "sgcs@" + ratio_tag,
                         res.eval_sgcs, 0, seed});
  res.records.push_back({"compress", td.eval_scenario,
                         "untrained_sgcs@" + ratio_tag, res.untrained_sgcs, 0, seed});
  return res;
}

// ---------------------------------------------------------------------------
// beam prediction
// ---------------------------------------------------------------------------

BeamCodebook dft_codebook(const PanelConfig& panel, std::size_t k_beams,
                          std::size_t oversample_h) {
  if (k_beams == 0) throw std::runtime_error("dft_codebook: K must be >= 1");
  const std::size_t beams_h = panel.n_h * std::max<std::size_t>(1, oversample_h);
  const std::size_t co_phases = panel.n_pol >= 2 ? 2 : 1;
  if (k_beams % (beams_h * co_phases))
    throw std::runtime_error("dft_codebook: K must factor as v * h * co-phase");
  const std::size_t beams_v = k_beams / (beams_h * co_phases);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(panel.ports()));
  constexpr double kTwoPi = 6.28318530717958647692;

  BeamCodebook cb;
  cb.beams.reserve(k_beams);
  for (std::size_t nv = 0; nv < beams_v; ++nv)
    for (std::size_t mh = 0; mh < beams_h; ++mh)
      for (std::size_t p = 0; p < co_phases; ++p) {
        std::vector<std::complex<double>> w(panel.ports());
        const std::complex<double> cophase = p == 0 ? 1.0 : -1.0;
        for (std::size_t pol = 0; pol < panel.n_pol; ++pol)
          for (std::size_t iv = 0; iv < panel.n_v; ++iv)
            for (std::size_t ih = 0; ih < panel.n_h; ++ih) {
              const double phase =
                  kTwoPi * (static_cast<double>(ih * mh) /
                                static_cast<double>(beams_h) +
                            static_cast<double>(iv * nv) /
                                static_cast<double>(panel.n_v));
              std::complex<double> val = std::polar(inv_sqrt, phase);
              if (pol == 1) val *= cophase;
              w[(pol * panel.n_v + iv) * panel.n_h + ih] = val;
            }
        cb.beams.push_back(std::move(w));
      }
  return cb;
}

double beam_gain(const TensorF& u6g, const std::vector<std::complex<double>>& w,
                 std::size_t n_r, std::size_t n_sb) {
  const std::size_t n_t = u6g.shape[0];
  if (u6g.shape[1] != n_r * n_sb || w.size() != n_t)
    throw std::runtime_error("beam_gain: shape mismatch");
  double gain = 0;
  for (std::size_t sb = 0; sb < n_sb; ++sb)
    for (std::size_t r = 0; r < n_r; ++r) {
      std::complex<double> acc = 0;
      for (std::size_t tx = 0; tx < n_t; ++tx) {
        const std::size_t base = (tx * u6g.shape[1] + (r * n_sb + sb)) * 2;
        const std::complex<double> h{u6g.v[base], u6g.v[base + 1]};
        acc += h * w[tx];
      }
      gain += std::norm(acc);
    }
  return gain;
}

std::size_t label_best_beam(const TensorF& u6g, const BeamCodebook& cb,
                            std::size_t n_r, std::size_t n_sb) {
  double best = -1.0;
  std::size_t best_b = 0;
  bool any_positive = false;
  for (std::size_t b = 0; b < cb.k(); ++b) {
    const double g = beam_gain(u6g, cb.beams[b], n_r, n_sb);
    if (g > 0) any_positive = true;
    if (g > best) {
      best = g;
      best_b = b;
    }
  }
  if (!any_positive) throw std::runtime_error("label_best_beam: zero channel");
  return best_b;
}

BeamResult beam_task(Backbone<float>& net, const TaskData& td, const SimConfig& sim,
                     const BeamTaskConfig& cfg, uint64_t seed) {
  BeamCodebook cb = dft_codebook(sim.bs_panel, cfg.k_beams, cfg.oversample_h);
  const std::size_t n_r = sim.n_r(), n_sb = sim.n_sb;

  auto tokens_of = [&](std::size_t si) {
    ad::NoGradGuard ng;
    const Sample& s = td.data->samples[si];
    SampleInputs<float> in{s.csi, &td.data->groups[si], s.traj};
    auto seq = tokenize(net.online, in, 1.0, nullptr);
    auto z = encoder_forward(net.online, seq, iota_vec(seq.seg.total()));
    return z->val;
  };
  auto label_of = [&](std::size_t si) {
    return label_best_beam(td.data->samples[si].u6g, cb, n_r, n_sb);
  };

  std::vector<TensorF> train_tok, eval_tok;
  std::vector<std::size_t> train_lbl, eval_lbl;
  for (auto si : td.train_idx) {
    train_tok.push_back(tokens_of(si));
    train_lbl.push_back(label_of(si));
  }
  for (auto si : td.eval_idx) {
    eval_tok.push_back(tokens_of(si));
    eval_lbl.push_back(label_of(si));
  }

  Rng rng(seed);
  BeamResult res;
  res.head = AttentiveHead(net.cfg.d, cb.k(), rng);
  NamedParams<float> named;
  res.head.collect(named, "beam_head");
  AdamWConfig ocfg;
  ocfg.weight_decay = 0.0;
  AdamW<float> opt(param_list(named), ocfg);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng = rng.child(epoch);
    auto order = shuffled(train_tok.size(), erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        auto logits = res.head.forward(ad::constant(train_tok[i]));
        auto loss = ad::cross_entropy_mean(logits, {train_lbl[i]});
        ad::backward(ad::scale(loss, 1.0 / cfg.batch));
      }
      opt.step(cfg.lr);
    }
  }

  // evaluation: Top-1 and beam gain ratio
  std::size_t hits = 0;
  double rbg_acc = 0;
  for (std::size_t i = 0; i < eval_tok.size(); ++i) {
    ad::NoGradGuard ng;
    auto logits = res.head.forward(ad::constant(eval_tok[i]));
    std::size_t pred = 0;
    for (std::size_t k = 1; k < cb.k(); ++k)
      if (logits->val.v[k] > logits->val.v[pred]) pred = k;
    hits += pred == eval_lbl[i];
    const TensorF& u6g = td.data->samples[td.eval_idx[i]].u6g;
    const double g_pred = beam_gain(u6g, cb.beams[pred], n_r, n_sb);
    const double g_best = beam_gain(u6g, cb.beams[eval_lbl[i]], n_r, n_sb);
    rbg_acc += g_best > 0 ? g_pred / g_best : 0.0;
  }
  const double n_eval = static_cast<double>(std::max<std::size_t>(1, eval_tok.size()));
  res.top1 = hits / n_eval;
  res.r_bg = rbg_acc / n_eval;
  res.records.push_back({"beam", td.eval_scenario, "top1", res.top1, 0, seed});
  res.records.push_back({"beam", td.eval_scenario, "r_bg", res.r_bg, 0, seed});
  res.records.push_back({"beam", td.eval_scenario, "random_baseline",
                         1.0 / static_cast<double>(cb.k()), 0, seed});
  return res;
}

// ---------------------------------------------------------------------------
// localization
// ---------------------------------------------------------------------------

LocResult localization_task(Backbone<float>& net, const TaskData& td,
                            const LocConfig& cfg, uint64_t seed) {
  auto tokens_of = [&](std::size_t si) {
    ad::NoGradGuard ng;
    const Sample& s = td.data->samples[si];
    auto csi_tok = net.online.csi.forward(ad::constant(s.csi));
    auto pc_tok = net.online.pc.forward(td.data->groups[si], 1.0, nullptr);
    auto seq = build_unified_sequence<float>(csi_tok, pc_tok, nullptr);
    auto z = encoder_forward(net.online, seq, iota_vec(seq.seg.total()));
    return z->val;
  };

  std::vector<TensorF> train_tok, eval_tok;
  std::vector<std::array<float, 2>> train_lbl, eval_lbl;
  for (auto si : td.train_idx) {
    if (!std::isfinite(td.data->samples[si].pos2d[0]))
      throw std::runtime_error("localization_task: missing label");
    train_tok.push_back(tokens_of(si));
    train_lbl.push_back(td.data->samples[si].pos2d);
  }
  for (auto si : td.eval_idx) {
    eval_tok.push_back(tokens_of(si));
    eval_lbl.push_back(td.data->samples[si].pos2d);
  }

  Rng rng(seed);
  LocResult res;
  res.head = AttentiveHead(net.cfg.d, 2, rng);
  NamedParams<float> named;
  res.head.collect(named, "loc_head");
  AdamWConfig ocfg;
  ocfg.weight_decay = 0.0;
  AdamW<float> opt(param_list(named), ocfg);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng = rng.child(epoch);
    auto order = shuffled(train_tok.size(), erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        auto pred = res.head.forward(ad::constant(train_tok[i]));
        TensorF target({1, 2});
        target.v = {train_lbl[i][0], train_lbl[i][1]};
        ad::backward(ad::scale(ad::mse_mean(pred, ad::constant(target)),
                               1.0 / cfg.batch));
      }
      opt.step(cfg.lr);
    }
  }

  std::vector<double> errors;
  for (std::size_t i = 0; i < eval_tok.size(); ++i) {
    ad::NoGradGuard ng;
    auto pred = res.head.forward(ad::constant(eval_tok[i]));
    const double dx = pred->val.v[0] - eval_lbl[i][0];
    const double dy = pred->val.v[1] - eval_lbl[i][1];
    errors.push_back(std::hypot(dx, dy));
  }
  std::sort(errors.begin(), errors.end());
  double mean_err = 0;
  for (double e : errors) mean_err += e;
  res.mean_error_m = errors.empty() ? 0.0 : mean_err / errors.size();
  res.records.push_back({"loc", td.eval_scenario, "mean_error_m", res.mean_error_m,
                         0, seed});
  for (int dec = 1; dec <= 10; ++dec) {
    double q = 0.0;
    if (!errors.empty()) {
      const auto pos = static_cast<std::size_t>(
          std::ceil(dec * 0.1 * static_cast<double>(errors.size())));
      q = errors[std::min(errors.size() - 1, pos > 0 ? pos - 1 : 0)];
    }
    res.error_deciles.push_back(q);
    res.records.push_back({"loc", td.eval_scenario,
                           "error_p" + std::to_string(dec * 10), q, 0, seed});
  }
  return res;
}

// ---------------------------------------------------------------------------
// frequency-domain prediction
// ---------------------------------------------------------------------------

FreqPredResult freq_pred_task(Backbone<float>& net, const TaskData& td,
                              const SimConfig& sim, const FreqPredConfig& cfg,
                              uint64_t seed) {
  const CsiPatchConfig& pc = net.online.csi.cfg;
  const std::size_t n_r = sim.n_r(), n_sb = sim.n_sb;
  if (pc.w_p == 0 || n_r % pc.w_p)
    throw std::runtime_error(
        "freq_pred_task: W_p must divide the per-subband span (N_r)");
  if (cfg.subbands_visible >= cfg.subbands_total)
    throw std::runtime_error("freq_pred_task: visible must be < total");

  // hidden W columns in the subband-major view: [visible*n_r, total*n_r)
  const std::size_t w_hidden0 = cfg.subbands_visible * n_r;
  const std::size_t wp_hidden0 = w_hidden0 / pc.w_p;
  std::vector<std::size_t> pred_ids, enc_csi_ids;
  for (std::size_t gt = 0; gt < pc.grid_t(); ++gt)
    for (std::size_t gh = 0; gh < pc.grid_h(); ++gh)
      for (std::size_t gw = 0; gw < pc.grid_w(); ++gw) {
        const std::size_t id = (gt * pc.grid_h() + gh) * pc.grid_w() + gw;
        (gw >= wp_hidden0 ? pred_ids : enc_csi_ids).push_back(id);
      }

  // permuted (subband-major) views
  std::vector<TensorF> train_csi, eval_csi;
  for (auto si : td.train_idx)
    train_csi.push_back(to_subband_major(td.data->samples[si].csi, n_r, n_sb));
  for (auto si : td.eval_idx)
    eval_csi.push_back(to_subband_major(td.data->samples[si].csi, n_r, n_sb));

  auto enc_ids_of = [&](const Segments& seg) {
    std::vector<std::size_t> enc = enc_csi_ids;
    for (std::size_t i = seg.csi; i < seg.total(); ++i) enc.push_back(i);
    return enc;
  };

  // ---- stage 1: joint encoder+predictor adaptation, latent objective ----
  NamedParams<float> stage1_named = net.trainable_params();
  AdamWConfig ocfg;
  ocfg.weight_decay = 0.01;
  AdamW<float> opt1(param_list(stage1_named), ocfg);
  Rng rng(seed);
  const std::size_t n_train = train_csi.size();
  for (std::size_t epoch = 1; epoch <= cfg.epochs_stage1; ++epoch) {
    Rng erng = rng.child(0xF1, epoch);
    auto order = shuffled(n_train, erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt1.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        const std::size_t si = td.train_idx[i];
        SampleInputs<float> in{train_csi[i], &td.data->groups[si],
                               td.data->samples[si].traj};
        auto seq = tokenize(net.online, in, 1.0, nullptr);
        auto enc_idx = enc_ids_of(seq.seg);

        TensorF target_rows;
        {
          ad::NoGradGuard ng;
          auto seq_t = tokenize(net.target, in, 1.0, nullptr);
          auto h_full = encoder_forward(net.target, seq_t, iota_vec(seq.seg.total()));
          target_rows = TensorF({pred_ids.size(), net.cfg.d});
          for (std::size_t r = 0; r < pred_ids.size(); ++r)
            std::copy(h_full->val.row(pred_ids[r]),
                      h_full->val.row(pred_ids[r]) + net.cfg.d, target_rows.row(r));
        }
        auto z = encoder_forward(net.online, seq, enc_idx);
        auto h_hat = predictor_forward(net.pred_blocks, net.mask_token, net.online,
                                       z, enc_idx, pred_ids, seq.seg);
        ad::backward(ad::scale(ad::l1_mean(h_hat, ad::constant(target_rows)),
                               1.0 / cfg.batch));
      }
      opt1.step(cfg.lr_stage1);
      // target encoder stays untouched during fine-tuning
    }
  }

  // ---- stage 2: encoder frozen; predictor + decoder, full-band MSE ----
  Rng dec_rng = rng.child(0xF2);
  CsiDecoder dec(cfg.decoder_depth, net.cfg.d, net.cfg.n_heads, pc.tube_volume(),
                 dec_rng);
  dec.scatter_idx = decoder_scatter_indices(pc, 0, pc.grid_t(), 0);
  dec.out_shape = {2, pc.t, pc.h, pc.w};

  // frozen-encoder context per sample
  std::vector<TensorF> train_ctx, eval_ctx;
  Segments full_seg;
  {
    ad::NoGradGuard ng;
    auto ctx_of = [&](const TensorF& csi, std::size_t si) {
      SampleInputs<float> in{csi, &td.data->groups[si], td.data->samples[si].traj};
      auto seq = tokenize(net.online, in, 1.0, nullptr);
      full_seg = seq.seg;
      auto z = encoder_forward(net.online, seq, enc_ids_of(seq.seg));
      return z->val;
    };
    for (std::size_t i = 0; i < train_csi.size(); ++i)
      train_ctx.push_back(ctx_of(train_csi[i], td.train_idx[i]));
    for (std::size_t i = 0; i < eval_csi.size(); ++i)
      eval_ctx.push_back(ctx_of(eval_csi[i], td.eval_idx[i]));
  }
  const auto enc_idx_full = enc_ids_of(full_seg);

  NamedParams<float> stage2_named;
  for (std::size_t i = 0; i < net.pred_blocks.size(); ++i)
    net.pred_blocks[i].collect(stage2_named, "pred.block" + std::to_string(i));
  stage2_named.emplace_back("mask_token", net.mask_token);
  dec.collect(stage2_named, "decoder");
  AdamW<float> opt2(param_list(stage2_named), ocfg);

  auto full_csi_rows = [&](const PredictorOut<float>& po) {
    std::vector<std::size_t> rows(full_seg.csi);
    for (std::size_t i = 0; i < full_seg.csi; ++i) rows[i] = po.row_of(i);
    return rows;
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs_stage2; ++epoch) {
    Rng erng = rng.child(0xF3, epoch);
    auto order = shuffled(n_train, erng);
    for (std::size_t s0 = 0; s0 + cfg.batch <= order.size(); s0 += cfg.batch) {
      opt2.zero_grad();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = order[s0 + b];
        auto po = predictor_forward_full(net.pred_blocks, net.mask_token,
                                         net.online, ad::constant(train_ctx[i]),
                                         enc_idx_full, pred_ids, full_seg);
        auto csi_latents = ad::gather_rows(po.union_out, full_csi_rows(po));
        auto y_hat = dec.forward(csi_latents);
        auto truth = ad::constant(train_csi[i]);
        ad::backward(ad::scale(ad::mse_mean(y_hat, truth), 1.0 / cfg.batch));
      }
      opt2.step(cfg.lr_stage2);
    }
  }

  // ---- evaluation on hidden subbands ----
  FreqPredResult res;
  double nmse_acc = 0, base_acc = 0, sgcs_acc = 0;
  std::vector<double> per_sb_nmse(cfg.subbands_total - cfg.subbands_visible, 0.0);
  std::size_t n_eval = eval_csi.size();
  for (std::size_t i = 0; i < n_eval; ++i) {
    ad::NoGradGuard ng;
    auto po = predictor_forward_full(net.pred_blocks, net.mask_token, net.online,
                                     ad::constant(eval_ctx[i]), enc_idx_full,
                                     pred_ids, full_seg);
    auto y_hat = dec.forward(ad::gather_rows(po.union_out, full_csi_rows(po)));
    const TensorF& truth = eval_csi[i];
    TensorF pred(std::vector<std::size_t>{2, pc.t, pc.h, pc.w});
    pred.v.assign(y_hat->val.v.begin(), y_hat->val.v.end());

    // hidden-column extraction helper
    auto hidden_values = [&](const TensorF& src, std::size_t sb) {
      std::vector<float> out;
      out.reserve(2 * pc.t * pc.h * n_r);
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t t = 0; t < pc.t; ++t)
          for (std::size_t h = 0; h < pc.h; ++h)
            for (std::size_t r = 0; r < n_r; ++r)
              out.push_back(src.v[((c * pc.t + t) * pc.h + h) * pc.w + sb * n_r + r]);
      return out;
    };
    // naive baseline: copy the nearest visible subband into each hidden one
    TensorF baseline = truth;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < pc.t; ++t)
        for (std::size_t h = 0; h < pc.h; ++h)
          for (std::size_t sb = cfg.subbands_visible; sb < cfg.subbands_total; ++sb)
            for (std::size_t r = 0; r < n_r; ++r)
              baseline.v[((c * pc.t + t) * pc.h + h) * pc.w + sb * n_r + r] =
                  truth.v[((c * pc.t + t) * pc.h + h) * pc.w +
                          (cfg.subbands_visible - 1) * n_r + r];

    double s_nmse = 0, s_base = 0;
    for (std::size_t sb = cfg.subbands_visible; sb < cfg.subbands_total; ++sb) {
      auto hp = hidden_values(pred, sb);
      auto ht = hidden_values(truth, sb);
      auto hb = hidden_values(baseline, sb);
      const double v = nmse(hp, ht);
      per_sb_nmse[sb - cfg.subbands_visible] += v;
      s_nmse += v;
      s_base += nmse(hb, ht);
    }
    nmse_acc += s_nmse / (cfg.subbands_total - cfg.subbands_visible);
    base_acc += s_base / (cfg.subbands_total - cfg.subbands_visible);

    // SGCS over hidden subbands, averaged over timesteps
    double sg = 0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < pc.t; ++t) {
      auto mp = subband_matrices(pred, t, n_r, n_sb, /*w_subband_major=*/true);
      auto mt = subband_matrices(truth, t, n_r, n_sb, true);
      std::vector<CMat> hp(mp.begin() + cfg.subbands_visible, mp.end());
      std::vector<CMat> ht(mt.begin() + cfg.subbands_visible, mt.end());
      sg += sgcs(hp, ht).value;
      ++used;
    }
    sgcs_acc += sg / used;
  }
  if (n_eval) {
    res.hidden_nmse = nmse_acc / n_eval;
    res.baseline_nmse = base_acc / n_eval;
    res.hidden_sgcs = sgcs_acc / n_eval;
  }
  res.records.push_back({"freqpred", td.eval_scenario, "hidden_nmse",
                         res.hidden_nmse, 0, seed});
  res.records.push_back({"freqpred", td.eval_scenario, "baseline_nmse",
                         res.baseline_nmse, 0, seed});
  res.records.push_back({"freqpred", td.eval_scenario, "hidden_sgcs",
                         res.hidden_sgcs, 0, seed});
  for (std::size_t sb = 0; sb < per_sb_nmse.size(); ++sb)
    res.records.push_back({"freqpred", td.eval_scenario,
                           "nmse_sb" + std::to_string(cfg.subbands_visible + sb + 1),
                           per_sb_nmse[sb] / std::max<std::size_t>(1, n_eval), 0,
                           seed});
  return res;
}

}  // namespace wwm
