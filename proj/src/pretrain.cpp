#include <filesystem>
#include <fstream>

#include "wwm/checkpoint.hpp"
#include "wwm/jepa.hpp"

namespace wwm {

namespace {
constexpr uint64_t kShuffleStream = 0xE0;
constexpr uint64_t kMaskStream = 0x3A;
constexpr uint64_t kGumbelStream = 0x6B;

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

double gumbel_tau(const PretrainConfig& cfg, std::size_t step, std::size_t total) {
  if (total <= 1) return cfg.tau_end;
  const double x = std::min(1.0, static_cast<double>(step) / (total - 1));
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * x;
}

SampleInputs<float> to_inputs(const Sample& s, const PcGroups& g) {
  SampleInputs<float> in;
  in.csi = s.csi;
  in.groups = &g;
  in.traj = s.traj;
  return in;
}

}  // namespace

void PretrainData::build_groups(const PcTokenizerConfig& cfg) {
  groups.clear();
  groups.reserve(samples.size());
  for (const auto& s : samples) groups.push_back(build_pc_groups(s.pc, cfg));
}

double pretrain_batch_step(Backbone<float>& net, PretrainData& data,
                           const std::vector<std::size_t>& batch_idx,
                           const PretrainConfig& cfg, AdamW<float>& opt,
                           std::size_t global_step, std::size_t total_steps,
                           TrainLogEntry* entry) {
  const CsiGrid grid{net.online.csi.cfg.grid_t(), net.online.csi.cfg.grid_h(),
                     net.online.csi.cfg.grid_w()};
  const double tau = gumbel_tau(cfg, global_step, total_steps);
  const double inv_batch = 1.0 / static_cast<double>(batch_idx.size());
  Rng base(cfg.seed);

  opt.zero_grad();
  double loss_acc = 0.0;
  std::size_t mix[3] = {0, 0, 0};
  for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
    const std::size_t si = batch_idx[bi];
    const Sample& sample = data.samples[si];
    const PcGroups& groups = data.groups[si];
    SampleInputs<float> inputs = to_inputs(sample, groups);

    Rng mask_rng = base.child(kMaskStream, global_step, bi);
    Rng gumbel_rng = base.child(kGumbelStream, global_step, bi);

    auto seq = tokenize(net.online, inputs, tau, &gumbel_rng);
    const MaskStrategy strat = sample_strategy(mask_rng, cfg.strategy_weights);
    ++mix[static_cast<int>(strat)];
    const MaskPlan plan = make_mask_plan(strat, grid, seq.seg, cfg.mask, mask_rng);

    // target embeddings from the complete, unmasked input; no graph recorded
    TensorF target_rows;
    {
      ad::NoGradGuard ng;
      auto seq_t = tokenize(net.target, inputs, tau, nullptr);
      std::vector<std::size_t> all(seq.seg.total());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      auto h_full = encoder_forward(net.target, seq_t, all);
      target_rows = TensorF({plan.pred_idx.size(), net.cfg.d});
      for (std::size_t r = 0; r < plan.pred_idx.size(); ++r)
        std::copy(h_full->val.row(plan.pred_idx[r]),
                  h_full->val.row(plan.pred_idx[r]) + net.cfg.d,
                  target_rows.row(r));
    }

    auto z_ctx = encoder_forward(net.online, seq, plan.enc_idx);
    auto h_hat = predictor_forward(net.pred_blocks, net.mask_token, net.online,
                                   z_ctx, plan.enc_idx, plan.pred_idx, seq.seg);
    auto loss = ad::l1_mean(h_hat, ad::constant(target_rows));
    const double loss_val = loss->val.v[0];
    if (!std::isfinite(loss_val))
      throw std::runtime_error("pretrain: non-finite loss at step " +
                               std::to_string(global_step));
    loss_acc += loss_val;
    ad::backward(ad::scale(loss, inv_batch));
  }

  const double lr = lr_schedule(global_step, total_steps,
                                static_cast<std::size_t>(0.5 + cfg.warmup_epochs *
                                                                   (total_steps /
                                                                    std::max<std::size_t>(1, cfg.epochs))),
                                cfg.lr_start, cfg.lr_peak, cfg.lr_final);
  opt.step(lr);
  ema_update(net.target, net.online, cfg.ema_momentum);

  const double mean_loss = loss_acc * inv_batch;
  if (entry) {
    entry->step = global_step;
    entry->fine = mix[0];
    entry->coarse = mix[1];
    entry->traj = mix[2];
    entry->loss = mean_loss;
    entry->lr = lr;
  }
  return mean_loss;
}

PretrainResult run_pretrain(Backbone<float>& net, PretrainData& data,
                            const PretrainConfig& cfg, const std::string& out_dir,
                            std::size_t start_epoch, AdamW<float>* opt_in) {
  if (data.samples.empty()) throw std::runtime_error("pretrain: empty dataset");
  if (data.groups.size() != data.samples.size())
    throw std::runtime_error("pretrain: groups not built");

  std::size_t n = data.samples.size();
  if (cfg.max_samples > 0) n = std::min(n, cfg.max_samples);
  const std::size_t steps_per_epoch = n / cfg.batch;
  if (steps_per_epoch == 0)
    throw std::runtime_error("pretrain: batch larger than dataset");
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;

  AdamWConfig ocfg;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW<float> local_opt;
  AdamW<float>* opt = opt_in;
  if (!opt) {
    local_opt = AdamW<float>(param_list(net.trainable_params()), ocfg);
    opt = &local_opt;
  }

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.jsonl",
             start_epoch == 0 ? std::ios::trunc : std::ios::app);
  }

  PretrainResult result;
  Rng base(cfg.seed);
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled_indices(n, base.child(kShuffleStream, epoch));
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t global_step = epoch * steps_per_epoch + s;
      std::vector<std::size_t> batch(order.begin() + s * cfg.batch,
                                     order.begin() + (s + 1) * cfg.batch);
      TrainLogEntry entry;
      pretrain_batch_step(net, data, batch, cfg, *opt, global_step, total_steps,
                          &entry);
      result.log.push_back(entry);
      ++result.steps_run;
      if (log.is_open()) {
        log << "{\"step\":" << entry.step << ",\"strategy_mix\":{\"fine\":"
            << entry.fine << ",\"coarse\":" << entry.coarse
            << ",\"trajectory\":" << entry.traj << "},\"loss\":" << std::setprecision(9)
            << entry.loss << ",\"lr\":" << entry.lr << "}\n";
      }
    }
    if (!out_dir.empty() && ((epoch + 1) % cfg.checkpoint_every == 0 ||
                             epoch + 1 == cfg.epochs)) {
      Json meta = backbone_meta(net.cfg, net.online.csi.cfg, net.online.pc.cfg,
                                net.online.pos.n_pos);
      meta["epoch"] = epoch + 1;
      meta["global_step"] = (epoch + 1) * steps_per_epoch;
      meta["seed"] = cfg.seed;
      save_checkpoint(out_dir + "/ckpt_latest.wwmd", net, opt, meta);
    }
  }
  return result;
}

}  // namespace wwm
