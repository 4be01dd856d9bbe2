/**
 * @file jepa.hpp
 * @brief Self-supervised pre-training: masking strategies over the unified
 *        token sequence, learning-rate schedule, training loop.
 */
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wwm/backbone.hpp"
#include "wwm/dataset.hpp"
#include "wwm/optim.hpp"

namespace wwm {

enum class MaskStrategy : uint8_t { kFine = 0, kCoarse = 1, kTrajectory = 2 };

const char* strategy_name(MaskStrategy s);

/// Disjoint, exhaustive index split of the unified sequence.
struct MaskPlan {
  std::vector<std::size_t> enc_idx;   // visible (sorted)
  std::vector<std::size_t> pred_idx;  // predicted (sorted)
  MaskStrategy strategy = MaskStrategy::kFine;
};

struct MaskParams {
  std::size_t fine_blocks = 8;
  double fine_temporal_frac = 0.5;
  double fine_spatial_frac = 0.15;
  std::size_t coarse_blocks = 2;
  double coarse_temporal_frac = 0.5;
  double coarse_spatial_frac = 0.7;
};

/// CSI-token grid extents (time, height, width).
struct CsiGrid {
  std::size_t n_t = 8, n_h = 8, n_w = 8;
  std::size_t tokens() const { return n_t * n_h * n_w; }
};

MaskPlan fine_mask(const CsiGrid& grid, const Segments& seg, const MaskParams& mp,
                   Rng& rng);
MaskPlan coarse_mask(const CsiGrid& grid, const Segments& seg, const MaskParams& mp,
                     Rng& rng);
MaskPlan trajectory_mask(const Segments& seg);
MaskStrategy sample_strategy(Rng& rng, const std::array<double, 3>& weights);
MaskPlan make_mask_plan(MaskStrategy s, const CsiGrid& grid, const Segments& seg,
                        const MaskParams& mp, Rng& rng);

/// Piecewise schedule: linear warmup from lr_start to lr_peak over
/// warmup_steps, then half-cosine decay to lr_final at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps,
                   std::size_t warmup_steps, double lr_start, double lr_peak,
                   double lr_final);

struct PretrainConfig {
  std::size_t batch = 32;
  std::size_t epochs = 30;
  double warmup_epochs = 2.0;
  double lr_start = 1e-5;
  double lr_peak = 2e-5;
  double lr_final = 1e-5;
  double weight_decay = 0.04;
  double ema_momentum = 0.9925;
  std::array<double, 3> strategy_weights{1.0, 1.0, 1.0};
  double tau_start = 1.0;
  double tau_end = 0.1;
  std::size_t max_samples = 0;  // 0 = use every sample
  uint64_t seed = 1;
  MaskParams mask;
  std::size_t checkpoint_every = 1;  // epochs
};

struct TrainLogEntry {
  std::size_t step = 0;
  std::size_t fine = 0, coarse = 0, traj = 0;  // per-batch strategy mix
  double loss = 0.0;
  double lr = 0.0;
};

/// Pretraining view of a dataset: samples plus cached point groupings.
struct PretrainData {
  std::vector<Sample> samples;
  std::vector<PcGroups> groups;  // parallel to samples

  void build_groups(const PcTokenizerConfig& cfg);
};

struct PretrainResult {
  std::vector<TrainLogEntry> log;
  std::size_t steps_run = 0;
};

/// Runs (epochs - start_epoch) epochs. Writes per-epoch checkpoints and a
/// line-delimited log when out_dir is non-empty; resumable from the recorded
/// epoch with a bit-identical continuation of the loss trace.
PretrainResult run_pretrain(Backbone<float>& net, PretrainData& data,
                            const PretrainConfig& cfg, const std::string& out_dir,
                            std::size_t start_epoch = 0,
                            AdamW<float>* opt_in = nullptr);

/// One JEPA step over an explicit batch of sample indices; exposed for tests.
double pretrain_batch_step(Backbone<float>& net, PretrainData& data,
                           const std::vector<std::size_t>& batch_idx,
                           const PretrainConfig& cfg, AdamW<float>& opt,
                           std::size_t global_step, std::size_t total_steps,
                           TrainLogEntry* entry = nullptr);

}  // namespace wwm
