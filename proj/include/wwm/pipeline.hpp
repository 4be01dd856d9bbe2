/**
 * @file pipeline.hpp
 * @brief Dataset synthesis across the scenario matrix, manifest handling and
 *        split loaders.
 */
#pragma once

#include <string>
#include <vector>

#include "wwm/config.hpp"
#include "wwm/dataset.hpp"
#include "wwm/jepa.hpp"

namespace wwm {

struct ScenarioSpec {
  std::size_t id = 0;
  std::size_t scene = 0;
  std::size_t bs = 0;
  double speed_kmh = 0.0;
  std::string split;  // pretrain | velocity-gen | city-gen
  std::string file;
  std::size_t n_samples = 0;
  std::size_t n_train = 0;  // leading samples used for training
};

/// Pretraining scenes x BS placements x speeds, plus velocity-generalization
/// speeds on scene 0 / BS 0 and a fully held-out city-generalization scene.
std::vector<ScenarioSpec> scenario_matrix(const RunConfig& cfg);

/// Generates every scenario, standardizes with training-split statistics and
/// writes per-scenario containers plus manifest.json and the effective
/// config. Deterministic in cfg.seed.
void run_synth(const RunConfig& cfg, const std::string& out_dir);

struct DatasetIndex {
  std::string dir;
  RunConfig cfg;
  NormStats stats;
  std::vector<ScenarioSpec> scenarios;
};

DatasetIndex load_manifest(const std::string& dir);

/// Training samples of the pretrain split, interleaved across scenarios so a
/// max_samples cap stays balanced.
PretrainData load_pretrain_split(const DatasetIndex& idx, std::size_t max_samples,
                                 const PcTokenizerConfig& pc_cfg);

struct SplitSamples {
  PretrainData data;
  std::vector<std::size_t> train_idx;  // indices into data.samples
  std::vector<std::size_t> eval_idx;
  std::vector<std::size_t> scenario_of;  // scenario id per sample
};

/// in-pattern: train portions for head training, holdout portions for eval.
/// velocity-gen / city-gen: eval over the whole generalization scenarios
/// (training still comes from the pretrain split).
SplitSamples load_task_split(const DatasetIndex& idx, const std::string& eval_split,
                             const PcTokenizerConfig& pc_cfg, std::size_t max_train,
                             std::size_t max_eval, const LoadOptions& opt = {});

}  // namespace wwm
