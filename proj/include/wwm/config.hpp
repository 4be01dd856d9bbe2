/**
 * @file config.hpp
 * @brief Run configuration: nested JSON document with strict key validation.
 *
 * Unknown keys are rejected with their dotted path; missing keys pick up
 * defaults. The fully-defaulted effective config is persisted next to every
 * command output.
 */
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "wwm/chan_synth.hpp"
#include "wwm/geometry.hpp"
#include "wwm/jepa.hpp"
#include "wwm/tasks.hpp"

namespace wwm {

using Json = nlohmann::json;

struct DatasetConfig {
  std::size_t n_scenes = 2;       // pretraining scenes; one extra is held out
  std::size_t n_bs = 2;           // BS placements per pretraining scene
  std::vector<double> speeds{5.0, 30.0, 60.0};
  std::vector<double> gen_speeds{40.0, 70.0};
  std::size_t n_ue = 2048;        // trajectories per scenario
  double holdout_frac = 0.125;    // per-scenario in-pattern eval share
  double pc_radius = 100.0;       // crop radius around the trajectory midpoint
  std::size_t pc_raw_points = 4096;
  std::size_t scene_points = 20000;
};

struct RunConfig {
  uint64_t seed = 1;
  SimConfig sim;
  SceneParams scene;
  DatasetConfig dataset;
  BackboneConfig backbone;
  std::size_t patch_t = 2, patch_h = 4, patch_w = 4;
  PcTokenizerConfig pc_tok;
  PretrainConfig pretrain;
  TemporalConfig temporal;
  CompressionConfig compress;
  std::vector<std::pair<std::size_t, std::size_t>> compress_eval_grid{
      {96, 4}, {48, 4}, {24, 4}, {12, 4}};
  BeamTaskConfig beam;
  LocConfig loc;
  FreqPredConfig freqpred;

  CsiPatchConfig csi_patch() const;
};

Json default_config_json();
Json render_config(const RunConfig& cfg);

/// Strict parse: any key absent from the default document throws with the
/// dotted key path; missing keys inherit defaults.
RunConfig parse_config(const Json& j);
RunConfig load_config_file(const std::string& path);  // empty path -> defaults
void write_config_file(const std::string& path, const RunConfig& cfg);

}  // namespace wwm
