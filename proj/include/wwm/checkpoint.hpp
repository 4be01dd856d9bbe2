/**
 * @file checkpoint.hpp
 * @brief Parameter persistence in the tensor container, with a JSON sidecar
 *        for configuration metadata.
 */
#pragma once

#include <string>

#include <json.hpp>

#include "wwm/backbone.hpp"
#include "wwm/optim.hpp"

namespace wwm {

using Json = nlohmann::json;

Json backbone_meta(const BackboneConfig& bc, const CsiPatchConfig& csi,
                   const PcTokenizerConfig& pc, std::size_t n_pos);

/// Writes trainable + target parameters, optimizer moments and the meta
/// sidecar (path + ".json").
void save_checkpoint(const std::string& path, const Backbone<float>& net,
                     const AdamW<float>* opt, const Json& extra_meta);

/// Loads parameters (and moments when opt != nullptr) by name into an
/// already-constructed model. Throws on missing names or shape mismatches.
Json load_checkpoint(const std::string& path, Backbone<float>& net,
                     AdamW<float>* opt);

/// Generic named-parameter persistence for task heads.
void save_params(const std::string& path, const NamedParams<float>& params,
                 const Json& extra_meta);
Json load_params(const std::string& path, NamedParams<float>& params);

/// Rebuilds a backbone from a checkpoint's meta sidecar (architecture must
/// come from the checkpoint so task commands can verify compatibility).
struct LoadedBackbone {
  BackboneConfig bc;
  CsiPatchConfig csi_cfg;
  PcTokenizerConfig pc_cfg;
  std::size_t n_pos = 16;
  Backbone<float> net;
  Json meta;
};
LoadedBackbone load_backbone(const std::string& path);

}  // namespace wwm
