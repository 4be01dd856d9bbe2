#include "wwm/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include "wwm/dataset.hpp"

namespace wwm {

Json backbone_meta(const BackboneConfig& bc, const CsiPatchConfig& csi,
                   const PcTokenizerConfig& pc, std::size_t n_pos) {
  Json j;
  j["backbone"] = {{"d", bc.d},
                   {"depth_enc", bc.depth_enc},
                   {"depth_pred", bc.depth_pred},
                   {"n_heads", bc.n_heads},
                   {"ffn_mult", bc.ffn_mult}};
  j["csi_patch"] = {{"t_p", csi.t_p}, {"h_p", csi.h_p}, {"w_p", csi.w_p},
                    {"t", csi.t},     {"h", csi.h},     {"w", csi.w},
                    {"d", csi.d}};
  j["pc_tokenizer"] = {{"n_centers", pc.n_centers},
                       {"k_neighbors", pc.k_neighbors},
                       {"codebook_size", pc.codebook_size},
                       {"d", pc.d},
                       {"point_hidden", pc.point_hidden},
                       {"local_feat", pc.local_feat}};
  j["n_pos"] = n_pos;
  return j;
}

namespace {

void write_named(io::ContainerWriter& w, const NamedParams<float>& params) {
  for (const auto& [name, p] : params) {
    std::vector<uint64_t> dims(p->val.shape.begin(), p->val.shape.end());
    w.add_f32(name, dims, p->val.v.data());
  }
}

void read_named(const std::unordered_map<std::string, const io::TensorRecord*>& by_name,
                NamedParams<float>& params, const std::string& context) {
  for (auto& [name, p] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing tensor " + name + " in " + context);
    const auto& rec = *it->second;
    if (rec.numel() != p->val.numel())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    std::copy(rec.f32.begin(), rec.f32.end(), p->val.v.begin());
  }
}

void write_meta(const std::string& path, const Json& meta) {
  std::ofstream out(path + ".json", std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write meta for " + path);
  out << meta.dump(2) << "\n";
}

Json read_meta(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("checkpoint: missing meta sidecar for " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const Backbone<float>& net,
                     const AdamW<float>* opt, const Json& extra_meta) {
  io::ContainerWriter w(path);
  NamedParams<float> trainable = net.trainable_params();
  write_named(w, trainable);
  write_named(w, net.target_params());
  if (opt) {
    auto& m1 = const_cast<AdamW<float>*>(opt)->moment1();
    auto& m2 = const_cast<AdamW<float>*>(opt)->moment2();
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      const auto& shape = trainable[i].second->val.shape;
      std::vector<uint64_t> dims(shape.begin(), shape.end());
      w.add_f32("opt.m." + trainable[i].first, dims, m1[i].v.data());
      w.add_f32("opt.v." + trainable[i].first, dims, m2[i].v.data());
    }
    const int64_t step = static_cast<int64_t>(opt->step_count());
    w.add_i64("opt.step", {1}, &step);
  }
  w.close();
  write_meta(path, extra_meta);
}

Json load_checkpoint(const std::string& path, Backbone<float>& net,
                     AdamW<float>* opt) {
  auto recs = io::read_container(path);
  std::unordered_map<std::string, const io::TensorRecord*> by_name;
  for (const auto& r : recs) by_name[r.name] = &r;

  NamedParams<float> trainable = net.trainable_params();
  read_named(by_name, trainable, path);
  NamedParams<float> target = net.target_params();
  read_named(by_name, target, path);
  if (opt) {
    auto& m1 = opt->moment1();
    auto& m2 = opt->moment2();
    if (m1.size() != trainable.size())
      throw std::runtime_error("checkpoint: optimizer state size mismatch");
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      auto im = by_name.find("opt.m." + trainable[i].first);
      auto iv = by_name.find("opt.v." + trainable[i].first);
      if (im == by_name.end() || iv == by_name.end())
        throw std::runtime_error("checkpoint: missing optimizer state for " +
                                 trainable[i].first);
      std::copy(im->second->f32.begin(), im->second->f32.end(), m1[i].v.begin());
      std::copy(iv->second->f32.begin(), iv->second->f32.end(), m2[i].v.begin());
    }
    auto is = by_name.find("opt.step");
    if (is == by_name.end())
      throw std::runtime_error("checkpoint: missing opt.step");
    opt->set_step_count(static_cast<std::size_t>(is->second->i64.at(0)));
  }
  return read_meta(path);
}

void save_params(const std::string& path, const NamedParams<float>& params,
                 const Json& extra_meta) {
  io::ContainerWriter w(path);
  write_named(w, params);
  w.close();
  write_meta(path, extra_meta);
}

Json load_params(const std::string& path, NamedParams<float>& params) {
  auto recs = io::read_container(path);
  std::unordered_map<std::string, const io::TensorRecord*> by_name;
  for (const auto& r : recs) by_name[r.name] = &r;
  read_named(by_name, params, path);
  return read_meta(path);
}

LoadedBackbone load_backbone(const std::string& path) {
  Json meta = [&] {
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("checkpoint: missing meta sidecar for " + path);
    Json j;
    in >> j;
    return j;
  }();
  LoadedBackbone out;
  const auto& b = meta.at("backbone");
  out.bc.d = b.at("d");
  out.bc.depth_enc = b.at("depth_enc");
  out.bc.depth_pred = b.at("depth_pred");
  out.bc.n_heads = b.at("n_heads");
  out.bc.ffn_mult = b.at("ffn_mult");
  const auto& c = meta.at("csi_patch");
  out.csi_cfg.t_p = c.at("t_p");
  out.csi_cfg.h_p = c.at("h_p");
  out.csi_cfg.w_p = c.at("w_p");
  out.csi_cfg.t = c.at("t");
  out.csi_cfg.h = c.at("h");
  out.csi_cfg.w = c.at("w");
  out.csi_cfg.d = c.at("d");
  const auto& p = meta.at("pc_tokenizer");
  out.pc_cfg.n_centers = p.at("n_centers");
  out.pc_cfg.k_neighbors = p.at("k_neighbors");
  out.pc_cfg.codebook_size = p.at("codebook_size");
  out.pc_cfg.d = p.at("d");
  out.pc_cfg.point_hidden = p.at("point_hidden");
  out.pc_cfg.local_feat = p.at("local_feat");
  out.n_pos = meta.at("n_pos");
  Rng rng(0);
  out.net = Backbone<float>(out.bc, out.csi_cfg, out.pc_cfg, out.n_pos, rng);
  out.meta = load_checkpoint(path, out.net, nullptr);
  return out;
}

}  // namespace wwm
