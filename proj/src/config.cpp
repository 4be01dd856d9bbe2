#include "wwm/config.hpp"

#include <fstream>

namespace wwm {

CsiPatchConfig RunConfig::csi_patch() const {
  CsiPatchConfig c;
  c.t_p = patch_t;
  c.h_p = patch_h;
  c.w_p = patch_w;
  c.t = sim.t_steps;
  c.h = sim.n_t();
  c.w = sim.n_r_eff();
  c.d = backbone.d;
  return c;
}

Json render_config(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["sim"] = {{"f_c_hz", c.sim.f_c},
              {"delta_f_hz", c.sim.delta_f},
              {"subcarriers", c.sim.f_subcarriers},
              {"subcarriers_per_subband", c.sim.f_sb},
              {"subbands", c.sim.n_sb},
              {"delta_t_s", c.sim.delta_t},
              {"t_steps", c.sim.t_steps},
              {"bs_panel", {{"h", c.sim.bs_panel.n_h}, {"v", c.sim.bs_panel.n_v}, {"pol", c.sim.bs_panel.n_pol}}},
              {"ue_panel", {{"h", c.sim.ue_panel.n_h}, {"v", c.sim.ue_panel.n_v}, {"pol", c.sim.ue_panel.n_pol}}},
              {"d_ant_wavelengths", c.sim.d_ant},
              {"u6g_f_c_hz", c.sim.u6g_f_c}};
  j["scene"] = {{"n_buildings", c.scene.n_buildings},
                {"area_half_m", c.scene.area_half},
                {"min_side_m", c.scene.min_side},
                {"max_side_m", c.scene.max_side},
                {"min_height_m", c.scene.min_height},
                {"max_height_m", c.scene.max_height},
                {"bs_height_m", c.scene.bs_height},
                {"gamma_wall", c.scene.gamma_wall},
                {"gamma_ground", c.scene.gamma_ground},
                {"clearance_m", c.scene.clearance}};
  j["dataset"] = {{"n_scenes", c.dataset.n_scenes},
                  {"n_bs", c.dataset.n_bs},
                  {"speeds_kmh", c.dataset.speeds},
                  {"gen_speeds_kmh", c.dataset.gen_speeds},
                  {"n_ue", c.dataset.n_ue},
                  {"holdout_frac", c.dataset.holdout_frac},
                  {"pc_radius_m", c.dataset.pc_radius},
                  {"pc_raw_points", c.dataset.pc_raw_points},
                  {"scene_points", c.dataset.scene_points}};
  j["backbone"] = {{"d", c.backbone.d},
                   {"depth_enc", c.backbone.depth_enc},
                   {"depth_pred", c.backbone.depth_pred},
                   {"n_heads", c.backbone.n_heads},
                   {"ffn_mult", c.backbone.ffn_mult}};
  j["csi_patch"] = {{"t_p", c.patch_t}, {"h_p", c.patch_h}, {"w_p", c.patch_w}};
  j["pc_tokenizer"] = {{"n_centers", c.pc_tok.n_centers},
                       {"k_neighbors", c.pc_tok.k_neighbors},
                       {"codebook_size", c.pc_tok.codebook_size},
                       {"point_hidden", c.pc_tok.point_hidden},
                       {"local_feat", c.pc_tok.local_feat},
                       {"codebook_init", c.pc_tok.codebook_init}};
  j["pretrain"] = {{"batch", c.pretrain.batch},
                   {"epochs", c.pretrain.epochs},
                   {"warmup_epochs", c.pretrain.warmup_epochs},
                   {"lr_start", c.pretrain.lr_start},
                   {"lr_peak", c.pretrain.lr_peak},
                   {"lr_final", c.pretrain.lr_final},
                   {"weight_decay", c.pretrain.weight_decay},
                   {"ema_momentum", c.pretrain.ema_momentum},
                   {"strategy_weights", c.pretrain.strategy_weights},
                   {"tau_start", c.pretrain.tau_start},
                   {"tau_end", c.pretrain.tau_end},
                   {"max_samples", c.pretrain.max_samples},
                   {"checkpoint_every", c.pretrain.checkpoint_every},
                   {"mask",
                    {{"fine_blocks", c.pretrain.mask.fine_blocks},
                     {"fine_temporal_frac", c.pretrain.mask.fine_temporal_frac},
                     {"fine_spatial_frac", c.pretrain.mask.fine_spatial_frac},
                     {"coarse_blocks", c.pretrain.mask.coarse_blocks},
                     {"coarse_temporal_frac", c.pretrain.mask.coarse_temporal_frac},
                     {"coarse_spatial_frac", c.pretrain.mask.coarse_spatial_frac}}}};
  j["temporal"] = {{"t_ctx", c.temporal.t_ctx},
                   {"t_pred", c.temporal.t_pred},
                   {"decoder_depth", c.temporal.decoder_depth},
                   {"lr", c.temporal.lr},
                   {"weight_decay", c.temporal.weight_decay},
                   {"epochs", c.temporal.epochs},
                   {"batch", c.temporal.batch},
                   {"sgcs_power_iters", c.temporal.sgcs_power_iters}};
  j["compress"] = {{"reduction", c.compress.reduction},
                   {"bits", c.compress.bits},
                   {"mu", c.compress.mu},
                   {"decoder_depth", c.compress.decoder_depth},
                   {"lr", c.compress.lr},
                   {"weight_decay", c.compress.weight_decay},
                   {"epochs", c.compress.epochs},
                   {"batch", c.compress.batch},
                   {"alpha", c.compress.alpha},
                   {"beta", c.compress.beta},
                   {"eval_grid", c.compress_eval_grid}};
  j["beam"] = {{"k_beams", c.beam.k_beams},
               {"oversample_h", c.beam.oversample_h},
               {"lr", c.beam.lr},
               {"epochs", c.beam.epochs},
               {"batch", c.beam.batch}};
  j["loc"] = {{"lr", c.loc.lr}, {"epochs", c.loc.epochs}, {"batch", c.loc.batch}};
  j["freqpred"] = {{"subbands_total", c.freqpred.subbands_total},
                   {"subbands_visible", c.freqpred.subbands_visible},
                   {"decoder_depth", c.freqpred.decoder_depth},
                   {"lr_stage1", c.freqpred.lr_stage1},
                   {"lr_stage2", c.freqpred.lr_stage2},
                   {"epochs_stage1", c.freqpred.epochs_stage1},
                   {"epochs_stage2", c.freqpred.epochs_stage2},
                   {"batch", c.freqpred.batch}};
  return j;
}

Json default_config_json() { return render_config(RunConfig{}); }

namespace {

void check_unknown_keys(const Json& user, const Json& defaults,
                        const std::string& path) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.is_object() || !defaults.contains(it.key()))
      throw std::runtime_error("config: unknown key '" + key_path + "'");
    check_unknown_keys(it.value(), defaults.at(it.key()), key_path);
  }
}

Json merge_defaults(const Json& user, const Json& defaults) {
  if (!defaults.is_object() || !user.is_object()) return user;
  Json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it)
    out[it.key()] = merge_defaults(it.value(), defaults.at(it.key()));
  return out;
}

}  // namespace

RunConfig parse_config(const Json& user) {
  const Json defaults = default_config_json();
  check_unknown_keys(user, defaults, "");
  const Json j = merge_defaults(user, defaults);

  RunConfig c;
  c.seed = j.at("seed");
  const auto& s = j.at("sim");
  c.sim.f_c = s.at("f_c_hz");
  c.sim.delta_f = s.at("delta_f_hz");
  c.sim.f_subcarriers = s.at("subcarriers");
  c.sim.f_sb = s.at("subcarriers_per_subband");
  c.sim.n_sb = s.at("subbands");
  c.sim.delta_t = s.at("delta_t_s");
  c.sim.t_steps = s.at("t_steps");
  c.sim.bs_panel = {s.at("bs_panel").at("h"), s.at("bs_panel").at("v"),
                    s.at("bs_panel").at("pol")};
  c.sim.ue_panel = {s.at("ue_panel").at("h"), s.at("ue_panel").at("v"),
                    s.at("ue_panel").at("pol")};
  c.sim.d_ant = s.at("d_ant_wavelengths");
  c.sim.u6g_f_c = s.at("u6g_f_c_hz");
  c.sim.validate();

  const auto& sc = j.at("scene");
  c.scene.n_buildings = sc.at("n_buildings");
  c.scene.area_half = sc.at("area_half_m");
  c.scene.min_side = sc.at("min_side_m");
  c.scene.max_side = sc.at("max_side_m");
  c.scene.min_height = sc.at("min_height_m");
  c.scene.max_height = sc.at("max_height_m");
  c.scene.bs_height = sc.at("bs_height_m");
  c.scene.gamma_wall = sc.at("gamma_wall");
  c.scene.gamma_ground = sc.at("gamma_ground");
  c.scene.clearance = sc.at("clearance_m");

  const auto& d = j.at("dataset");
  c.dataset.n_scenes = d.at("n_scenes");
  c.dataset.n_bs = d.at("n_bs");
  c.dataset.speeds = d.at("speeds_kmh").get<std::vector<double>>();
  c.dataset.gen_speeds = d.at("gen_speeds_kmh").get<std::vector<double>>();
  c.dataset.n_ue = d.at("n_ue");
  c.dataset.holdout_frac = d.at("holdout_frac");
  c.dataset.pc_radius = d.at("pc_radius_m");
  c.dataset.pc_raw_points = d.at("pc_raw_points");
  c.dataset.scene_points = d.at("scene_points");

  const auto& b = j.at("backbone");
  c.backbone.d = b.at("d");
  c.backbone.depth_enc = b.at("depth_enc");
  c.backbone.depth_pred = b.at("depth_pred");
  c.backbone.n_heads = b.at("n_heads");
  c.backbone.ffn_mult = b.at("ffn_mult");
  c.backbone.validate();

  const auto& cp = j.at("csi_patch");
  c.patch_t = cp.at("t_p");
  c.patch_h = cp.at("h_p");
  c.patch_w = cp.at("w_p");

  const auto& pt = j.at("pc_tokenizer");
  c.pc_tok.n_centers = pt.at("n_centers");
  c.pc_tok.k_neighbors = pt.at("k_neighbors");
  c.pc_tok.codebook_size = pt.at("codebook_size");
  c.pc_tok.point_hidden = pt.at("point_hidden");
  c.pc_tok.local_feat = pt.at("local_feat");
  c.pc_tok.codebook_init = pt.at("codebook_init");
  c.pc_tok.d = c.backbone.d;

  const auto& p = j.at("pretrain");
  c.pretrain.batch = p.at("batch");
  c.pretrain.epochs = p.at("epochs");
  c.pretrain.warmup_epochs = p.at("warmup_epochs");
  c.pretrain.lr_start = p.at("lr_start");
  c.pretrain.lr_peak = p.at("lr_peak");
  c.pretrain.lr_final = p.at("lr_final");
  c.pretrain.weight_decay = p.at("weight_decay");
  c.pretrain.ema_momentum = p.at("ema_momentum");
  c.pretrain.strategy_weights = p.at("strategy_weights");
  c.pretrain.tau_start = p.at("tau_start");
  c.pretrain.tau_end = p.at("tau_end");
  c.pretrain.max_samples = p.at("max_samples");
  c.pretrain.checkpoint_every = p.at("checkpoint_every");
  c.pretrain.seed = c.seed;
  const auto& m = p.at("mask");
  c.pretrain.mask.fine_blocks = m.at("fine_blocks");
  c.pretrain.mask.fine_temporal_frac = m.at("fine_temporal_frac");
  c.pretrain.mask.fine_spatial_frac = m.at("fine_spatial_frac");
  c.pretrain.mask.coarse_blocks = m.at("coarse_blocks");
  c.pretrain.mask.coarse_temporal_frac = m.at("coarse_temporal_frac");
  c.pretrain.mask.coarse_spatial_frac = m.at("coarse_spatial_frac");
  if (c.pretrain.lr_start > c.pretrain.lr_peak)
    throw std::runtime_error("config: pretrain.lr_start must be <= lr_peak");
  if (static_cast<double>(c.pretrain.epochs) < c.pretrain.warmup_epochs)
    throw std::runtime_error("config: pretrain.epochs must cover warmup_epochs");

  const auto& t = j.at("temporal");
  c.temporal.t_ctx = t.at("t_ctx");
  c.temporal.t_pred = t.at("t_pred");
  c.temporal.decoder_depth = t.at("decoder_depth");
  c.temporal.lr = t.at("lr");
  c.temporal.weight_decay = t.at("weight_decay");
  c.temporal.epochs = t.at("epochs");
  c.temporal.batch = t.at("batch");
  c.temporal.sgcs_power_iters = t.at("sgcs_power_iters");
  c.temporal.n_r = c.sim.n_r();
  c.temporal.n_sb = c.sim.n_sb;
  if (c.temporal.t_ctx + c.temporal.t_pred != c.sim.t_steps)
    throw std::runtime_error("config: temporal.t_ctx + t_pred must equal sim.t_steps");

  const auto& cm = j.at("compress");
  c.compress.reduction = cm.at("reduction");
  c.compress.bits = cm.at("bits");
  c.compress.mu = cm.at("mu");
  c.compress.decoder_depth = cm.at("decoder_depth");
  c.compress.lr = cm.at("lr");
  c.compress.weight_decay = cm.at("weight_decay");
  c.compress.epochs = cm.at("epochs");
  c.compress.batch = cm.at("batch");
  c.compress.alpha = cm.at("alpha");
  c.compress.beta = cm.at("beta");
  c.compress.n_r = c.sim.n_r();
  c.compress.n_sb = c.sim.n_sb;
  c.compress_eval_grid.clear();
  for (const auto& e : cm.at("eval_grid"))
    c.compress_eval_grid.emplace_back(e.at(0), e.at(1));
  if (c.compress.bits == 0)
    throw std::runtime_error("config: compress.bits must be >= 1");

  const auto& bm = j.at("beam");
  c.beam.k_beams = bm.at("k_beams");
  c.beam.oversample_h = bm.at("oversample_h");
  c.beam.lr = bm.at("lr");
  c.beam.epochs = bm.at("epochs");
  c.beam.batch = bm.at("batch");

  const auto& lc = j.at("loc");
  c.loc.lr = lc.at("lr");
  c.loc.epochs = lc.at("epochs");
  c.loc.batch = lc.at("batch");

  const auto& f = j.at("freqpred");
  c.freqpred.subbands_total = f.at("subbands_total");
  c.freqpred.subbands_visible = f.at("subbands_visible");
  c.freqpred.decoder_depth = f.at("decoder_depth");
  c.freqpred.lr_stage1 = f.at("lr_stage1");
  c.freqpred.lr_stage2 = f.at("lr_stage2");
  c.freqpred.epochs_stage1 = f.at("epochs_stage1");
  c.freqpred.epochs_stage2 = f.at("epochs_stage2");
  c.freqpred.batch = f.at("batch");
  if (c.freqpred.subbands_visible >= c.freqpred.subbands_total)
    throw std::runtime_error("config: freqpred.subbands_visible must be < total");

  c.csi_patch().validate();
  return c;
}

RunConfig load_config_file(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: parse error: ") + e.what());
  }
  return parse_config(j);
}

void write_config_file(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << render_config(cfg).dump(2) << "\n";
}

}  // namespace wwm
