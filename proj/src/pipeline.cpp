#include "wwm/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace wwm {

namespace {

constexpr uint64_t kSceneStream = 0x5C;
constexpr uint64_t kBsStream = 0xB5;
constexpr uint64_t kCloudStream = 0xCC;
constexpr uint64_t kSampleStream = 0x5A;
constexpr uint64_t kCropStream = 0xC0;

std::string scenario_filename(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scenario_%03zu.wwmd", id);
  return buf;
}

Scene scene_for(const RunConfig& cfg, std::size_t scene_id, std::size_t bs_idx) {
  const uint64_t scene_seed = Rng(cfg.seed).child(kSceneStream, scene_id).seed();
  Scene scene = build_scene(scene_seed, cfg.scene);
  if (bs_idx > 0) {
    // redraw the BS placement; the buildings stay fixed for the scene
    Rng rng = Rng(scene_seed).child(kBsStream, bs_idx);
    const int max_retries = 200;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= max_retries)
        throw std::runtime_error("scene_for: cannot place BS variant");
      const double margin = cfg.scene.area_half * 0.1;
      Vec3 pos{rng.uniform(-cfg.scene.area_half + margin, cfg.scene.area_half - margin),
               rng.uniform(-cfg.scene.area_half + margin, cfg.scene.area_half - margin),
               cfg.scene.bs_height};
      bool inside = false;
      for (const auto& b : scene.buildings)
        if (b.contains(pos, 1.0)) inside = true;
      if (!inside) {
        scene.bs_pos = pos;
        break;
      }
    }
    scene.bs_azimuth = rng.uniform(0.0, 6.28318530717958647692);
  }
  return scene;
}

struct StatsAccum {
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  void add(const TensorD& t) {
    for (double x : t.v) {
      sum += x;
      sumsq += x * x;
    }
    n += t.numel();
  }
  NormStats finalize() const {
    if (n == 0) throw std::runtime_error("synth: no training samples for stats");
    const double mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - mean * mean;
    if (var <= 1e-24) throw std::runtime_error("synth: degenerate std = 0");
    return {mean, std::sqrt(var)};
  }
};

// One raw sample -> signed-log csi (double) kept separate for the stats pass.
struct GeneratedSample {
  RawSample raw;
  TensorD csi_log;
};

GeneratedSample generate_one(const RunConfig& cfg, const Scene& scene,
                             double speed, uint64_t scenario_id, std::size_t i) {
  Rng rng = Rng(cfg.seed).child(kSampleStream, scenario_id, i);
  GeneratedSample g;
  g.raw = synthesize_sample(scene, cfg.sim, speed, rng);
  g.csi_log = g.raw.csi;
  signed_log_inplace(g.csi_log);
  return g;
}

std::vector<Point3f> crop_cloud(const std::vector<Vec3>& global_cloud,
                                const Vec3& center, const Vec3& bs_pos,
                                double radius, std::size_t raw_points, Rng rng) {
  std::vector<std::size_t> inside;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < global_cloud.size(); ++i) {
    const double dx = global_cloud[i][0] - center[0];
    const double dy = global_cloud[i][1] - center[1];
    if (dx * dx + dy * dy <= r2) inside.push_back(i);
  }
  if (inside.empty()) inside.push_back(0);
  std::vector<Point3f> crop(raw_points);
  if (inside.size() >= raw_points) {
    // uniform subsample without replacement (partial Fisher-Yates)
    for (std::size_t i = 0; i < raw_points; ++i) {
      const std::size_t j = i + rng.below(inside.size() - i);
      std::swap(inside[i], inside[j]);
      const Vec3& p = global_cloud[inside[i]];
      crop[i] = {static_cast<float>(p[0] - bs_pos[0]),
                 static_cast<float>(p[1] - bs_pos[1]),
                 static_cast<float>(p[2] - bs_pos[2])};
    }
  } else {
    for (std::size_t i = 0; i < raw_points; ++i) {
      const Vec3& p = global_cloud[inside[rng.below(inside.size())]];
      crop[i] = {static_cast<float>(p[0] - bs_pos[0]),
                 static_cast<float>(p[1] - bs_pos[1]),
                 static_cast<float>(p[2] - bs_pos[2])};
    }
  }
  return crop;
}

Sample assemble(const RunConfig& cfg, const GeneratedSample& g,
                const std::vector<Vec3>& cloud, const Vec3& bs_pos,
                const NormStats& stats, uint64_t scenario_id, std::size_t i) {
  Sample s;
  TensorD csi = g.csi_log;
  standardize_inplace(csi, stats);
  s.csi = csi.cast<float>();

  const auto& traj = g.raw.trajectory.positions;
  const Vec3 mid = traj[traj.size() / 2];
  s.pc = crop_cloud(cloud, mid, bs_pos, cfg.dataset.pc_radius,
                    cfg.dataset.pc_raw_points,
                    Rng(cfg.seed).child(kCropStream, scenario_id, i));
  s.traj = TensorF({traj.size(), 3});
  for (std::size_t t = 0; t < traj.size(); ++t)
    for (int a = 0; a < 3; ++a)
      s.traj.at(t, a) = static_cast<float>(traj[t][a] - bs_pos[a]);
  s.pos2d = {static_cast<float>(traj.back()[0] - bs_pos[0]),
             static_cast<float>(traj.back()[1] - bs_pos[1])};

  const std::size_t T = cfg.sim.t_steps, nt = cfg.sim.n_t(), w = cfg.sim.n_r_eff();
  s.raw = TensorF({T, nt, w, 2});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t tx = 0; tx < nt; ++tx)
      for (std::size_t wi = 0; wi < w; ++wi) {
        const auto z = g.raw.raw_subband[t].at(tx, wi);
        s.raw.v[((t * nt + tx) * w + wi) * 2] = static_cast<float>(z.real());
        s.raw.v[((t * nt + tx) * w + wi) * 2 + 1] = static_cast<float>(z.imag());
      }
  s.u6g = TensorF({nt, w, 2});
  for (std::size_t tx = 0; tx < nt; ++tx)
    for (std::size_t wi = 0; wi < w; ++wi) {
      const auto z = g.raw.u6g_last.at(tx, wi);
      s.u6g.v[(tx * w + wi) * 2] = static_cast<float>(z.real());
      s.u6g.v[(tx * w + wi) * 2 + 1] = static_cast<float>(z.imag());
    }
  s.los = g.raw.los_last;
  return s;
}

}  // namespace

std::vector<ScenarioSpec> scenario_matrix(const RunConfig& cfg) {
  std::vector<ScenarioSpec> specs;
  std::size_t id = 0;
  auto add = [&](std::size_t scene, std::size_t bs, double speed,
                 const std::string& split) {
    ScenarioSpec sp;
    sp.id = id;
    sp.scene = scene;
    sp.bs = bs;
    sp.speed_kmh = speed;
    sp.split = split;
    sp.file = scenario_filename(id);
    sp.n_samples = cfg.dataset.n_ue;
    const double train_frac = 1.0 - cfg.dataset.holdout_frac;
    sp.n_train = split == "pretrain"
                     ? static_cast<std::size_t>(train_frac * cfg.dataset.n_ue + 0.5)
                     : 0;
    specs.push_back(sp);
    ++id;
  };
  for (std::size_t scene = 0; scene < cfg.dataset.n_scenes; ++scene)
    for (std::size_t bs = 0; bs < cfg.dataset.n_bs; ++bs)
      for (double speed : cfg.dataset.speeds) add(scene, bs, speed, "pretrain");
  for (double speed : cfg.dataset.gen_speeds) add(0, 0, speed, "velocity-gen");
  // the city-generalization scene is withheld from pretraining entirely
  for (double speed : cfg.dataset.speeds)
    add(cfg.dataset.n_scenes, 0, speed, "city-gen");
  return specs;
}

void run_synth(const RunConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto specs = scenario_matrix(cfg);

  // pass 1: standardization statistics over the training portion of the
  // pretraining split (signed-log domain)
  StatsAccum accum;
  for (const auto& sp : specs) {
    if (sp.split != "pretrain") continue;
    Scene scene = scene_for(cfg, sp.scene, sp.bs);
    for (std::size_t i = 0; i < sp.n_train; ++i)
      accum.add(generate_one(cfg, scene, sp.speed_kmh, sp.id, i).csi_log);
  }
  const NormStats stats = accum.finalize();

  // pass 2: regenerate (same seeds), standardize with the shared stats, write
  Json scen_json = Json::array();
  for (const auto& sp : specs) {
    Scene scene = scene_for(cfg, sp.scene, sp.bs);
    const uint64_t scene_seed = Rng(cfg.seed).child(kSceneStream, sp.scene).seed();
    Rng cloud_rng = Rng(scene_seed).child(kCloudStream);
    auto cloud =
        sample_point_cloud(scene_faces(scene), cfg.dataset.scene_points, cloud_rng,
                           &scene);
    std::vector<Sample> samples;
    samples.reserve(sp.n_samples);
    for (std::size_t i = 0; i < sp.n_samples; ++i) {
      auto g = generate_one(cfg, scene, sp.speed_kmh, sp.id, i);
      samples.push_back(assemble(cfg, g, cloud, scene.bs_pos, stats, sp.id, i));
    }
    write_scenario_file(out_dir + "/" + sp.file, samples);
    scen_json.push_back({{"id", sp.id},
                         {"scene", sp.scene},
                         {"bs", sp.bs},
                         {"speed_kmh", sp.speed_kmh},
                         {"split", sp.split},
                         {"file", sp.file},
                         {"n_samples", sp.n_samples},
                         {"n_train", sp.n_train},
                         {"scene_seed", scene_seed}});
  }

  Json manifest;
  manifest["format"] = "wwm-dataset";
  manifest["version"] = 1;
  manifest["seed"] = cfg.seed;
  manifest["norm_stats"] = {{"mean", stats.mean}, {"std", stats.std_dev}};
  manifest["subband_aggregation"] = "mean-of-consecutive-subcarriers";
  manifest["w_axis_order"] = "ue-antenna-major";
  manifest["labels_frame"] = "bs-centered";
  manifest["scenarios"] = scen_json;
  manifest["effective_config"] = render_config(cfg);
  std::ofstream mf(out_dir + "/manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("synth: cannot write manifest");
}

DatasetIndex load_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("dataset: missing manifest in " + dir);
  Json manifest;
  in >> manifest;
  DatasetIndex idx;
  idx.dir = dir;
  idx.cfg = parse_config(manifest.at("effective_config"));
  idx.stats.mean = manifest.at("norm_stats").at("mean");
  idx.stats.std_dev = manifest.at("norm_stats").at("std");
  for (const auto& s : manifest.at("scenarios")) {
    ScenarioSpec sp;
    sp.id = s.at("id");
    sp.scene = s.at("scene");
    sp.bs = s.at("bs");
    sp.speed_kmh = s.at("speed_kmh");
    sp.split = s.at("split");
    sp.file = s.at("file");
    sp.n_samples = s.at("n_samples");
    sp.n_train = s.at("n_train");
    idx.scenarios.push_back(sp);
  }
  return idx;
}

PretrainData load_pretrain_split(const DatasetIndex& idx, std::size_t max_samples,
                                 const PcTokenizerConfig& pc_cfg) {
  std::vector<std::vector<Sample>> per_scenario;
  for (const auto& sp : idx.scenarios) {
    if (sp.split != "pretrain") continue;
    auto all = read_scenario_file(idx.dir + "/" + sp.file);
    all.resize(std::min(all.size(), sp.n_train));
    per_scenario.push_back(std::move(all));
  }
  if (per_scenario.empty())
    throw std::runtime_error("dataset: no pretrain scenarios in manifest");

  PretrainData data;
  // round-robin interleave so a cap keeps scenario balance
  std::size_t offset = 0;
  bool added = true;
  while (added) {
    added = false;
    for (auto& sc : per_scenario) {
      if (offset < sc.size()) {
        if (max_samples && data.samples.size() >= max_samples) break;
        data.samples.push_back(std::move(sc[offset]));
        added = true;
      }
    }
    if (max_samples && data.samples.size() >= max_samples) break;
    ++offset;
  }
  if (max_samples && data.samples.size() > max_samples)
    data.samples.resize(max_samples);
  data.build_groups(pc_cfg);
  return data;
}

SplitSamples load_task_split(const DatasetIndex& idx, const std::string& eval_split,
                             const PcTokenizerConfig& pc_cfg, std::size_t max_train,
                             std::size_t max_eval, const LoadOptions& opt) {
  SplitSamples out;
  // training samples from the pretrain split train portions, round robin
  std::vector<std::vector<Sample>> train_pools;
  for (const auto& sp : idx.scenarios) {
    if (sp.split != "pretrain") continue;
    auto all = read_scenario_file(idx.dir + "/" + sp.file, opt);
    // keep both portions; eval may also come from here
    train_pools.push_back(std::move(all));
  }
  if (train_pools.empty()) throw std::runtime_error("dataset: no pretrain data");

  std::vector<std::size_t> pool_train_counts;
  std::size_t sp_i = 0;
  for (const auto& sp : idx.scenarios) {
    if (sp.split != "pretrain") continue;
    pool_train_counts.push_back(sp.n_train);
    (void)sp_i;
  }

  // interleave train portions
  std::size_t offset = 0;
  bool added = true;
  while (added && (!max_train || out.train_idx.size() < max_train)) {
    added = false;
    for (std::size_t p = 0; p < train_pools.size(); ++p) {
      if (offset < pool_train_counts[p] && offset < train_pools[p].size()) {
        out.data.samples.push_back(train_pools[p][offset]);
        out.train_idx.push_back(out.data.samples.size() - 1);
        out.scenario_of.push_back(p);
        added = true;
        if (max_train && out.train_idx.size() >= max_train) break;
      }
    }
    ++offset;
  }

  // evaluation samples
  if (eval_split == "in-pattern") {
    offset = 0;
    added = true;
    while (added && (!max_eval || out.eval_idx.size() < max_eval)) {
      added = false;
      for (std::size_t p = 0; p < train_pools.size(); ++p) {
        const std::size_t i = pool_train_counts[p] + offset;
        if (i < train_pools[p].size()) {
          out.data.samples.push_back(train_pools[p][i]);
          out.eval_idx.push_back(out.data.samples.size() - 1);
          out.scenario_of.push_back(p);
          added = true;
          if (max_eval && out.eval_idx.size() >= max_eval) break;
        }
      }
      ++offset;
    }
  } else {
    std::vector<std::vector<Sample>> eval_pools;
    for (const auto& sp : idx.scenarios) {
      if (sp.split != eval_split) continue;
      eval_pools.push_back(read_scenario_file(idx.dir + "/" + sp.file, opt));
    }
    if (eval_pools.empty())
      throw std::runtime_error("dataset: no scenarios in split " + eval_split);
    offset = 0;
    added = true;
    while (added && (!max_eval || out.eval_idx.size() < max_eval)) {
      added = false;
      for (auto& pool : eval_pools) {
        if (offset < pool.size()) {
          out.data.samples.push_back(std::move(pool[offset]));
          out.eval_idx.push_back(out.data.samples.size() - 1);
          out.scenario_of.push_back(0);
          added = true;
          if (max_eval && out.eval_idx.size() >= max_eval) break;
        }
      }
      ++offset;
    }
  }
  out.data.build_groups(pc_cfg);
  return out;
}

}  // namespace wwm
