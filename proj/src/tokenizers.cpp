#include "wwm/tokenizers.hpp"

namespace wwm {

std::vector<std::size_t> csi_patch_indices(const CsiPatchConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> idx;
  idx.reserve(cfg.n_tokens() * cfg.tube_volume());
  const std::size_t T = cfg.t, H = cfg.h, W = cfg.w;
  for (std::size_t gt = 0; gt < cfg.grid_t(); ++gt)
    for (std::size_t gh = 0; gh < cfg.grid_h(); ++gh)
      for (std::size_t gw = 0; gw < cfg.grid_w(); ++gw)
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t tt = 0; tt < cfg.t_p; ++tt)
            for (std::size_t hh = 0; hh < cfg.h_p; ++hh)
              for (std::size_t ww = 0; ww < cfg.w_p; ++ww) {
                const std::size_t t = gt * cfg.t_p + tt;
                const std::size_t h = gh * cfg.h_p + hh;
                const std::size_t w = gw * cfg.w_p + ww;
                idx.push_back(((c * T + t) * H + h) * W + w);
              }
  return idx;
}

PcGroups build_pc_groups(const std::vector<Point3f>& points,
                         const PcTokenizerConfig& cfg, std::size_t fps_start) {
  auto centers = farthest_point_sampling(points, cfg.n_centers, fps_start);
  auto groups = knn_groups(points, centers, cfg.k_neighbors);
  PcGroups out;
  out.group_coords = TensorF({cfg.n_centers * cfg.k_neighbors, 3});
  out.center_xyz = TensorF({cfg.n_centers, 3});
  for (std::size_t c = 0; c < cfg.n_centers; ++c) {
    const Point3f& cp = points[centers[c]];
    for (int a = 0; a < 3; ++a) out.center_xyz.at(c, a) = cp[a];
    for (std::size_t j = 0; j < cfg.k_neighbors; ++j) {
      const Point3f& p = points[groups[c][j]];
      for (int a = 0; a < 3; ++a)
        out.group_coords.at(c * cfg.k_neighbors + j, a) = p[a] - cp[a];
    }
  }
  return out;
}

}  // namespace wwm
