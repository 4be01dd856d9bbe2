#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wwm/jepa.hpp"

namespace wwm {

const char* strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kFine: return "fine";
    case MaskStrategy::kCoarse: return "coarse";
    case MaskStrategy::kTrajectory: return "trajectory";
  }
  return "?";
}

namespace {

std::size_t rounded_extent(double frac, std::size_t n) {
  const auto e = static_cast<std::size_t>(std::lround(frac * static_cast<double>(n)));
  return std::max<std::size_t>(1, std::min(e, n));
}

// Union of `blocks` random 3D blocks over the CSI grid; every non-CSI token
// stays visible.
MaskPlan block_mask(const CsiGrid& grid, const Segments& seg, std::size_t blocks,
                    double t_frac, double s_frac, MaskStrategy tag, Rng& rng) {
  if (seg.csi != grid.tokens())
    throw std::runtime_error("mask: CSI segment does not match the patch grid");
  const std::size_t et = rounded_extent(t_frac, grid.n_t);
  const std::size_t eh = rounded_extent(s_frac, grid.n_h);
  const std::size_t ew = rounded_extent(s_frac, grid.n_w);
  std::vector<char> masked(grid.tokens(), 0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t t0 = rng.below(grid.n_t - et + 1);
    const std::size_t h0 = rng.below(grid.n_h - eh + 1);
    const std::size_t w0 = rng.below(grid.n_w - ew + 1);
    for (std::size_t t = t0; t < t0 + et; ++t)
      for (std::size_t h = h0; h < h0 + eh; ++h)
        for (std::size_t w = w0; w < w0 + ew; ++w)
          masked[(t * grid.n_h + h) * grid.n_w + w] = 1;
  }
  MaskPlan plan;
  plan.strategy = tag;
  for (std::size_t i = 0; i < grid.tokens(); ++i)
    (masked[i] ? plan.pred_idx : plan.enc_idx).push_back(i);
  for (std::size_t i = seg.csi; i < seg.total(); ++i) plan.enc_idx.push_back(i);
  return plan;
}

}  // namespace

MaskPlan fine_mask(const CsiGrid& grid, const Segments& seg, const MaskParams& mp,
                   Rng& rng) {
  return block_mask(grid, seg, mp.fine_blocks, mp.fine_temporal_frac,
                    mp.fine_spatial_frac, MaskStrategy::kFine, rng);
}

MaskPlan coarse_mask(const CsiGrid& grid, const Segments& seg, const MaskParams& mp,
                     Rng& rng) {
  return block_mask(grid, seg, mp.coarse_blocks, mp.coarse_temporal_frac,
                    mp.coarse_spatial_frac, MaskStrategy::kCoarse, rng);
}

MaskPlan trajectory_mask(const Segments& seg) {
  if (seg.pos == 0) throw std::runtime_error("trajectory_mask: empty POS segment");
  MaskPlan plan;
  plan.strategy = MaskStrategy::kTrajectory;
  for (std::size_t i = 0; i < seg.csi + seg.pc; ++i) plan.enc_idx.push_back(i);
  for (std::size_t i = seg.csi + seg.pc; i < seg.total(); ++i)
    plan.pred_idx.push_back(i);
  return plan;
}

MaskStrategy sample_strategy(Rng& rng, const std::array<double, 3>& weights) {
  const double total = weights[0] + weights[1] + weights[2];
  if (total <= 0) throw std::runtime_error("sample_strategy: weights sum to zero");
  const double u = rng.uniform() * total;
  if (u < weights[0]) return MaskStrategy::kFine;
  if (u < weights[0] + weights[1]) return MaskStrategy::kCoarse;
  return MaskStrategy::kTrajectory;
}

MaskPlan make_mask_plan(MaskStrategy s, const CsiGrid& grid, const Segments& seg,
                        const MaskParams& mp, Rng& rng) {
  switch (s) {
    case MaskStrategy::kFine: return fine_mask(grid, seg, mp, rng);
    case MaskStrategy::kCoarse: return coarse_mask(grid, seg, mp, rng);
    case MaskStrategy::kTrajectory: return trajectory_mask(seg);
  }
  throw std::runtime_error("make_mask_plan: unknown strategy");
}

}  // namespace wwm
