/**
 * @file metrics.hpp
 * @brief Task metrics: SGCS over dominant right singular vectors, NMSE.
 */
#pragma once

#include <vector>

#include "wwm/linalg.hpp"
#include "wwm/tensor.hpp"

namespace wwm {

struct SgcsResult {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // subcarriers with a zero matrix on either side
};

/// Mean |v_hat^H v| over per-subcarrier dominant right singular vectors.
/// Zero matrices are skipped and flagged; throws if nothing is usable.
SgcsResult sgcs(const std::vector<CMat>& h_pred, const std::vector<CMat>& h_true);

/// ||pred - truth||^2 / ||truth||^2 over flat value arrays.
double nmse(const std::vector<float>& pred, const std::vector<float>& truth);

/// Reshape one timestep of a (2,T,H,W) real CSI tensor into per-subband
/// complex matrices (N_ue x N_bs). w_subband_major selects the task-level
/// layout where w = sb*n_r + r; the default container layout is
/// UE-antenna-major (w = r*n_sb + sb).
std::vector<CMat> subband_matrices(const TensorF& csi, std::size_t t,
                                   std::size_t n_r, std::size_t n_sb,
                                   bool w_subband_major = false);

/// Same, over an arbitrary (2,T_pred,H,W) block given as a flat float view.
std::vector<CMat> subband_matrices_block(const float* data, std::size_t t_pred,
                                         std::size_t h, std::size_t w,
                                         std::size_t t, std::size_t n_r,
                                         std::size_t n_sb,
                                         bool w_subband_major = false);

}  // namespace wwm
