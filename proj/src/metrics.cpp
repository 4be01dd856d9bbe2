#include "wwm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace wwm {

SgcsResult sgcs(const std::vector<CMat>& h_pred, const std::vector<CMat>& h_true) {
  if (h_pred.size() != h_true.size())
    throw std::runtime_error("sgcs: subcarrier count mismatch");
  SgcsResult res;
  double acc = 0.0;
  for (std::size_t k = 0; k < h_pred.size(); ++k) {
    if (h_pred[k].frobenius_norm() == 0.0 || h_true[k].frobenius_norm() == 0.0) {
      ++res.skipped;
      continue;
    }
    auto vp = dominant_right_singular_vector(h_pred[k]);
    auto vt = dominant_right_singular_vector(h_true[k]);
    std::complex<double> inner = 0.0;
    for (std::size_t i = 0; i < vp.v.size(); ++i)
      inner += std::conj(vp.v[i]) * vt.v[i];
    acc += std::abs(inner);
    ++res.used;
  }
  if (res.used == 0) throw std::runtime_error("sgcs: all subcarriers were zero");
  res.value = acc / static_cast<double>(res.used);
  return res;
}

double nmse(const std::vector<float>& pred, const std::vector<float>& truth) {
  if (pred.size() != truth.size()) throw std::runtime_error("nmse: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - truth[i];
    num += d * d;
    den += static_cast<double>(truth[i]) * truth[i];
  }
  if (den == 0.0) throw std::runtime_error("nmse: zero-norm truth");
  return num / den;
}

std::vector<CMat> subband_matrices_block(const float* data, std::size_t t_pred,
                                         std::size_t h, std::size_t w,
                                         std::size_t t, std::size_t n_r,
                                         std::size_t n_sb, bool w_subband_major) {
  if (n_r * n_sb != w)
    throw std::runtime_error("subband_matrices: W != N_r * N_sb");
  if (t >= t_pred) throw std::runtime_error("subband_matrices: t out of range");
  const std::size_t plane = t_pred * h * w;
  std::vector<CMat> mats(n_sb, CMat(n_r, h));
  for (std::size_t sb = 0; sb < n_sb; ++sb)
    for (std::size_t r = 0; r < n_r; ++r) {
      const std::size_t wi = w_subband_major ? sb * n_r + r : r * n_sb + sb;
      for (std::size_t hh = 0; hh < h; ++hh) {
        const std::size_t base = (t * h + hh) * w + wi;
        mats[sb].at(r, hh) = {static_cast<double>(data[base]),
                              static_cast<double>(data[plane + base])};
      }
    }
  return mats;
}

std::vector<CMat> subband_matrices(const TensorF& csi, std::size_t t,
                                   std::size_t n_r, std::size_t n_sb,
                                   bool w_subband_major) {
  if (csi.ndim() != 4 || csi.shape[0] != 2)
    throw std::runtime_error("subband_matrices: expected (2,T,H,W)");
  return subband_matrices_block(csi.v.data(), csi.shape[1], csi.shape[2],
                                csi.shape[3], t, n_r, n_sb, w_subband_major);
}

}  // namespace wwm
