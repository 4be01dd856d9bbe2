/**
 * @file chan_synth.hpp
 * @brief Multipath channel synthesis over procedural scenes.
 *
 * LOS plus first-order image-method reflections off building faces and the
 * ground. Per-path complex gains follow free-space attenuation scaled by the
 * face reflection coefficient; frequency responses combine planar-array
 * steering vectors at both ends.
 */
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "wwm/geometry.hpp"
#include "wwm/linalg.hpp"
#include "wwm/tensor.hpp"

namespace wwm {

inline constexpr double kSpeedOfLight = 299792458.0;

struct PanelConfig {
  std::size_t n_h = 4, n_v = 4, n_pol = 2;
  std::size_t ports() const { return n_h * n_v * n_pol; }
};

struct SimConfig {
  double f_c = 2.6e9;
  double delta_f = 15e3;
  std::size_t f_subcarriers = 96;  // F
  std::size_t f_sb = 12;           // subcarriers per subband
  std::size_t n_sb = 8;            // subbands
  double delta_t = 5e-3;
  std::size_t t_steps = 16;
  PanelConfig bs_panel{4, 4, 2};
  PanelConfig ue_panel{2, 1, 2};
  double d_ant = 0.5;  // wavelengths
  double u6g_f_c = 6.62505e9;

  std::size_t n_t() const { return bs_panel.ports(); }
  std::size_t n_r() const { return ue_panel.ports(); }
  std::size_t n_r_eff() const { return n_r() * n_sb; }
  void validate() const;  // F = F_sb * N_sb etc.
};

enum class PathKind : uint8_t { kLos = 0, kReflection = 1 };

struct PropPath {
  PathKind kind = PathKind::kLos;
  double delay_s = 0.0;
  std::complex<double> gain{0.0, 0.0};
  double dep_az = 0.0, dep_el = 0.0;  // departure at the BS
  double arr_az = 0.0, arr_el = 0.0;  // arrival at the UE (toward last bounce)
  int bounces = 0;
  double total_length = 0.0;
};

/// LOS when unblocked, plus one image-method reflection per visible face.
/// An empty list means the link is fully blocked.
std::vector<PropPath> trace_paths(const Scene& scene, const Vec3& bs_pos,
                                  const Vec3& ue_pos, double f_c);

/// Steering vector of a planar panel toward (az, el); ports ordered
/// polarization-major, then vertical, then horizontal. Second-polarization
/// ports flip sign once per bounce.
std::vector<std::complex<double>> steering_vector(const PanelConfig& panel,
                                                  double panel_azimuth,
                                                  double az, double el,
                                                  double d_ant, int bounces);

/// Per-subcarrier responses H_k in C^{N_r x N_t}, k = 1..F, with
/// f_k = f_c + (k - (F+1)/2) df. The Doppler term rotates each path by
/// exp(j 2 pi f_D t) with f_D from the velocity projection on the departure
/// direction. Returns empty matrices (flagged by all_zero) when paths is
/// empty.
struct FreqResponse {
  std::vector<CMat> h;  // F entries
  bool all_zero = false;
};
FreqResponse paths_to_frequency_response(const std::vector<PropPath>& paths,
                                         const SimConfig& sim, double carrier_hz,
                                         double bs_azimuth,
                                         const Vec3& ue_velocity,
                                         double time_s = 0.0);

/// (T * F matrices of N_r x N_t) -> real tensor (2, T, N_t, N_r*N_sb).
/// Subband value = arithmetic mean of its F_sb consecutive subcarriers; the
/// W axis is UE-antenna-major, subband-minor.
TensorD subband_reduce(const std::vector<std::vector<CMat>>& h_per_step,
                       const SimConfig& sim);

/// sign(x) * log(1 + |x|/eps), elementwise.
double signed_log(double x, double eps = 1e-7);
void signed_log_inplace(TensorD& t, double eps = 1e-7);

struct NormStats {
  double mean = 0.0;
  double std_dev = 1.0;
};

/// Mean/variance over every element of the given tensors.
NormStats compute_norm_stats(const std::vector<const TensorD*>& tensors);
void standardize_inplace(TensorD& t, const NormStats& s);
void destandardize_inplace(TensorD& t, const NormStats& s);

/// Area-weighted uniform sampling over faces. Ground points that fall under a
/// building footprint are redrawn on the same face.
std::vector<Vec3> sample_point_cloud(const std::vector<Face>& faces,
                                     std::size_t n_points, Rng& rng,
                                     const Scene* reject_under = nullptr);

/// One synthesized training example, all values still in the global frame.
struct RawSample {
  Trajectory trajectory;
  TensorD csi;                      // (2,T,N_t,N_r') after subband reduction
  std::vector<CMat> raw_subband;    // T entries of N_t x N_r' at f_c
  CMat u6g_last;                    // N_t x N_r' at the U6G carrier, last step
  bool los_last = false;
  double speed_kmh = 0.0;
};

/// Traces per-timestep and keeps the subband-level complex channel for label
/// generation. Fully blocked samples (any all-zero step) are discarded and
/// redrawn with a fresh trajectory. Deterministic in (scene, seed).
RawSample synthesize_sample(const Scene& scene, const SimConfig& sim,
                            double speed_kmh, Rng rng, double ue_height = 1.5);

}  // namespace wwm
