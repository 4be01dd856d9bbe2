#include "wwm/chan_synth.hpp"

#include <cmath>
#include <stdexcept>

namespace wwm {

namespace {
constexpr double kPi = 3.14159265358979323846;

void direction_angles(const Vec3& d, double& az, double& el) {
  az = std::atan2(d[1], d[0]);
  el = std::atan2(d[2], std::hypot(d[0], d[1]));
}
}  // namespace

void SimConfig::validate() const {
  if (f_subcarriers != f_sb * n_sb)
    throw std::runtime_error("SimConfig: F must equal F_sb * N_sb");
  if (f_subcarriers == 0 || t_steps == 0 || n_t() == 0 || n_r() == 0)
    throw std::runtime_error("SimConfig: all extents must be >= 1");
}

std::vector<PropPath> trace_paths(const Scene& scene, const Vec3& bs_pos,
                                  const Vec3& ue_pos, double f_c) {
  std::vector<PropPath> paths;
  const double lambda = kSpeedOfLight / f_c;

  auto make_path = [&](PathKind kind, double length, int bounces, double gamma,
                       const Vec3& dep_dir, const Vec3& arr_dir) {
    PropPath p;
    p.kind = kind;
    p.total_length = length;
    p.delay_s = length / kSpeedOfLight;
    p.bounces = bounces;
    const double mag =
        lambda / (4.0 * kPi * length) * std::pow(gamma, bounces);
    const double phase = -2.0 * kPi * length / lambda;
    p.gain = std::polar(mag, phase);
    direction_angles(dep_dir, p.dep_az, p.dep_el);
    direction_angles(arr_dir, p.arr_az, p.arr_el);
    return p;
  };

  // line of sight
  if (!segment_blocked(bs_pos, ue_pos, scene)) {
    const Vec3 d = ue_pos - bs_pos;
    const double len = norm(d);
    if (len > 0)
      paths.push_back(make_path(PathKind::kLos, len, 0, 1.0, d, bs_pos - ue_pos));
  }

  // first-order image-method reflections
  for (const Face& f : scene_faces(scene)) {
    const double side_bs = (bs_pos[f.axis] - f.level) * f.normal_sign;
    const double side_ue = (ue_pos[f.axis] - f.level) * f.normal_sign;
    if (side_bs <= 1e-9 || side_ue <= 1e-9) continue;  // must face the surface

    Vec3 image = bs_pos;
    image[f.axis] = 2.0 * f.level - bs_pos[f.axis];
    const double denom = ue_pos[f.axis] - image[f.axis];
    if (std::fabs(denom) < 1e-12) continue;
    const double t = (f.level - image[f.axis]) / denom;
    if (t <= 0.0 || t >= 1.0) continue;
    const Vec3 r = image + (ue_pos - image) * t;
    const int ua = f.axis == 0 ? 1 : 0;
    const int va = f.axis == 2 ? 1 : 2;
    if (!f.contains_uv(r[ua], r[va])) continue;
    if (segment_blocked(bs_pos, r, scene) || segment_blocked(r, ue_pos, scene))
      continue;

    const double length = norm(r - bs_pos) + norm(ue_pos - r);
    paths.push_back(make_path(PathKind::kReflection, length, 1, f.gamma,
                              r - bs_pos, r - ue_pos));
  }
  return paths;
}

std::vector<std::complex<double>> steering_vector(const PanelConfig& panel,
                                                  double panel_azimuth,
                                                  double az, double el,
                                                  double d_ant, int bounces) {
  const Vec3 u{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
               std::sin(el)};
  const Vec3 h_axis{-std::sin(panel_azimuth), std::cos(panel_azimuth), 0.0};
  const double uh = dot(u, h_axis);
  const double uv = u[2];
  std::vector<std::complex<double>> a(panel.ports());
  for (std::size_t p = 0; p < panel.n_pol; ++p) {
    const double pol_sign = (p == 1 && (bounces & 1)) ? -1.0 : 1.0;
    for (std::size_t iv = 0; iv < panel.n_v; ++iv)
      for (std::size_t ih = 0; ih < panel.n_h; ++ih) {
        const double phase = 2.0 * kPi * d_ant *
                             (static_cast<double>(ih) * uh +
                              static_cast<double>(iv) * uv);
        a[(p * panel.n_v + iv) * panel.n_h + ih] =
            std::polar(pol_sign, phase);
      }
  }
  return a;
}

FreqResponse paths_to_frequency_response(const std::vector<PropPath>& paths,
                                         const SimConfig& sim, double carrier_hz,
                                         double bs_azimuth,
                                         const Vec3& ue_velocity,
                                         double time_s) {
  const std::size_t F = sim.f_subcarriers;
  const std::size_t nr = sim.n_r(), nt = sim.n_t();
  FreqResponse out;
  out.h.assign(F, CMat(nr, nt));
  if (paths.empty()) {
    out.all_zero = true;
    return out;
  }
  for (const PropPath& p : paths) {
    const auto a_tx = steering_vector(sim.bs_panel, bs_azimuth, p.dep_az,
                                      p.dep_el, sim.d_ant, p.bounces);
    const auto a_rx = steering_vector(sim.ue_panel, 0.0, p.arr_az, p.arr_el,
                                      sim.d_ant, p.bounces);
    // Doppler from the velocity projection on the departure direction
    const Vec3 dep{std::cos(p.dep_el) * std::cos(p.dep_az),
                   std::cos(p.dep_el) * std::sin(p.dep_az),
                   std::sin(p.dep_el)};
    const double f_doppler = -carrier_hz / kSpeedOfLight * dot(ue_velocity, dep);
    const std::complex<double> rot =
        std::polar(1.0, 2.0 * kPi * f_doppler * time_s);
    for (std::size_t k = 0; k < F; ++k) {
      const double f_k = carrier_hz +
                         (static_cast<double>(k + 1) -
                          (static_cast<double>(F) + 1.0) / 2.0) *
                             sim.delta_f;
      const std::complex<double> g =
          p.gain * std::polar(1.0, -2.0 * kPi * f_k * p.delay_s) * rot;
      CMat& hk = out.h[k];
      for (std::size_t r = 0; r < nr; ++r) {
        const std::complex<double> gr = g * a_rx[r];
        for (std::size_t t = 0; t < nt; ++t)
          hk.at(r, t) += gr * std::conj(a_tx[t]);
      }
    }
  }
  return out;
}

TensorD subband_reduce(const std::vector<std::vector<CMat>>& h_per_step,
                       const SimConfig& sim) {
  if (sim.f_subcarriers % sim.f_sb)
    throw std::runtime_error("subband_reduce: F not divisible by F_sb");
  const std::size_t T = h_per_step.size();
  const std::size_t nt = sim.n_t(), nr = sim.n_r();
  const std::size_t w_dim = sim.n_r_eff();
  TensorD out({2, T, nt, w_dim});
  const double inv = 1.0 / static_cast<double>(sim.f_sb);
  for (std::size_t t = 0; t < T; ++t) {
    if (h_per_step[t].size() != sim.f_subcarriers)
      throw std::runtime_error("subband_reduce: subcarrier count mismatch");
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t sb = 0; sb < sim.n_sb; ++sb) {
        const std::size_t w = r * sim.n_sb + sb;  // UE-antenna-major
        for (std::size_t tx = 0; tx < nt; ++tx) {
          std::complex<double> acc = 0.0;
          for (std::size_t f = sb * sim.f_sb; f < (sb + 1) * sim.f_sb; ++f)
            acc += h_per_step[t][f].at(r, tx);
          acc *= inv;
          out.v[((0 * T + t) * nt + tx) * w_dim + w] = acc.real();
          out.v[((1 * T + t) * nt + tx) * w_dim + w] = acc.imag();
        }
      }
  }
  return out;
}

double signed_log(double x, double eps) {
  const double s = x >= 0 ? 1.0 : -1.0;
  return s * std::log1p(std::fabs(x) / eps);
}

void signed_log_inplace(TensorD& t, double eps) {
  for (auto& x : t.v) x = signed_log(x, eps);
}

NormStats compute_norm_stats(const std::vector<const TensorD*>& tensors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* t : tensors) {
    for (double x : t->v) sum += x;
    n += t->numel();
  }
  if (n == 0) throw std::runtime_error("compute_norm_stats: empty split");
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto* t : tensors)
    for (double x : t->v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  if (var <= 1e-24)
    throw std::runtime_error("compute_norm_stats: degenerate std = 0");
  return {mean, std::sqrt(var)};
}

void standardize_inplace(TensorD& t, const NormStats& s) {
  for (auto& x : t.v) x = (x - s.mean) / s.std_dev;
}

void destandardize_inplace(TensorD& t, const NormStats& s) {
  for (auto& x : t.v) x = x * s.std_dev + s.mean;
}

std::vector<Vec3> sample_point_cloud(const std::vector<Face>& faces,
                                     std::size_t n_points, Rng& rng,
                                     const Scene* reject_under) {
  if (faces.empty() || n_points == 0)
    throw std::runtime_error("sample_point_cloud: empty input");
  std::vector<double> cum;
  cum.reserve(faces.size());
  double total = 0.0;
  for (const auto& f : faces) {
    total += f.area();
    cum.push_back(total);
  }
  if (total <= 0) throw std::runtime_error("sample_point_cloud: zero area");

  std::vector<Vec3> pts;
  pts.reserve(n_points);
  while (pts.size() < n_points) {
    const double u = rng.uniform() * total;
    std::size_t fi = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (fi >= faces.size()) fi = faces.size() - 1;
    const Face& f = faces[fi];
    Vec3 p;
    bool ok = true;
    for (int attempt = 0; attempt < 100; ++attempt) {
      p = f.point(rng.uniform(f.lo_u, f.hi_u), rng.uniform(f.lo_v, f.hi_v));
      ok = true;
      if (reject_under && f.box_index < 0) {
        for (const auto& b : reject_under->buildings)
          if (p[0] >= b.lo[0] && p[0] <= b.hi[0] && p[1] >= b.lo[1] &&
              p[1] <= b.hi[1]) {
            ok = false;
            break;
          }
      }
      if (ok) break;
    }
    pts.push_back(p);
  }
  return pts;
}

RawSample synthesize_sample(const Scene& scene, const SimConfig& sim,
                            double speed_kmh, Rng rng, double ue_height) {
  sim.validate();
  const int max_retries = 64;
  for (int retry = 0; retry < max_retries; ++retry) {
    Rng traj_rng = rng.child(static_cast<uint64_t>(retry));
    Trajectory traj =
        gen_trajectory(scene, speed_kmh, sim.t_steps, sim.delta_t, traj_rng, ue_height);
    const Vec3 dir =
        traj.positions.size() > 1
            ? (traj.positions[1] - traj.positions[0]) * (1.0 / std::max(1e-12, norm(traj.positions[1] - traj.positions[0])))
            : Vec3{1, 0, 0};
    const Vec3 velocity = dir * (speed_kmh / 3.6);

    std::vector<std::vector<CMat>> h_steps;
    h_steps.reserve(sim.t_steps);
    bool blocked = false;
    std::vector<PropPath> last_paths;
    for (std::size_t t = 0; t < sim.t_steps; ++t) {
      auto paths = trace_paths(scene, scene.bs_pos, traj.positions[t], sim.f_c);
      auto resp = paths_to_frequency_response(paths, sim, sim.f_c,
                                              scene.bs_azimuth, velocity, 0.0);
      if (resp.all_zero) {
        blocked = true;
        break;
      }
      h_steps.push_back(std::move(resp.h));
      if (t + 1 == sim.t_steps) last_paths = std::move(paths);
    }
    if (blocked) continue;  // discard fully blocked samples, redraw

    RawSample s;
    s.trajectory = std::move(traj);
    s.speed_kmh = speed_kmh;
    s.csi = subband_reduce(h_steps, sim);

    // complex subband channel retained for task labels
    const std::size_t nt = sim.n_t(), nr = sim.n_r(), w_dim = sim.n_r_eff();
    s.raw_subband.assign(sim.t_steps, CMat(nt, w_dim));
    const double inv = 1.0 / static_cast<double>(sim.f_sb);
    for (std::size_t t = 0; t < sim.t_steps; ++t)
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t sb = 0; sb < sim.n_sb; ++sb)
          for (std::size_t tx = 0; tx < nt; ++tx) {
            std::complex<double> acc = 0.0;
            for (std::size_t f = sb * sim.f_sb; f < (sb + 1) * sim.f_sb; ++f)
              acc += h_steps[t][f].at(r, tx);
            s.raw_subband[t].at(tx, r * sim.n_sb + sb) = acc * inv;
          }

    // concurrent upper-6GHz channel from the same last-step geometry
    {
      auto u6g_paths = trace_paths(scene, scene.bs_pos,
                                   s.trajectory.positions.back(), sim.u6g_f_c);
      auto resp = paths_to_frequency_response(u6g_paths, sim, sim.u6g_f_c,
                                              scene.bs_azimuth, velocity, 0.0);
      if (resp.all_zero) continue;  // needs a usable label channel
      s.u6g_last = CMat(nt, w_dim);
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t sb = 0; sb < sim.n_sb; ++sb)
          for (std::size_t tx = 0; tx < nt; ++tx) {
            std::complex<double> acc = 0.0;
            for (std::size_t f = sb * sim.f_sb; f < (sb + 1) * sim.f_sb; ++f)
              acc += resp.h[f].at(r, tx);
            s.u6g_last.at(tx, r * sim.n_sb + sb) = acc * inv;
          }
      for (const auto& p : last_paths)
        if (p.kind == PathKind::kLos) s.los_last = true;
    }
    return s;
  }
  throw std::runtime_error("synthesize_sample: all retries fully blocked");
}

}  // namespace wwm
