#include "wwm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wwm {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

bool Box::contains(const Vec3& p, double margin) const {
  for (int i = 0; i < 3; ++i)
    if (p[i] < lo[i] - margin || p[i] > hi[i] + margin) return false;
  return true;
}

bool Box::degenerate() const {
  return hi[0] <= lo[0] || hi[1] <= lo[1] || hi[2] <= lo[2];
}

Vec3 Face::point(double u, double v) const {
  Vec3 p;
  p[axis] = level;
  const int ua = axis == 0 ? 1 : 0;
  const int va = axis == 2 ? 1 : 2;
  p[ua] = u;
  p[va] = v;
  return p;
}

bool segment_intersects_box(const Vec3& p, const Vec3& q, const Box& b,
                            double eps) {
  // slab method on the parameter t in [0,1]
  double t0 = 0.0, t1 = 1.0;
  const Vec3 d = q - p;
  for (int i = 0; i < 3; ++i) {
    if (std::fabs(d[i]) < 1e-15) {
      if (p[i] < b.lo[i] || p[i] > b.hi[i]) return false;
      continue;
    }
    double a = (b.lo[i] - p[i]) / d[i];
    double c = (b.hi[i] - p[i]) / d[i];
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
    if (t0 > t1) return false;
  }
  // interior crossing requires non-degenerate overlap away from the endpoints
  return (t1 - t0) > eps && t1 > eps && t0 < 1.0 - eps;
}

bool segment_blocked(const Vec3& p, const Vec3& q, const Scene& scene) {
  for (const auto& b : scene.buildings)
    if (segment_intersects_box(p, q, b)) return true;
  return false;
}

std::vector<Face> scene_faces(const Scene& scene) {
  std::vector<Face> faces;
  Face ground;
  ground.axis = 2;
  ground.level = 0.0;
  ground.lo_u = -scene.area_half;
  ground.hi_u = scene.area_half;
  ground.lo_v = -scene.area_half;
  ground.hi_v = scene.area_half;
  ground.normal_sign = 1;
  ground.gamma = scene.gamma_ground;
  ground.box_index = -1;
  faces.push_back(ground);

  for (std::size_t bi = 0; bi < scene.buildings.size(); ++bi) {
    const Box& b = scene.buildings[bi];
    for (int axis = 0; axis < 2; ++axis)
      for (int side = 0; side < 2; ++side) {
        Face f;
        f.axis = axis;
        f.level = side ? b.hi[axis] : b.lo[axis];
        f.normal_sign = side ? 1 : -1;
        const int ua = axis == 0 ? 1 : 0;
        f.lo_u = b.lo[ua];
        f.hi_u = b.hi[ua];
        f.lo_v = b.lo[2];
        f.hi_v = b.hi[2];
        f.gamma = b.gamma;
        f.box_index = static_cast<int>(bi);
        faces.push_back(f);
      }
    Face roof;
    roof.axis = 2;
    roof.level = b.hi[2];
    roof.normal_sign = 1;
    roof.lo_u = b.lo[0];
    roof.hi_u = b.hi[0];
    roof.lo_v = b.lo[1];
    roof.hi_v = b.hi[1];
    roof.gamma = b.gamma;
    roof.box_index = static_cast<int>(bi);
    faces.push_back(roof);
  }
  return faces;
}

Scene build_scene(uint64_t seed, const SceneParams& params) {
  Rng rng(seed);
  Scene scene;
  scene.area_half = params.area_half;
  scene.gamma_ground = params.gamma_ground;

  const int max_retries = 200;
  for (std::size_t n = 0; n < params.n_buildings; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      const double w = rng.uniform(params.min_side, params.max_side);
      const double l = rng.uniform(params.min_side, params.max_side);
      const double h = rng.uniform(params.min_height, params.max_height);
      const double margin = std::max(w, l) / 2 + params.clearance;
      const double cx = rng.uniform(-params.area_half + margin, params.area_half - margin);
      const double cy = rng.uniform(-params.area_half + margin, params.area_half - margin);
      Box b;
      b.lo = {cx - w / 2, cy - l / 2, 0.0};
      b.hi = {cx + w / 2, cy + l / 2, h};
      b.gamma = params.gamma_wall;
      bool overlap = false;
      for (const auto& other : scene.buildings) {
        const bool sep = b.hi[0] + params.clearance < other.lo[0] ||
                         other.hi[0] + params.clearance < b.lo[0] ||
                         b.hi[1] + params.clearance < other.lo[1] ||
                         other.hi[1] + params.clearance < b.lo[1];
        if (!sep) {
          overlap = true;
          break;
        }
      }
      if (!overlap) {
        scene.buildings.push_back(b);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("build_scene: could not place building " +
                               std::to_string(n) + " without overlap");
  }

  // BS in free space at the configured height
  for (int attempt = 0;; ++attempt) {
    if (attempt >= max_retries)
      throw std::runtime_error("build_scene: could not place BS in free space");
    const double margin = params.area_half * 0.1;
    Vec3 pos{rng.uniform(-params.area_half + margin, params.area_half - margin),
             rng.uniform(-params.area_half + margin, params.area_half - margin),
             params.bs_height};
    bool inside = false;
    for (const auto& b : scene.buildings)
      if (b.contains(pos, 1.0)) inside = true;
    if (!inside) {
      scene.bs_pos = pos;
      break;
    }
  }
  scene.bs_azimuth = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  return scene;
}

Trajectory gen_trajectory(const Scene& scene, double speed_kmh, std::size_t t_steps,
                          double dt_s, Rng& rng, double ue_height) {
  if (speed_kmh <= 0) throw std::runtime_error("gen_trajectory: speed must be > 0");
  const double step = speed_kmh / 3.6 * dt_s;
  const int max_retries = 500;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    const double margin = 2.0 + step * static_cast<double>(t_steps);
    Vec3 start{rng.uniform(-scene.area_half + margin, scene.area_half - margin),
               rng.uniform(-scene.area_half + margin, scene.area_half - margin),
               ue_height};
    const double heading = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const Vec3 dir{std::cos(heading), std::sin(heading), 0.0};
    Trajectory traj;
    traj.speed_kmh = speed_kmh;
    traj.positions.reserve(t_steps);
    bool ok = true;
    for (std::size_t t = 0; t < t_steps && ok; ++t) {
      const Vec3 p = start + dir * (step * static_cast<double>(t));
      if (std::fabs(p[0]) > scene.area_half || std::fabs(p[1]) > scene.area_half)
        ok = false;
      for (const auto& b : scene.buildings)
        if (b.contains(p)) ok = false;
      traj.positions.push_back(p);
    }
    if (ok && traj.positions.size() == t_steps) return traj;
  }
  throw std::runtime_error("gen_trajectory: no collision-free line found");
}

}  // namespace wwm
