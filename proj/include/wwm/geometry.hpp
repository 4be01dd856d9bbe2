/**
 * @file geometry.hpp
 * @brief Procedural urban scenes: ground plane, axis-aligned box buildings,
 *        surface faces, segment/box intersection, trajectories.
 */
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wwm/rng.hpp"

namespace wwm {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(const Vec3& a, double s) {
  return {a[0] * s, a[1] * s, a[2] * s};
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
double norm(const Vec3& a);

struct Box {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};
  double gamma = 0.7;  // reflection coefficient of the walls

  bool contains(const Vec3& p, double margin = 0.0) const;
  bool degenerate() const;
};

/// Axis-aligned rectangular face: coordinate `axis` is fixed at `level`;
/// the other two axes span [lo_u,hi_u] x [lo_v,hi_v] (u,v = remaining axes
/// in ascending order). normal_sign gives the outward normal direction.
struct Face {
  int axis = 2;
  double level = 0.0;
  double lo_u = 0, hi_u = 0, lo_v = 0, hi_v = 0;
  int normal_sign = 1;
  double gamma = 0.7;
  int box_index = -1;  // -1 for the ground

  double area() const { return (hi_u - lo_u) * (hi_v - lo_v); }
  Vec3 point(double u, double v) const;
  bool contains_uv(double u, double v) const {
    return u >= lo_u && u <= hi_u && v >= lo_v && v <= hi_v;
  }
};

struct Scene {
  double area_half = 200.0;  // scene spans [-area_half, area_half]^2 in x,y
  std::vector<Box> buildings;
  Vec3 bs_pos{0, 0, 10.0};
  double bs_azimuth = 0.0;  // panel broadside, radians from +x
  double gamma_ground = 0.6;
};

/// True when the open segment (p,q) passes through the interior of the box.
/// Touching the surface at a point (a reflection endpoint) does not count.
bool segment_intersects_box(const Vec3& p, const Vec3& q, const Box& b,
                            double eps = 1e-9);

/// Any building blocks the open segment.
bool segment_blocked(const Vec3& p, const Vec3& q, const Scene& scene);

/// All reflective faces: ground first, then 4 walls + roof per building.
std::vector<Face> scene_faces(const Scene& scene);

struct SceneParams {
  std::size_t n_buildings = 12;
  double area_half = 200.0;
  double min_side = 10.0, max_side = 50.0;
  double min_height = 8.0, max_height = 40.0;
  double bs_height = 10.0;
  double gamma_wall = 0.7;
  double gamma_ground = 0.6;
  double clearance = 4.0;  // min gap between buildings
};

/// Deterministic in seed. Throws when a non-overlapping placement cannot be
/// found within the retry budget.
Scene build_scene(uint64_t seed, const SceneParams& params);

struct Trajectory {
  std::vector<Vec3> positions;  // global frame
  double speed_kmh = 0.0;
};

/// Straight line at constant speed; start point and heading drawn from rng,
/// resampled until every point is outside all buildings and inside the area.
/// Throws when no collision-free line is found within the retry budget.
Trajectory gen_trajectory(const Scene& scene, double speed_kmh, std::size_t t_steps,
                          double dt_s, Rng& rng, double ue_height = 1.5);

}  // namespace wwm
