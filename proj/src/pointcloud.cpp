#include "wwm/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wwm {

namespace {
inline float dist2(const Point3f& a, const Point3f& b) {
  const float dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}
}  // namespace

std::vector<std::size_t> farthest_point_sampling(const std::vector<Point3f>& points,
                                                 std::size_t n_centers,
                                                 std::size_t start_index) {
  const std::size_t m = points.size();
  if (m < n_centers)
    throw std::runtime_error("farthest_point_sampling: fewer points than centers");
  if (start_index >= m)
    throw std::runtime_error("farthest_point_sampling: start index out of range");

  std::vector<std::size_t> centers;
  centers.reserve(n_centers);
  std::vector<float> best(m, std::numeric_limits<float>::max());
  std::size_t current = start_index;
  for (std::size_t c = 0; c < n_centers; ++c) {
    centers.push_back(current);
    const Point3f& cp = points[current];
    std::size_t next = 0;
    float far = -1.0f;
    for (std::size_t i = 0; i < m; ++i) {
      const float d = dist2(points[i], cp);
      if (d < best[i]) best[i] = d;
      if (best[i] > far) {
        far = best[i];
        next = i;
      }
    }
    current = next;
  }
  return centers;
}

std::vector<std::vector<std::size_t>> knn_groups(const std::vector<Point3f>& points,
                                                 const std::vector<std::size_t>& centers,
                                                 std::size_t k) {
  const std::size_t m = points.size();
  if (m == 0 || k == 0) throw std::runtime_error("knn_groups: empty input");
  std::vector<std::vector<std::size_t>> groups(centers.size());
  std::vector<std::pair<float, std::size_t>> order(m);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const Point3f& cp = points[centers[c]];
    for (std::size_t i = 0; i < m; ++i) order[i] = {dist2(points[i], cp), i};
    const std::size_t take = std::min(k, m);
    std::partial_sort(order.begin(), order.begin() + take, order.end());
    auto& g = groups[c];
    g.reserve(k);
    for (std::size_t i = 0; i < k; ++i) g.push_back(order[i % take].second);
  }
  return groups;
}

}  // namespace wwm
