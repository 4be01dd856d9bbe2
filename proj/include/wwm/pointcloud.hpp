/**
 * @file pointcloud.hpp
 * @brief Farthest-point sampling and neighborhood grouping.
 */
#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace wwm {

using Point3f = std::array<float, 3>;

/// Greedy max-min selection. Deterministic given the start index; distance
/// ties resolve to the lowest point index. Throws when n_centers > points.
std::vector<std::size_t> farthest_point_sampling(const std::vector<Point3f>& points,
                                                 std::size_t n_centers,
                                                 std::size_t start_index = 0);

/// k nearest neighbors of each center (including the center itself), sorted
/// by distance then index. When fewer than k points exist the neighbor list
/// cycles (sampling with replacement).
std::vector<std::vector<std::size_t>> knn_groups(const std::vector<Point3f>& points,
                                                 const std::vector<std::size_t>& centers,
                                                 std::size_t k);

}  // namespace wwm
