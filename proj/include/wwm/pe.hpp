/**
 * @file pe.hpp
 * @brief Fixed sinusoidal positional encodings (1D temporal, 3D grid).
 */
#pragma once

#include <array>
#include <cstddef>

#include "wwm/tensor.hpp"

namespace wwm {

/// Rows ordered time-major, then height, then width:
/// row index = (t*n_h + h)*n_w + w. Each axis owns a third of the embedding
/// (padded internally to a multiple of 6, then truncated to d).
TensorD sinusoidal_pe_3d(std::array<std::size_t, 3> grid, std::size_t d);

/// Standard interleaved sin/cos encoding over positions 0..n-1; d must be even.
TensorD sinusoidal_pe_1d(std::size_t n, std::size_t d);

}  // namespace wwm
