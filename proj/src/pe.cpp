#include "wwm/pe.hpp"

#include <cmath>
#include <stdexcept>

namespace wwm {

namespace {

// One axis block: interleaved sin/cos with geometric frequency ladder.
void fill_axis(double* dst, std::size_t pos, std::size_t d_axis) {
  const std::size_t n_freq = d_axis / 2;
  for (std::size_t i = 0; i < n_freq; ++i) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                               static_cast<double>(d_axis));
    dst[2 * i] = std::sin(pos * omega);
    dst[2 * i + 1] = std::cos(pos * omega);
  }
}

}  // namespace

TensorD sinusoidal_pe_3d(std::array<std::size_t, 3> grid, std::size_t d) {
  const std::size_t n = grid[0] * grid[1] * grid[2];
  if (n == 0 || d == 0) throw std::runtime_error("sinusoidal_pe_3d: empty");
  std::size_t d_pad = d;
  while (d_pad % 6) ++d_pad;
  const std::size_t d_axis = d_pad / 3;
  std::vector<double> row(d_pad);
  TensorD out({n, d});
  std::size_t r = 0;
  for (std::size_t t = 0; t < grid[0]; ++t)
    for (std::size_t h = 0; h < grid[1]; ++h)
      for (std::size_t w = 0; w < grid[2]; ++w, ++r) {
        fill_axis(row.data(), t, d_axis);
        fill_axis(row.data() + d_axis, h, d_axis);
        fill_axis(row.data() + 2 * d_axis, w, d_axis);
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = row[j];
      }
  return out;
}

TensorD sinusoidal_pe_1d(std::size_t n, std::size_t d) {
  if (d % 2) throw std::runtime_error("sinusoidal_pe_1d: d must be even");
  TensorD out({n, d});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double omega =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      out.at(p, 2 * i) = std::sin(p * omega);
      out.at(p, 2 * i + 1) = std::cos(p * omega);
    }
  return out;
}

}  // namespace wwm
