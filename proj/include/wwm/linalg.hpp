/**
 * @file linalg.hpp
 * @brief Complex matrices and the dominant-singular-pair solver used by SGCS.
 */
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace wwm {

/// Dense row-major complex matrix.
struct CMat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> e;

  CMat() = default;
  CMat(std::size_t r, std::size_t c) : rows(r), cols(c), e(r * c) {}
  std::complex<double>& at(std::size_t i, std::size_t j) { return e[i * cols + j]; }
  const std::complex<double>& at(std::size_t i, std::size_t j) const {
    return e[i * cols + j];
  }
  bool finite() const;
  double frobenius_norm() const;
};

CMat cmat_mul(const CMat& a, const CMat& b);        // A*B
CMat cmat_herm(const CMat& a);                      // A^H
std::vector<std::complex<double>> cmat_matvec(const CMat& a,
                                              const std::vector<std::complex<double>>& x);

struct SingularPair {
  double sigma = 0.0;
  std::vector<std::complex<double>> v;  // unit right singular vector
  std::size_t iterations = 0;
};

/// Power iteration on M^H M. Deterministic e1 start with a seeded random
/// restart if the start vector is (numerically) orthogonal to the dominant
/// subspace. Stops when the Rayleigh-pair residual drops below tol (relative);
/// small spectral gaps consume more of the iteration budget. For a
/// near-degenerate top pair the result is some unit vector in the dominant
/// subspace. Throws on an all-zero matrix.
SingularPair dominant_right_singular_vector(const CMat& m, int max_iters = 2000,
                                            double tol = 1e-10);

}  // namespace wwm
