// Test-only oracle: full eigendecomposition of a Hermitian matrix by cyclic
// complex Jacobi rotations. Used to cross-check the power-iteration solver.
#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "wwm/linalg.hpp"

namespace testsupport {

struct HermEig {
  std::vector<double> values;  // unsorted, on the diagonal after sweeps
  wwm::CMat vectors;           // columns are eigenvectors
};

inline HermEig jacobi_hermitian_eig(wwm::CMat a, int max_sweeps = 60,
                                    double tol = 1e-28) {
  using cd = std::complex<double>;
  const std::size_t n = a.rows;
  if (a.cols != n) throw std::runtime_error("jacobi: square matrix required");
  wwm::CMat v(n, n);
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::norm(a.at(p, q));
    if (off < tol) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const cd b = a.at(p, q);
        const double ab = std::abs(b);
        if (ab == 0.0) continue;
        const double app = a.at(p, p).real();
        const double aqq = a.at(q, q).real();
        const cd phase = b / ab;  // e^{i phi}
        const double tau = (aqq - app) / (2.0 * ab);
        const double t =
            (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // J_pp=c, J_pq=s, J_qp=-s*conj(phase), J_qq=c*conj(phase)
        const cd jqp = -s * std::conj(phase);
        const cd jqq = c * std::conj(phase);
        // columns: A <- A*J
        for (std::size_t i = 0; i < n; ++i) {
          const cd aip = a.at(i, p), aiq = a.at(i, q);
          a.at(i, p) = aip * c + aiq * jqp;
          a.at(i, q) = aip * s + aiq * jqq;
        }
        // rows: A <- J^H * A
        for (std::size_t j = 0; j < n; ++j) {
          const cd apj = a.at(p, j), aqj = a.at(q, j);
          a.at(p, j) = c * apj + std::conj(jqp) * aqj;
          a.at(q, j) = s * apj + std::conj(jqq) * aqj;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const cd vip = v.at(i, p), viq = v.at(i, q);
          v.at(i, p) = vip * c + viq * jqp;
          v.at(i, q) = vip * s + viq * jqq;
        }
      }
  }

  HermEig out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a.at(i, i).real();
  out.vectors = std::move(v);
  return out;
}

// Dominant right singular vector of m via the Gram-matrix eigendecomposition.
inline std::pair<double, std::vector<std::complex<double>>> svd_top_oracle(
    const wwm::CMat& m) {
  wwm::CMat g = wwm::cmat_mul(wwm::cmat_herm(m), m);
  auto eig = jacobi_hermitian_eig(g);
  std::size_t best = 0;
  for (std::size_t i = 1; i < eig.values.size(); ++i)
    if (eig.values[i] > eig.values[best]) best = i;
  std::vector<std::complex<double>> v(m.cols);
  for (std::size_t i = 0; i < m.cols; ++i) v[i] = eig.vectors.at(i, best);
  double nv = 0;
  for (const auto& z : v) nv += std::norm(z);
  nv = std::sqrt(nv);
  for (auto& z : v) z /= nv;
  return {std::sqrt(std::max(0.0, eig.values[best])), v};
}

}  // namespace testsupport
