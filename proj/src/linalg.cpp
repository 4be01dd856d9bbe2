#include "wwm/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include "wwm/rng.hpp"

namespace wwm {

bool CMat::finite() const {
  for (const auto& z : e)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

double CMat::frobenius_norm() const {
  double s = 0;
  for (const auto& z : e) s += std::norm(z);
  return std::sqrt(s);
}

CMat cmat_mul(const CMat& a, const CMat& b) {
  if (a.cols != b.rows) throw std::runtime_error("cmat_mul: inner dim mismatch");
  CMat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t l = 0; l < a.cols; ++l) {
      const auto av = a.at(i, l);
      for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(l, j);
    }
  return c;
}

CMat cmat_herm(const CMat& a) {
  CMat c(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) c.at(j, i) = std::conj(a.at(i, j));
  return c;
}

std::vector<std::complex<double>> cmat_matvec(
    const CMat& a, const std::vector<std::complex<double>>& x) {
  if (x.size() != a.cols) throw std::runtime_error("cmat_matvec: size mismatch");
  std::vector<std::complex<double>> y(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::complex<double> s = 0;
    for (std::size_t j = 0; j < a.cols; ++j) s += a.at(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

namespace {

double vec_norm(const std::vector<std::complex<double>>& v) {
  double s = 0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

// y = M^H (M x) without forming the Gram matrix.
std::vector<std::complex<double>> gram_apply(const CMat& m,
                                             const std::vector<std::complex<double>>& x) {
  std::vector<std::complex<double>> mx(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::complex<double> s = 0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * x[j];
    mx[i] = s;
  }
  std::vector<std::complex<double>> y(m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) {
    std::complex<double> s = 0;
    for (std::size_t i = 0; i < m.rows; ++i) s += std::conj(m.at(i, j)) * mx[i];
    y[j] = s;
  }
  return y;
}

}  // namespace

SingularPair dominant_right_singular_vector(const CMat& m, int max_iters,
                                            double tol) {
  if (m.rows == 0 || m.cols == 0)
    throw std::runtime_error("dominant_right_singular_vector: empty matrix");
  const double fro = m.frobenius_norm();
  if (fro == 0.0)
    throw std::runtime_error("dominant_right_singular_vector: zero matrix");

  std::vector<std::complex<double>> v(m.cols, 0.0);
  v[0] = 1.0;
  SingularPair out;
  int restarts = 0;

  for (int it = 0; it < max_iters; ++it) {
    auto y = gram_apply(m, v);
    const double ny = vec_norm(y);
    if (ny < 1e-300) {
      // start vector lies in the null space; restart from a seeded random draw
      if (++restarts > 4)
        throw std::runtime_error("dominant_right_singular_vector: stalled");
      Rng rng(0x5eedULL + restarts);
      for (auto& z : v) z = {rng.normal(), rng.normal()};
      const double nv = vec_norm(v);
      for (auto& z : v) z /= nv;
      continue;
    }
    // residual of the Rayleigh pair (lambda, v): ||y - lambda v||, v unit
    std::complex<double> lam = 0;
    for (std::size_t j = 0; j < m.cols; ++j) lam += std::conj(v[j]) * y[j];
    const double res2 = std::max(0.0, ny * ny - std::norm(lam));
    for (std::size_t j = 0; j < m.cols; ++j) v[j] = y[j] / ny;
    out.iterations = static_cast<std::size_t>(it + 1);
    if (std::sqrt(res2) <= tol * ny) break;
  }

  // sigma from the final vector
  std::vector<std::complex<double>> mv(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::complex<double> s = 0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * v[j];
    mv[i] = s;
  }
  out.sigma = vec_norm(mv);
  out.v = std::move(v);
  return out;
}

}  // namespace wwm
