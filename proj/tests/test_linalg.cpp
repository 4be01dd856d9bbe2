#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>

#include "support/jacobi.hpp"
#include "wwm/linalg.hpp"
#include "wwm/rng.hpp"

using namespace wwm;
using cd = std::complex<double>;

namespace {

CMat random_cmat(std::size_t r, std::size_t c, Rng& rng) {
  CMat m(r, c);
  for (auto& z : m.e) z = {rng.normal(), rng.normal()};
  return m;
}

double inner_abs(const std::vector<cd>& a, const std::vector<cd>& b) {
  cd s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return std::abs(s);
}

}  // namespace

TEST_CASE("diagonal matrix: sigma1=3, v1=+-e1") {
  CMat m(2, 2);
  m.at(0, 0) = 3.0;
  m.at(1, 1) = 1.0;
  auto p = dominant_right_singular_vector(m);
  CHECK(p.sigma == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(p.v[0]) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(p.v[1]) < 1e-8);
}

TEST_CASE("zero matrix is rejected") {
  CMat m(3, 4);
  CHECK_THROWS(dominant_right_singular_vector(m));
}

TEST_CASE("complex scaling: same v1 up to phase, sigma scaled by |c|") {
  Rng rng(21);
  CMat m = random_cmat(4, 8, rng);
  const cd c{-1.3, 0.7};
  CMat mc = m;
  for (auto& z : mc.e) z *= c;
  auto p0 = dominant_right_singular_vector(m);
  auto p1 = dominant_right_singular_vector(mc);
  CHECK(p1.sigma == doctest::Approx(p0.sigma * std::abs(c)).epsilon(1e-9));
  CHECK(std::fabs(inner_abs(p0.v, p1.v) - 1.0) < 1e-8);
}

TEST_CASE("scaling invariance over random matrices") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    CMat m = random_cmat(3 + trial % 4, 5 + trial % 3, rng);
    const cd c{rng.normal(), rng.normal()};
    if (std::abs(c) < 1e-6) continue;
    CMat mc = m;
    for (auto& z : mc.e) z *= c;
    auto p0 = dominant_right_singular_vector(m);
    auto p1 = dominant_right_singular_vector(mc);
    CHECK(std::fabs(inner_abs(p0.v, p1.v) - 1.0) < 1e-8);
  }
}

TEST_CASE("random 4x8 vs Gram-matrix Jacobi oracle") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    CMat m = random_cmat(4, 8, rng);
    auto pi = dominant_right_singular_vector(m);
    auto [sigma_o, v_o] = testsupport::svd_top_oracle(m);
    CHECK(pi.sigma == doctest::Approx(sigma_o).epsilon(1e-8));
    CHECK(inner_abs(pi.v, v_o) > 1.0 - 1e-8);
  }
}

TEST_CASE("returned vector has unit norm and ||Mv|| = sigma") {
  Rng rng(77);
  CMat m = random_cmat(6, 5, rng);
  auto p = dominant_right_singular_vector(m);
  double nv = 0;
  for (const auto& z : p.v) nv += std::norm(z);
  CHECK(std::sqrt(nv) == doctest::Approx(1.0).epsilon(1e-12));
  auto mv = cmat_matvec(m, p.v);
  double nmv = 0;
  for (const auto& z : mv) nmv += std::norm(z);
  CHECK(std::sqrt(nmv) == doctest::Approx(p.sigma).epsilon(1e-10));
}

TEST_CASE("near-degenerate top pair converges into the top subspace") {
  // sigma1 ~ sigma2: accept any unit vector spanned by the top two
  CMat m(3, 3);
  m.at(0, 0) = 2.0;
  m.at(1, 1) = cd{2.0 - 1e-13, 0.0};
  m.at(2, 2) = 0.5;
  auto p = dominant_right_singular_vector(m);
  const double in_top = std::norm(p.v[0]) + std::norm(p.v[1]);
  CHECK(in_top == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("start vector orthogonal to the dominant direction still converges") {
  // e1 is a null-space direction here; the random restart must kick in
  CMat m(2, 2);
  m.at(0, 1) = 4.0;  // columns: col0 zero, col1 norm 4 -> v1 = e2
  auto p = dominant_right_singular_vector(m);
  CHECK(p.sigma == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(std::abs(p.v[1]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("jacobi oracle self-check on a known hermitian matrix") {
  CMat a(2, 2);
  a.at(0, 0) = 1.0;
  a.at(1, 1) = 1.0;
  a.at(0, 1) = cd{0.0, -1.0};
  a.at(1, 0) = cd{0.0, 1.0};
  auto eig = testsupport::jacobi_hermitian_eig(a);
  double lo = std::min(eig.values[0], eig.values[1]);
  double hi = std::max(eig.values[0], eig.values[1]);
  CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hi == doctest::Approx(2.0).epsilon(1e-12));
}
