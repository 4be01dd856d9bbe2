/**
 * @file bench_kernels.cpp
 * @brief Throughput comparison: serial reference vs OpenMP matrix kernels.
 *
 * Shapes mirror the transformer hot loops (token projections, attention
 * score/value products, feed-forward experts).
 */
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <omp.h>

#include "wwm/kernels.hpp"
#include "wwm/rng.hpp"
#include "wwm/tensor.hpp"

using wwm::TensorF;

namespace {

struct Shape {
  const char* name;
  std::size_t m, k, n;
};

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  if (argc > 1) reps = std::stoi(argv[1]);

  const Shape shapes[] = {
      {"qkv_proj", 784, 96, 96},    {"attn_scores", 784, 16, 784},
      {"attn_values", 784, 784, 16}, {"ffn_in", 784, 96, 384},
      {"ffn_out", 784, 384, 96},    {"square", 512, 512, 512},
  };

  wwm::Rng rng(7);
  std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
  std::printf("%-12s %10s %14s %14s %8s\n", "shape", "m*k*n", "serial GF/s",
              "openmp GF/s", "match");
  for (const auto& s : shapes) {
    TensorF a = TensorF::randn({s.m, s.k}, rng);
    TensorF b = TensorF::randn({s.k, s.n}, rng);
    TensorF c0({s.m, s.n}), c1({s.m, s.n});
    const double flops = 2.0 * s.m * s.k * s.n;
    const double ms_serial = time_ms(
        [&] { wwm::kernels::gemm_nn_serial(a.v.data(), b.v.data(), c0.v.data(), s.m, s.k, s.n); },
        reps);
    const double ms_par = time_ms(
        [&] { wwm::kernels::gemm_nn(a.v.data(), b.v.data(), c1.v.data(), s.m, s.k, s.n); },
        reps);
    bool same = c0.v == c1.v;
    std::printf("%-12s %10zu %14.2f %14.2f %8s\n", s.name, s.m * s.k * s.n,
                flops / ms_serial * 1e-6, flops / ms_par * 1e-6,
                same ? "bitwise" : "DIFF");
  }

  // transposed-operand variants at the attention backward shape
  {
    const std::size_t m = 784, k = 784, n = 16;
    TensorF a = TensorF::randn({m, k}, rng);
    TensorF bt = TensorF::randn({n, k}, rng);
    TensorF c0({m, n});
    const double ms_nt = time_ms(
        [&] { wwm::kernels::gemm_nt(a.v.data(), bt.v.data(), c0.v.data(), m, k, n); }, reps);
    std::printf("%-12s %10zu %14s %14.2f\n", "nt_variant", m * k * n, "-",
                2.0 * m * k * n / ms_nt * 1e-6);
    TensorF at = TensorF::randn({k, m}, rng);
    TensorF b2 = TensorF::randn({k, n}, rng);
    TensorF c2({m, n});
    const double ms_tn = time_ms(
        [&] { wwm::kernels::gemm_tn(at.v.data(), b2.v.data(), c2.v.data(), m, k, n); }, reps);
    std::printf("%-12s %10zu %14s %14.2f\n", "tn_variant", m * k * n, "-",
                2.0 * m * k * n / ms_tn * 1e-6);
  }
  return 0;
}
