/**
 * @file kernels.hpp
 * @brief Dense matrix kernels: serial reference and OpenMP-parallel variants.
 *
 * The parallel variants partition output rows across threads; each output
 * element is reduced by exactly one thread in the same order as the serial
 * reference, so results are bit-identical for any thread count. The serial
 * reference is kept for testing and benchmarking (see tools/bench_kernels).
 *
 * gemm_nn : C = A(m,k) * B(k,n)            (+= when accumulate)
 * gemm_nt : C = A(m,k) * B(n,k)^T
 * gemm_tn : C = A(k,m)^T * B(k,n)
 */
#pragma once

#include <cstddef>

namespace wwm::kernels {

// Serial reference implementations.
void gemm_nn_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);

void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate = false);

// OpenMP-parallel variants, bit-identical to the serial reference.
void gemm_nn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);

}  // namespace wwm::kernels
