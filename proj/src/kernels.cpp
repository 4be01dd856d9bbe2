#include "wwm/kernels.hpp"

#include <cstring>
#include <type_traits>
#include <vector>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace wwm::kernels {

namespace {

#ifdef __AVX512F__
// f32 micro-kernel: 4 output rows x 32 columns of accumulators; each B row is
// loaded once per l and reused by all four A rows. Per-element accumulation
// stays strictly in l order, matching the scalar path's FMA contraction.
inline void nn_rows_f32_avx512(const float* __restrict a,
                               const float* __restrict b, float* __restrict c,
                               std::size_t i0, std::size_t i1, std::size_t k,
                               std::size_t n, bool accumulate) {
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    const float* a0 = a + i * k;
    const float* a1 = a0 + k;
    const float* a2 = a1 + k;
    const float* a3 = a2 + k;
    float* c0 = c + i * n;
    float* c1 = c0 + n;
    float* c2 = c1 + n;
    float* c3 = c2 + n;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m512 r00, r01, r10, r11, r20, r21, r30, r31;
      if (accumulate) {
        r00 = _mm512_loadu_ps(c0 + j);
        r01 = _mm512_loadu_ps(c0 + j + 16);
        r10 = _mm512_loadu_ps(c1 + j);
        r11 = _mm512_loadu_ps(c1 + j + 16);
        r20 = _mm512_loadu_ps(c2 + j);
        r21 = _mm512_loadu_ps(c2 + j + 16);
        r30 = _mm512_loadu_ps(c3 + j);
        r31 = _mm512_loadu_ps(c3 + j + 16);
      } else {
        r00 = r01 = r10 = r11 = r20 = r21 = r30 = r31 = _mm512_setzero_ps();
      }
      for (std::size_t l = 0; l < k; ++l) {
        const float* brow = b + l * n + j;
        const __m512 b0 = _mm512_loadu_ps(brow);
        const __m512 b1 = _mm512_loadu_ps(brow + 16);
        const __m512 av0 = _mm512_set1_ps(a0[l]);
        const __m512 av1 = _mm512_set1_ps(a1[l]);
        const __m512 av2 = _mm512_set1_ps(a2[l]);
        const __m512 av3 = _mm512_set1_ps(a3[l]);
        r00 = _mm512_fmadd_ps(av0, b0, r00);
        r01 = _mm512_fmadd_ps(av0, b1, r01);
        r10 = _mm512_fmadd_ps(av1, b0, r10);
        r11 = _mm512_fmadd_ps(av1, b1, r11);
        r20 = _mm512_fmadd_ps(av2, b0, r20);
        r21 = _mm512_fmadd_ps(av2, b1, r21);
        r30 = _mm512_fmadd_ps(av3, b0, r30);
        r31 = _mm512_fmadd_ps(av3, b1, r31);
      }
      _mm512_storeu_ps(c0 + j, r00);
      _mm512_storeu_ps(c0 + j + 16, r01);
      _mm512_storeu_ps(c1 + j, r10);
      _mm512_storeu_ps(c1 + j + 16, r11);
      _mm512_storeu_ps(c2 + j, r20);
      _mm512_storeu_ps(c2 + j + 16, r21);
      _mm512_storeu_ps(c3 + j, r30);
      _mm512_storeu_ps(c3 + j + 16, r31);
    }
    for (; j < n; j += 16) {
      const __mmask16 msk =
          n - j >= 16 ? static_cast<__mmask16>(0xFFFF)
                      : static_cast<__mmask16>((1u << (n - j)) - 1u);
      __m512 r0, r1, r2, r3;
      if (accumulate) {
        r0 = _mm512_maskz_loadu_ps(msk, c0 + j);
        r1 = _mm512_maskz_loadu_ps(msk, c1 + j);
        r2 = _mm512_maskz_loadu_ps(msk, c2 + j);
        r3 = _mm512_maskz_loadu_ps(msk, c3 + j);
      } else {
        r0 = r1 = r2 = r3 = _mm512_setzero_ps();
      }
      for (std::size_t l = 0; l < k; ++l) {
        const __m512 bv = _mm512_maskz_loadu_ps(msk, b + l * n + j);
        r0 = _mm512_fmadd_ps(_mm512_set1_ps(a0[l]), bv, r0);
        r1 = _mm512_fmadd_ps(_mm512_set1_ps(a1[l]), bv, r1);
        r2 = _mm512_fmadd_ps(_mm512_set1_ps(a2[l]), bv, r2);
        r3 = _mm512_fmadd_ps(_mm512_set1_ps(a3[l]), bv, r3);
      }
      _mm512_mask_storeu_ps(c0 + j, msk, r0);
      _mm512_mask_storeu_ps(c1 + j, msk, r1);
      _mm512_mask_storeu_ps(c2 + j, msk, r2);
      _mm512_mask_storeu_ps(c3 + j, msk, r3);
    }
  }
  for (; i < i1; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    std::size_t j = 0;
    for (; j < n; j += 16) {
      const __mmask16 msk =
          n - j >= 16 ? static_cast<__mmask16>(0xFFFF)
                      : static_cast<__mmask16>((1u << (n - j)) - 1u);
      __m512 r = accumulate ? _mm512_maskz_loadu_ps(msk, crow + j)
                            : _mm512_setzero_ps();
      for (std::size_t l = 0; l < k; ++l)
        r = _mm512_fmadd_ps(_mm512_set1_ps(arow[l]),
                            _mm512_maskz_loadu_ps(msk, b + l * n + j), r);
      _mm512_mask_storeu_ps(crow + j, msk, r);
    }
  }
}
#endif

// C(m,n) = A(m,k)*B(k,n), ikj order. Four output rows share each streamed B
// row. Every C element accumulates strictly in l order, so serial, simd and
// row-partitioned parallel runs are bit-identical: lane independence only,
// no reassociation.
template <typename T>
inline void nn_rows(const T* __restrict a, const T* __restrict b,
                    T* __restrict c, std::size_t i0, std::size_t i1,
                    std::size_t k, std::size_t n, bool accumulate) {
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    if (!accumulate) {
      std::memset(c0, 0, n * sizeof(T));
      std::memset(c1, 0, n * sizeof(T));
      std::memset(c2, 0, n * sizeof(T));
      std::memset(c3, 0, n * sizeof(T));
    }
    const T* __restrict a0 = a + i * k;
    const T* __restrict a1 = a0 + k;
    const T* __restrict a2 = a1 + k;
    const T* __restrict a3 = a2 + k;
    for (std::size_t l = 0; l < k; ++l) {
      const T av0 = a0[l], av1 = a1[l], av2 = a2[l], av3 = a3[l];
      const T* __restrict brow = b + l * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += av0 * bv;
        c1[j] += av1 * bv;
        c2[j] += av2 * bv;
        c3[j] += av3 * bv;
      }
    }
  }
  for (; i < i1; ++i) {
    T* __restrict crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, n * sizeof(T));
    const T* __restrict arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = arow[l];
      const T* __restrict brow = b + l * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m,n) = A(k,m)^T*B(k,n). Threads own disjoint C row ranges [i0,i1) and
// sweep all k source rows, so the reduction order matches the serial path.
template <typename T>
inline void tn_rows(const T* __restrict a, const T* __restrict b,
                    T* __restrict c, std::size_t i0, std::size_t i1,
                    std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
  if (!accumulate)
    for (std::size_t i = i0; i < i1; ++i)
      std::memset(c + i * n, 0, n * sizeof(T));
  for (std::size_t l = 0; l < k; ++l) {
    const T* __restrict arow = a + l * m;
    const T* __restrict brow = b + l * n;
    for (std::size_t i = i0; i < i1; ++i) {
      const T av = arow[i];
      T* __restrict crow = c + i * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr std::size_t kParallelCutoff = 1 << 15;  // flops below this stay serial
constexpr std::size_t kRowChunk = 8;

template <typename T>
inline void nn_rows_dispatch(const T* a, const T* b, T* c, std::size_t i0,
                             std::size_t i1, std::size_t k, std::size_t n,
                             bool accumulate) {
#ifdef __AVX512F__
  if constexpr (std::is_same_v<T, float>) {
    nn_rows_f32_avx512(a, b, c, i0, i1, k, n, accumulate);
    return;
  }
#endif
  nn_rows(a, b, c, i0, i1, k, n, accumulate);
}

template <typename T>
void nn_impl(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate, bool parallel) {
  if (!parallel || m * k * n < kParallelCutoff) {
    nn_rows_dispatch(a, b, c, 0, m, k, n, accumulate);
    return;
  }
  const std::size_t chunks = (m + kRowChunk - 1) / kRowChunk;
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < static_cast<long>(chunks); ++ci) {
    const std::size_t i0 = static_cast<std::size_t>(ci) * kRowChunk;
    const std::size_t i1 = std::min(m, i0 + kRowChunk);
    nn_rows_dispatch(a, b, c, i0, i1, k, n, accumulate);
  }
}

// NT runs as NN on an explicitly transposed right operand; the per-element
// accumulation order over l is unchanged.
template <typename T>
void nt_impl(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate, bool parallel) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < k; ++l) bt[l * n + j] = b[j * k + l];
  nn_impl(a, bt.data(), c, m, k, n, accumulate, parallel);
}

// TN runs as NN on an explicitly transposed left operand; same per-element
// order over l.
template <typename T>
void tn_impl(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate, bool parallel) {
  if (m * k < (1u << 10)) {  // tiny left operand: skip the transpose copy
    tn_rows(a, b, c, 0, m, m, k, n, accumulate);
    return;
  }
  std::vector<T> at(m * k);
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t i = 0; i < m; ++i) at[i * k + l] = a[l * m + i];
  nn_impl(at.data(), b, c, m, k, n, accumulate, parallel);
}

}  // namespace

void gemm_nn_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  nn_impl(a, b, c, m, k, n, accumulate, false);
}
void gemm_nt_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  nt_impl(a, b, c, m, k, n, accumulate, false);
}
void gemm_tn_serial(const float* a, const float* b, float* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  tn_impl(a, b, c, m, k, n, accumulate, false);
}
void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  nn_impl(a, b, c, m, k, n, accumulate, false);
}
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  nt_impl(a, b, c, m, k, n, accumulate, false);
}
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  tn_impl(a, b, c, m, k, n, accumulate, false);
}

void gemm_nn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  nn_impl(a, b, c, m, k, n, accumulate, true);
}
void gemm_nt(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  nt_impl(a, b, c, m, k, n, accumulate, true);
}
void gemm_tn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  tn_impl(a, b, c, m, k, n, accumulate, true);
}
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  nn_impl(a, b, c, m, k, n, accumulate, true);
}
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  nt_impl(a, b, c, m, k, n, accumulate, true);
}
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  tn_impl(a, b, c, m, k, n, accumulate, true);
}

}  // namespace wwm::kernels
