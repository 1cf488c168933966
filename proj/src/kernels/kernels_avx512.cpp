// AVX-512F backend. Only the compute-bound kernels (matmuls, reductions) get
// 512-bit implementations; the elementwise and optimizer entries are shared
// with the AVX2 table, which keeps them bit-identical to the scalar
// reference. Tail columns use masked loads/stores, so every element is still
// produced by exactly one fixed instruction sequence.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstdint>
#include <vector>

#include "backends.hpp"

namespace pirtune::kernels {
namespace {

using std::int64_t;

// AVX512F-only upper-half extract (_mm512_extractf32x8_ps needs AVX512DQ).
inline __m256 upper_half(__m512 v) {
  return _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(v), 1));
}

inline double drain8(__m512d acc) {
  alignas(64) double lane[8];
  _mm512_store_pd(lane, acc);
  double s = lane[0];
  for (int l = 1; l < 8; ++l) s += lane[l];
  return s;
}

inline double a5_sum(const float* x, int64_t n) {
  __m512d acc0 = _mm512_setzero_pd();
  __m512d acc1 = _mm512_setzero_pd();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 vx = _mm512_loadu_ps(x + i);
    acc0 = _mm512_add_pd(acc0, _mm512_cvtps_pd(_mm512_castps512_ps256(vx)));
    acc1 = _mm512_add_pd(acc1, _mm512_cvtps_pd(upper_half(vx)));
  }
  double acc = drain8(_mm512_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

inline double a5_sumsq(const float* x, int64_t n) {
  __m512d acc0 = _mm512_setzero_pd();
  __m512d acc1 = _mm512_setzero_pd();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 vx = _mm512_loadu_ps(x + i);
    const __m512d lo = _mm512_cvtps_pd(_mm512_castps512_ps256(vx));
    const __m512d hi = _mm512_cvtps_pd(upper_half(vx));
    acc0 = _mm512_fmadd_pd(lo, lo, acc0);
    acc1 = _mm512_fmadd_pd(hi, hi, acc1);
  }
  double acc = drain8(_mm512_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double xi = static_cast<double>(x[i]);
    acc += xi * xi;
  }
  return acc;
}

inline double a5_dot(const float* a, const float* b, int64_t n) {
  __m512d acc0 = _mm512_setzero_pd();
  __m512d acc1 = _mm512_setzero_pd();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 va = _mm512_loadu_ps(a + i);
    const __m512 vb = _mm512_loadu_ps(b + i);
    acc0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm512_castps512_ps256(va)),
                           _mm512_cvtps_pd(_mm512_castps512_ps256(vb)), acc0);
    acc1 = _mm512_fmadd_pd(_mm512_cvtps_pd(upper_half(va)),
                           _mm512_cvtps_pd(upper_half(vb)), acc1);
  }
  double acc = drain8(_mm512_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

// Broadcast microkernel over R rows and one masked 16-column panel.
template <int R, bool ATrans>
inline void mm_rows_block(float* c, const float* a, const float* b, int64_t i, int64_t M, int64_t K,
                          int64_t N) {
  auto a_at = [&](int r, int64_t k) -> float {
    return ATrans ? a[k * M + (i + r)] : a[(i + r) * K + k];
  };
  int64_t j = 0;
  for (; j + 32 <= N; j += 32) {
    __m512 acc[R][2];
    for (int r = 0; r < R; ++r) {
      acc[r][0] = _mm512_setzero_ps();
      acc[r][1] = _mm512_setzero_ps();
    }
    for (int64_t k = 0; k < K; ++k) {
      const __m512 b0 = _mm512_loadu_ps(b + k * N + j);
      const __m512 b1 = _mm512_loadu_ps(b + k * N + j + 16);
      for (int r = 0; r < R; ++r) {
        const __m512 av = _mm512_set1_ps(a_at(r, k));
        acc[r][0] = _mm512_fmadd_ps(av, b0, acc[r][0]);
        acc[r][1] = _mm512_fmadd_ps(av, b1, acc[r][1]);
      }
    }
    for (int r = 0; r < R; ++r) {
      _mm512_storeu_ps(c + (i + r) * N + j, acc[r][0]);
      _mm512_storeu_ps(c + (i + r) * N + j + 16, acc[r][1]);
    }
  }
  while (j < N) {
    const int64_t rem = N - j;
    const __mmask16 mask = rem >= 16 ? static_cast<__mmask16>(0xFFFF)
                                     : static_cast<__mmask16>((1u << rem) - 1u);
    __m512 acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm512_setzero_ps();
    for (int64_t k = 0; k < K; ++k) {
      const __m512 b0 = _mm512_maskz_loadu_ps(mask, b + k * N + j);
      for (int r = 0; r < R; ++r) {
        acc[r] = _mm512_fmadd_ps(_mm512_set1_ps(a_at(r, k)), b0, acc[r]);
      }
    }
    for (int r = 0; r < R; ++r) _mm512_mask_storeu_ps(c + (i + r) * N + j, mask, acc[r]);
    j += rem >= 16 ? 16 : rem;
  }
}

template <bool ATrans>
inline void mm_broadcast(float* c, const float* a, const float* b, int64_t m0, int64_t m1,
                         int64_t M, int64_t K, int64_t N) {
  int64_t i = m0;
  for (; i + 4 <= m1; i += 4) mm_rows_block<4, ATrans>(c, a, b, i, M, K, N);
  for (; i < m1; ++i) mm_rows_block<1, ATrans>(c, a, b, i, M, K, N);
}

inline float hsum16(__m512 v);

// Narrow outputs (N < 8) starve the broadcast panels, so run per-row dot
// products against a transposed copy of b instead, vectorizing over k.
inline void mm_narrow_bt(float* c, const float* a, const float* bt, int64_t m0, int64_t m1,
                         int64_t K, int64_t N) {
  for (int64_t i = m0; i < m1; ++i) {
    const float* arow = a + i * K;
    __m512 acc[8];
    for (int64_t j = 0; j < N; ++j) acc[j] = _mm512_setzero_ps();
    int64_t k = 0;
    for (; k + 16 <= K; k += 16) {
      const __m512 av = _mm512_loadu_ps(arow + k);
      for (int64_t j = 0; j < N; ++j) {
        acc[j] = _mm512_fmadd_ps(av, _mm512_loadu_ps(bt + j * K + k), acc[j]);
      }
    }
    for (int64_t j = 0; j < N; ++j) {
      float s = hsum16(acc[j]);
      for (int64_t kk = k; kk < K; ++kk) s += arow[kk] * bt[j * K + kk];
      c[i * N + j] = s;
    }
  }
}

inline void a5_mm_nn(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t K,
                     int64_t N) {
  if (N < 8 && K >= 16) {
    thread_local std::vector<float> bt;
    bt.resize(static_cast<size_t>(K) * static_cast<size_t>(N));
    for (int64_t k = 0; k < K; ++k) {
      for (int64_t j = 0; j < N; ++j) bt[j * K + k] = b[k * N + j];
    }
    mm_narrow_bt(c, a, bt.data(), m0, m1, K, N);
    return;
  }
  mm_broadcast<false>(c, a, b, m0, m1, 0, K, N);
}

// c[i,j] = sum_k a[k,i] * b[k,j]. For narrow N the panel kernel degrades to
// strided scalar loops, but rows of a are contiguous in the output row index,
// so accumulate k-major axpy-style into an [N, rows] scratch instead and
// transpose back once at the end.
inline void a5_mm_tn(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t M,
                     int64_t K, int64_t N) {
  if (N < 8 && m1 - m0 >= 16) {
    const int64_t rows = m1 - m0;
    thread_local std::vector<float> ct;
    ct.assign(static_cast<size_t>(N) * static_cast<size_t>(rows), 0.0f);
    for (int64_t k = 0; k < K; ++k) {
      const float* arow = a + k * M + m0;
      for (int64_t j = 0; j < N; ++j) {
        const __m512 vb = _mm512_set1_ps(b[k * N + j]);
        float* crow = ct.data() + j * rows;
        int64_t i = 0;
        for (; i + 16 <= rows; i += 16) {
          _mm512_storeu_ps(
              crow + i, _mm512_fmadd_ps(vb, _mm512_loadu_ps(arow + i), _mm512_loadu_ps(crow + i)));
        }
        const float bv = b[k * N + j];
        for (; i < rows; ++i) crow[i] += bv * arow[i];
      }
    }
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < N; ++j) c[(m0 + i) * N + j] = ct[j * rows + i];
    }
    return;
  }
  mm_broadcast<true>(c, a, b, m0, m1, M, K, N);
}

inline float hsum16(__m512 v) {
  alignas(64) float lane[16];
  _mm512_store_ps(lane, v);
  float s = lane[0];
  for (int l = 1; l < 16; ++l) s += lane[l];
  return s;
}

// c[i,j] = sum_k a[i,k] * b[j,k]. Per-element dot products are latency-bound,
// so transpose b once into [K,N] and reuse the broadcast panel kernel; the
// transpose is O(K*N) against O(m*K*N) multiply work.
inline void a5_mm_nt(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t K,
                     int64_t N) {
  if (N < 8 && K >= 16) {
    // b is already [N,K], exactly the layout the narrow kernel wants.
    mm_narrow_bt(c, a, b, m0, m1, K, N);
    return;
  }
  thread_local std::vector<float> bt;
  bt.resize(static_cast<size_t>(K) * static_cast<size_t>(N));
  for (int64_t j = 0; j < N; ++j) {
    for (int64_t k = 0; k < K; ++k) bt[k * N + j] = b[j * K + k];
  }
  mm_broadcast<false>(c, a, bt.data(), m0, m1, 0, K, N);
}

}  // namespace

const KernelTable& avx512_table() {
  static const KernelTable t = [] {
    KernelTable base = avx2_table();
    base.sum = a5_sum;
    base.sumsq = a5_sumsq;
    base.dot = a5_dot;
    base.mm_nn = a5_mm_nn;
    base.mm_tn = a5_mm_tn;
    base.mm_nt = a5_mm_nt;
    return base;
  }();
  return t;
}

}  // namespace pirtune::kernels

#endif  // x86_64
