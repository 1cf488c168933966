// NEON (aarch64) backend. Same contract as the AVX2 TU: elementwise and
// optimizer kernels reproduce the scalar reference bit for bit (separate
// mul/add, -ffp-contract=off), matmuls use explicit FMA under a tolerance,
// reductions accumulate in double with a fixed drain order.

#if defined(__aarch64__) || defined(_M_ARM64)

#include <arm_neon.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "backends.hpp"

namespace pirtune::kernels {
namespace {

using std::int64_t;

inline void n_add(float* dst, const float* a, const float* b, int64_t i0, int64_t i1) {
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) vst1q_f32(dst + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < i1; ++i) dst[i] = a[i] + b[i];
}

inline void n_sub(float* dst, const float* a, const float* b, int64_t i0, int64_t i1) {
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) vst1q_f32(dst + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < i1; ++i) dst[i] = a[i] - b[i];
}

inline void n_mul(float* dst, const float* a, const float* b, int64_t i0, int64_t i1) {
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) vst1q_f32(dst + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < i1; ++i) dst[i] = a[i] * b[i];
}

inline void n_scale(float* dst, const float* a, float s, int64_t i0, int64_t i1) {
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) vst1q_f32(dst + i, vmulq_n_f32(vld1q_f32(a + i), s));
  for (; i < i1; ++i) dst[i] = a[i] * s;
}

inline void n_axpy(float* dst, const float* a, float s, int64_t i0, int64_t i1) {
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    const float32x4_t t = vmulq_n_f32(vld1q_f32(a + i), s);
    vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), t));
  }
  for (; i < i1; ++i) dst[i] = dst[i] + a[i] * s;
}

inline void n_leaky_fwd(float* y, const float* x, float alpha, int64_t i0, int64_t i1) {
  const float32x4_t vz = vdupq_n_f32(0.0f);
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const uint32x4_t ge = vcgeq_f32(vx, vz);
    vst1q_f32(y + i, vbslq_f32(ge, vx, vmulq_n_f32(vx, alpha)));
  }
  for (; i < i1; ++i) y[i] = x[i] >= 0.0f ? x[i] : alpha * x[i];
}

inline void n_leaky_bwd(float* dx, const float* x, const float* dy, float alpha, int64_t i0,
                        int64_t i1) {
  const float32x4_t vz = vdupq_n_f32(0.0f);
  int64_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const float32x4_t vdy = vld1q_f32(dy + i);
    const uint32x4_t ge = vcgeq_f32(vx, vz);
    const float32x4_t t = vbslq_f32(ge, vdy, vmulq_n_f32(vdy, alpha));
    vst1q_f32(dx + i, vaddq_f32(vld1q_f32(dx + i), t));
  }
  for (; i < i1; ++i) dx[i] = dx[i] + (x[i] >= 0.0f ? dy[i] : alpha * dy[i]);
}

inline void n_adam(float* p, float* m, float* v, const float* g, int64_t i0, int64_t i1, float lr,
                   float beta1, float beta2, float eps, float bc1, float bc2) {
  for (int64_t i = i0; i < i1; ++i) {
    const float gi = g[i];
    const float mi = beta1 * m[i] + (1.0f - beta1) * gi;
    const float vi = beta2 * v[i] + (1.0f - beta2) * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const float mhat = mi * bc1;
    const float vhat = vi * bc2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

inline void n_rmsprop(float* p, float* v, const float* g, int64_t i0, int64_t i1, float lr,
                      float decay, float eps) {
  for (int64_t i = i0; i < i1; ++i) {
    const float gi = g[i];
    const float vi = decay * v[i] + (1.0f - decay) * (gi * gi);
    v[i] = vi;
    p[i] = p[i] - lr * (gi / std::sqrt(vi + eps));
  }
}

inline double drain2(float64x2_t acc) { return vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1); }

inline double n_sum(const float* x, int64_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    acc0 = vaddq_f64(acc0, vcvt_f64_f32(vget_low_f32(vx)));
    acc1 = vaddq_f64(acc1, vcvt_f64_f32(vget_high_f32(vx)));
  }
  double acc = drain2(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

inline double n_sumsq(const float* x, int64_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const float64x2_t lo = vcvt_f64_f32(vget_low_f32(vx));
    const float64x2_t hi = vcvt_f64_f32(vget_high_f32(vx));
    acc0 = vfmaq_f64(acc0, lo, lo);
    acc1 = vfmaq_f64(acc1, hi, hi);
  }
  double acc = drain2(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double xi = static_cast<double>(x[i]);
    acc += xi * xi;
  }
  return acc;
}

inline double n_dot(const float* a, const float* b, int64_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    acc1 = vfmaq_f64(acc1, vcvt_f64_f32(vget_high_f32(va)), vcvt_f64_f32(vget_high_f32(vb)));
  }
  double acc = drain2(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <int R, bool ATrans>
inline void mm_rows_block(float* c, const float* a, const float* b, int64_t i, int64_t M, int64_t K,
                          int64_t N) {
  auto a_at = [&](int r, int64_t k) -> float {
    return ATrans ? a[k * M + (i + r)] : a[(i + r) * K + k];
  };
  int64_t j = 0;
  for (; j + 8 <= N; j += 8) {
    float32x4_t acc[R][2];
    for (int r = 0; r < R; ++r) {
      acc[r][0] = vdupq_n_f32(0.0f);
      acc[r][1] = vdupq_n_f32(0.0f);
    }
    for (int64_t k = 0; k < K; ++k) {
      const float32x4_t b0 = vld1q_f32(b + k * N + j);
      const float32x4_t b1 = vld1q_f32(b + k * N + j + 4);
      for (int r = 0; r < R; ++r) {
        const float av = a_at(r, k);
        acc[r][0] = vfmaq_n_f32(acc[r][0], b0, av);
        acc[r][1] = vfmaq_n_f32(acc[r][1], b1, av);
      }
    }
    for (int r = 0; r < R; ++r) {
      vst1q_f32(c + (i + r) * N + j, acc[r][0]);
      vst1q_f32(c + (i + r) * N + j + 4, acc[r][1]);
    }
  }
  for (; j < N; ++j) {
    for (int r = 0; r < R; ++r) {
      float acc = 0.0f;
      for (int64_t k = 0; k < K; ++k) acc += a_at(r, k) * b[k * N + j];
      c[(i + r) * N + j] = acc;
    }
  }
}

template <bool ATrans>
inline void mm_broadcast(float* c, const float* a, const float* b, int64_t m0, int64_t m1,
                         int64_t M, int64_t K, int64_t N) {
  int64_t i = m0;
  for (; i + 4 <= m1; i += 4) mm_rows_block<4, ATrans>(c, a, b, i, M, K, N);
  for (; i < m1; ++i) mm_rows_block<1, ATrans>(c, a, b, i, M, K, N);
}

inline float hsum4(float32x4_t v);

// c[i,j] = dot(a row i, bt row j) with bt laid out [N,K]. For very narrow N
// the panel kernel has no columns to vectorize over, so vectorize over k
// instead, one accumulator per output column.
inline void mm_narrow_bt(float* c, const float* a, const float* bt, int64_t m0, int64_t m1,
                         int64_t K, int64_t N) {
  for (int64_t i = m0; i < m1; ++i) {
    const float* arow = a + i * K;
    float32x4_t acc[8];
    for (int64_t j = 0; j < N; ++j) acc[j] = vdupq_n_f32(0.0f);
    int64_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const float32x4_t av = vld1q_f32(arow + k);
      for (int64_t j = 0; j < N; ++j) {
        acc[j] = vfmaq_f32(acc[j], av, vld1q_f32(bt + j * K + k));
      }
    }
    for (int64_t j = 0; j < N; ++j) {
      float s = hsum4(acc[j]);
      for (int64_t kk = k; kk < K; ++kk) s += arow[kk] * bt[j * K + kk];
      c[i * N + j] = s;
    }
  }
}

inline void n_mm_nn(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t K,
                    int64_t N) {
  if (N < 8 && K >= 4) {
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
inline void n_mm_tn(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t M,
                    int64_t K, int64_t N) {
  if (N < 8 && m1 - m0 >= 4) {
    const int64_t rows = m1 - m0;
    thread_local std::vector<float> ct;
    ct.assign(static_cast<size_t>(N) * static_cast<size_t>(rows), 0.0f);
    for (int64_t k = 0; k < K; ++k) {
      const float* arow = a + k * M + m0;
      for (int64_t j = 0; j < N; ++j) {
        const float bv = b[k * N + j];
        float* crow = ct.data() + j * rows;
        int64_t i = 0;
        for (; i + 4 <= rows; i += 4) {
          vst1q_f32(crow + i, vfmaq_n_f32(vld1q_f32(crow + i), vld1q_f32(arow + i), bv));
        }
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

inline float hsum4(float32x4_t v) {
  const float32x2_t s = vadd_f32(vget_low_f32(v), vget_high_f32(v));
  return vget_lane_f32(s, 0) + vget_lane_f32(s, 1);
}

// c[i,j] = sum_k a[i,k] * b[j,k]. Per-element dot products are latency-bound,
// so transpose b once into [K,N] and reuse the broadcast panel kernel; the
// transpose is O(K*N) against O(m*K*N) multiply work.
inline void n_mm_nt(float* c, const float* a, const float* b, int64_t m0, int64_t m1, int64_t K,
                    int64_t N) {
  if (N < 8 && K >= 4) {
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

const KernelTable& neon_table() {
  static const KernelTable t{
      n_add,     n_sub, n_mul,   n_scale, n_axpy, n_leaky_fwd, n_leaky_bwd, n_adam,
      n_rmsprop, n_sum, n_sumsq, n_dot,   n_mm_nn, n_mm_tn,    n_mm_nt,
  };
  return t;
}

}  // namespace pirtune::kernels

#endif  // aarch64
