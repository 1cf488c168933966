// Reference kernels. Definition-order loops, no intrinsics; the SIMD
// backends are equivalence-tested against these.

#include <cmath>
#include <cstdint>

#include "pirtune/kernels.hpp"

namespace pirtune::kernels {
namespace {

void s_add(float* dst, const float* a, const float* b, std::int64_t i0,
           std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dst[i] = a[i] + b[i];
}

void s_sub(float* dst, const float* a, const float* b, std::int64_t i0,
           std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dst[i] = a[i] - b[i];
}

void s_mul(float* dst, const float* a, const float* b, std::int64_t i0,
           std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dst[i] = a[i] * b[i];
}

void s_scale(float* dst, const float* a, float s, std::int64_t i0,
             std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dst[i] = a[i] * s;
}

void s_axpy(float* dst, const float* a, float s, std::int64_t i0,
            std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dst[i] = dst[i] + s * a[i];
}

void s_leaky_fwd(float* dst, const float* x, float alpha, std::int64_t i0,
                 std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i)
        dst[i] = x[i] >= 0.0f ? x[i] : alpha * x[i];
}

void s_leaky_bwd(float* dx, const float* x, const float* dy, float alpha,
                 std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i)
        dx[i] = dx[i] + (x[i] >= 0.0f ? dy[i] : alpha * dy[i]);
}

void s_adam(float* p, float* m, float* v, const float* g, std::int64_t i0,
            std::int64_t i1, float lr, float beta1, float beta2, float eps,
            float bc1, float bc2) {
    for (std::int64_t i = i0; i < i1; ++i) {
        float gi = g[i];
        m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0f - beta2) * (gi * gi);
        float mhat = m[i] * bc1;
        float vhat = v[i] * bc2;
        p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

void s_rmsprop(float* p, float* v, const float* g, std::int64_t i0,
               std::int64_t i1, float lr, float decay, float eps) {
    for (std::int64_t i = i0; i < i1; ++i) {
        float gi = g[i];
        v[i] = decay * v[i] + (1.0f - decay) * (gi * gi);
        p[i] = p[i] - lr * (gi / std::sqrt(v[i] + eps));
    }
}

double s_sum(const float* x, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    return acc;
}

double s_sumsq(const float* x, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double xi = static_cast<double>(x[i]);
        acc += xi * xi;
    }
    return acc;
}

double s_dot(const float* a, const float* b, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void s_mm_nn(float* c, const float* a, const float* b, std::int64_t m0,
             std::int64_t m1, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = m0; i < m1; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::int64_t kk = 0; kk < k; ++kk)
                acc += a[i * k + kk] * b[kk * n + j];
            c[i * n + j] = acc;
        }
    }
}

void s_mm_tn(float* c, const float* a, const float* b, std::int64_t m0,
             std::int64_t m1, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = m0; i < m1; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::int64_t kk = 0; kk < k; ++kk)
                acc += a[kk * m + i] * b[kk * n + j];
            c[i * n + j] = acc;
        }
    }
}

void s_mm_nt(float* c, const float* a, const float* b, std::int64_t m0,
             std::int64_t m1, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = m0; i < m1; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::int64_t kk = 0; kk < k; ++kk)
                acc += a[i * k + kk] * b[j * k + kk];
            c[i * n + j] = acc;
        }
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t = {
        s_add,  s_sub,   s_mul,   s_scale, s_axpy,  s_leaky_fwd, s_leaky_bwd,
        s_adam, s_rmsprop, s_sum, s_sumsq, s_dot,   s_mm_nn,     s_mm_tn,
        s_mm_nt,
    };
    return t;
}

}  // namespace pirtune::kernels
