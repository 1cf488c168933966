#pragma once

#include <cstdint>
#include <functional>
#include <string>

// Data-parallel inner loops used by the tensor/autodiff layer.
//
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2/AVX-512 on x86-64, NEON on aarch64) selected at runtime from CPU
// features. The variants are equivalence-tested against the scalar
// reference: elementwise kernels and the fused optimizer updates are
// bit-exact (one rounding per element, identical operation order);
// reductions accumulate in double in all variants and agree to ~1e-12
// relative; matmuls accumulate in float (SIMD paths use FMA) and agree
// to small relative tolerance. Transcendentals (tanh, exp, log) are not
// dispatched — they stay scalar in the graph layer so all backends share
// libm rounding.
//
// Determinism: every output element is produced by exactly one thread
// with a fixed sequential accumulation order, so results are identical
// regardless of PIRTUNE_THREADS. Reductions run single-threaded.
namespace pirtune::kernels {

enum class Backend { Scalar, Avx2, Avx512, Neon };

const char* backend_name(Backend b);

// Best backend for this CPU (checked with cpuid / compile-time arch).
Backend detect_best_backend();

// Active backend. Defaults to detect_best_backend(), overridable with
// the PIRTUNE_KERNELS environment variable (scalar|avx2|avx512|neon).
Backend active_backend();

// Throws Error if the requested backend is unsupported on this CPU.
void set_backend(Backend b);

bool backend_supported(Backend b);

// ---------------------------------------------------------------------------
// Threading. PIRTUNE_THREADS caps the worker count (default: hardware
// concurrency). parallel_for splits [0,n) into contiguous chunks; `fn`
// receives [begin,end) ranges. Work below `grain` runs inline.
// ---------------------------------------------------------------------------

int thread_count();
void set_thread_count(int n);
void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

// ---------------------------------------------------------------------------
// Elementwise (bit-exact across backends)
// ---------------------------------------------------------------------------

void add(float* dst, const float* a, const float* b, std::int64_t n);
void sub(float* dst, const float* a, const float* b, std::int64_t n);
void mul(float* dst, const float* a, const float* b, std::int64_t n);
void scale(float* dst, const float* a, float s, std::int64_t n);
// dst[i] += s * a[i]
void axpy(float* dst, const float* a, float s, std::int64_t n);
void leaky_relu_fwd(float* dst, const float* x, float alpha, std::int64_t n);
// dx[i] += dy[i] * (x[i] >= 0 ? 1 : alpha)
void leaky_relu_bwd(float* dx, const float* x, const float* dy, float alpha,
                    std::int64_t n);

// Bias-corrected Adam. bc1 = 1/(1-beta1^t), bc2 = 1/(1-beta2^t), epsilon
// added outside the square root.
void adam_update(float* p, float* m, float* v, const float* g, std::int64_t n,
                 float lr, float beta1, float beta2, float eps, float bc1,
                 float bc2);
// v <- decay*v + (1-decay)*g^2; p -= lr*g/sqrt(v + eps)
void rmsprop_update(float* p, float* v, const float* g, std::int64_t n,
                    float lr, float decay, float eps);

// ---------------------------------------------------------------------------
// Reductions (double accumulators, single-threaded, deterministic order)
// ---------------------------------------------------------------------------

double sum(const float* x, std::int64_t n);
double sumsq(const float* x, std::int64_t n);
double dot(const float* a, const float* b, std::int64_t n);

// ---------------------------------------------------------------------------
// Matrix multiplication (row-major, float accumulation)
// ---------------------------------------------------------------------------

// C[M,N] = A[M,K] * B[K,N]
void mm_nn(float* c, const float* a, const float* b, std::int64_t m,
           std::int64_t k, std::int64_t n);
// C[M,N] = A[K,M]^T * B[K,N]
void mm_tn(float* c, const float* a, const float* b, std::int64_t m,
           std::int64_t k, std::int64_t n);
// C[M,N] = A[M,K] * B[N,K]^T
void mm_nt(float* c, const float* a, const float* b, std::int64_t m,
           std::int64_t k, std::int64_t n);

// ---------------------------------------------------------------------------
// Convolution patch layout (pure data movement, backend-independent).
// NHWC input, SAME zero padding: for output index o along a spatial axis,
// the window starts at o*stride - pad_begin with
// pad_begin = max(((out-1)*stride + ksize - in), 0) / 2.
// cols has shape [batch*out_h*out_w, ksize*ksize*channels].
// ---------------------------------------------------------------------------

struct ConvGeometry {
    int batch, in_h, in_w, channels;
    int ksize, stride;
    int out_h, out_w;
    int pad_top, pad_left;
};

ConvGeometry conv_geometry(int batch, int in_h, int in_w, int channels,
                           int ksize, int stride);

void im2col(const float* input, const ConvGeometry& g, float* cols);
// Scatter-add of patch gradients back onto the input gradient.
void col2im_acc(const float* cols, const ConvGeometry& g, float* d_input);

// ---------------------------------------------------------------------------
// Backend function table (one entry per dispatched kernel, operating on
// ranges so the threading layer stays backend-agnostic).
// ---------------------------------------------------------------------------

struct KernelTable {
    void (*add)(float*, const float*, const float*, std::int64_t,
                std::int64_t);
    void (*sub)(float*, const float*, const float*, std::int64_t,
                std::int64_t);
    void (*mul)(float*, const float*, const float*, std::int64_t,
                std::int64_t);
    void (*scale)(float*, const float*, float, std::int64_t, std::int64_t);
    void (*axpy)(float*, const float*, float, std::int64_t, std::int64_t);
    void (*leaky_fwd)(float*, const float*, float, std::int64_t, std::int64_t);
    void (*leaky_bwd)(float*, const float*, const float*, float, std::int64_t,
                      std::int64_t);
    void (*adam)(float*, float*, float*, const float*, std::int64_t,
                 std::int64_t, float, float, float, float, float, float);
    void (*rmsprop)(float*, float*, const float*, std::int64_t, std::int64_t,
                    float, float, float);
    double (*sum)(const float*, std::int64_t);
    double (*sumsq)(const float*, std::int64_t);
    double (*dot)(const float*, const float*, std::int64_t);
    // mm_* compute rows [m0,m1) of C.
    void (*mm_nn)(float*, const float*, const float*, std::int64_t,
                  std::int64_t, std::int64_t, std::int64_t);
    void (*mm_tn)(float*, const float*, const float*, std::int64_t,
                  std::int64_t, std::int64_t, std::int64_t, std::int64_t);
    void (*mm_nt)(float*, const float*, const float*, std::int64_t,
                  std::int64_t, std::int64_t, std::int64_t);
};

const KernelTable& table_for(Backend b);

}  // namespace pirtune::kernels
