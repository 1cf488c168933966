#include "pirtune/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>
#include <vector>

#include "backends.hpp"
#include "pirtune/errors.hpp"

namespace pirtune::kernels {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Backend parse_backend(const std::string& name) {
  const std::string s = lower(name);
  if (s == "scalar") return Backend::Scalar;
  if (s == "avx2") return Backend::Avx2;
  if (s == "avx512") return Backend::Avx512;
  if (s == "neon") return Backend::Neon;
  throw ConfigError("PIRTUNE_KERNELS: unknown backend '" + name +
                    "' (expected scalar|avx2|avx512|neon)");
}

int detect_thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  const char* env = std::getenv("PIRTUNE_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  int requested = 0;
  const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), requested);
  if (ec != std::errc() || *ptr != '\0' || requested < 1) {
    throw ConfigError(std::string("PIRTUNE_THREADS: expected a positive integer, got '") + env +
                      "'");
  }
  return std::min(requested, hw);
}

std::atomic<int> g_threads{0};
std::atomic<int> g_backend{-1};
std::once_flag g_init_once;

void init_runtime() {
  std::call_once(g_init_once, [] {
    g_threads.store(detect_thread_count(), std::memory_order_relaxed);
    Backend b = detect_best_backend();
    if (const char* env = std::getenv("PIRTUNE_KERNELS"); env != nullptr && *env != '\0') {
      b = parse_backend(env);
      if (!backend_supported(b)) {
        throw ConfigError(std::string("PIRTUNE_KERNELS: backend '") + backend_name(b) +
                          "' is not supported on this CPU");
      }
    }
    g_backend.store(static_cast<int>(b), std::memory_order_relaxed);
  });
}

const KernelTable& tbl() { return table_for(active_backend()); }

constexpr std::int64_t kElementGrain = 1 << 16;

// Rows per chunk sized so each chunk carries at least ~128k multiply-adds.
std::int64_t row_grain(std::int64_t work_per_row) {
  return std::max<std::int64_t>(1, (std::int64_t{1} << 17) / std::max<std::int64_t>(1, work_per_row));
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Avx512: return "avx512";
    case Backend::Neon: return "neon";
  }
  return "?";
}

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Avx512:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx512f");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(__aarch64__) || defined(_M_ARM64)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect_best_backend() {
  if (backend_supported(Backend::Avx512)) return Backend::Avx512;
  if (backend_supported(Backend::Avx2)) return Backend::Avx2;
  if (backend_supported(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

Backend active_backend() {
  init_runtime();
  return static_cast<Backend>(g_backend.load(std::memory_order_relaxed));
}

void set_backend(Backend b) {
  init_runtime();
  if (!backend_supported(b)) {
    throw Error(std::string("backend '") + backend_name(b) + "' is not supported on this CPU");
  }
  g_backend.store(static_cast<int>(b), std::memory_order_relaxed);
}

const KernelTable& table_for(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return scalar_table();
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return avx2_table();
#else
      break;
#endif
    case Backend::Avx512:
#if defined(__x86_64__) || defined(_M_X64)
      return avx512_table();
#else
      break;
#endif
    case Backend::Neon:
#if defined(__aarch64__) || defined(_M_ARM64)
      return neon_table();
#else
      break;
#endif
  }
  throw Error(std::string("backend '") + backend_name(b) + "' is not compiled into this binary");
}

int thread_count() {
  init_runtime();
  return g_threads.load(std::memory_order_relaxed);
}

void set_thread_count(int n) {
  init_runtime();
  g_threads.store(std::max(1, n), std::memory_order_relaxed);
}

// Short-lived workers pulling fixed-size chunks off an atomic cursor. Chunk
// boundaries never affect results: every output index is written by exactly
// one chunk and computed independently of where the chunk starts.
void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  grain = std::max<std::int64_t>(1, grain);
  const int workers =
      static_cast<int>(std::min<std::int64_t>(thread_count(), (n + grain - 1) / grain));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::int64_t chunk = std::max(grain, (n + workers * 4 - 1) / (workers * 4));
  std::atomic<std::int64_t> cursor{0};
  auto drain = [&, chunk, n] {
    for (;;) {
      const std::int64_t begin = cursor.fetch_add(chunk, std::memory_order_relaxed);
      if (begin >= n) break;
      fn(begin, std::min(begin + chunk, n));
    }
  };
  std::vector<std::thread> extra;
  extra.reserve(static_cast<size_t>(workers - 1));
  for (int i = 0; i < workers - 1; ++i) extra.emplace_back(drain);
  drain();
  for (auto& t : extra) t.join();
}

// ------------------------------------------------------------------ wrappers

void add(float* dst, const float* a, const float* b, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) { t.add(dst, a, b, i0, i1); });
}

void sub(float* dst, const float* a, const float* b, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) { t.sub(dst, a, b, i0, i1); });
}

void mul(float* dst, const float* a, const float* b, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) { t.mul(dst, a, b, i0, i1); });
}

void scale(float* dst, const float* a, float s, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) { t.scale(dst, a, s, i0, i1); });
}

void axpy(float* dst, const float* a, float s, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) { t.axpy(dst, a, s, i0, i1); });
}

void leaky_relu_fwd(float* dst, const float* x, float alpha, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain,
               [&](std::int64_t i0, std::int64_t i1) { t.leaky_fwd(dst, x, alpha, i0, i1); });
}

void leaky_relu_bwd(float* dx, const float* x, const float* dy, float alpha, std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain,
               [&](std::int64_t i0, std::int64_t i1) { t.leaky_bwd(dx, x, dy, alpha, i0, i1); });
}

void adam_update(float* p, float* m, float* v, const float* g, std::int64_t n, float lr,
                 float beta1, float beta2, float eps, float bc1, float bc2) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) {
    t.adam(p, m, v, g, i0, i1, lr, beta1, beta2, eps, bc1, bc2);
  });
}

void rmsprop_update(float* p, float* v, const float* g, std::int64_t n, float lr, float decay,
                    float eps) {
  const KernelTable& t = tbl();
  parallel_for(n, kElementGrain, [&](std::int64_t i0, std::int64_t i1) {
    t.rmsprop(p, v, g, i0, i1, lr, decay, eps);
  });
}

double sum(const float* x, std::int64_t n) { return tbl().sum(x, n); }
double sumsq(const float* x, std::int64_t n) { return tbl().sumsq(x, n); }
double dot(const float* a, const float* b, std::int64_t n) { return tbl().dot(a, b, n); }

void mm_nn(float* c, const float* a, const float* b, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(m, row_grain(k * n),
               [&](std::int64_t m0, std::int64_t m1) { t.mm_nn(c, a, b, m0, m1, k, n); });
}

void mm_tn(float* c, const float* a, const float* b, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(m, row_grain(k * n),
               [&](std::int64_t m0, std::int64_t m1) { t.mm_tn(c, a, b, m0, m1, m, k, n); });
}

void mm_nt(float* c, const float* a, const float* b, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  const KernelTable& t = tbl();
  parallel_for(m, row_grain(k * n),
               [&](std::int64_t m0, std::int64_t m1) { t.mm_nt(c, a, b, m0, m1, k, n); });
}

// --------------------------------------------------------- conv patch layout

ConvGeometry conv_geometry(int batch, int in_h, int in_w, int channels, int ksize, int stride) {
  if (batch < 1 || in_h < 1 || in_w < 1 || channels < 1 || ksize < 1 || stride < 1) {
    throw ShapeError("conv_geometry: all dimensions must be positive");
  }
  ConvGeometry g{};
  g.batch = batch;
  g.in_h = in_h;
  g.in_w = in_w;
  g.channels = channels;
  g.ksize = ksize;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + ksize - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + ksize - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

void im2col(const float* input, const ConvGeometry& g, float* cols) {
  const std::int64_t rows = std::int64_t{g.batch} * g.out_h * g.out_w;
  const std::int64_t patch = std::int64_t{g.ksize} * g.ksize * g.channels;
  const std::int64_t row_bytes_grain = std::max<std::int64_t>(1, 4096 / std::max<std::int64_t>(1, patch));
  parallel_for(rows, row_bytes_grain, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const int ox = static_cast<int>(r % g.out_w);
      const int oy = static_cast<int>((r / g.out_w) % g.out_h);
      const int b = static_cast<int>(r / (std::int64_t{g.out_w} * g.out_h));
      float* dst = cols + r * patch;
      for (int ky = 0; ky < g.ksize; ++ky) {
        const int iy = oy * g.stride - g.pad_top + ky;
        float* drow = dst + std::int64_t{ky} * g.ksize * g.channels;
        if (iy < 0 || iy >= g.in_h) {
          std::memset(drow, 0, sizeof(float) * g.ksize * g.channels);
          continue;
        }
        for (int kx = 0; kx < g.ksize; ++kx) {
          const int ix = ox * g.stride - g.pad_left + kx;
          float* dtap = drow + std::int64_t{kx} * g.channels;
          if (ix < 0 || ix >= g.in_w) {
            std::memset(dtap, 0, sizeof(float) * g.channels);
          } else {
            const float* src =
                input + ((std::int64_t{b} * g.in_h + iy) * g.in_w + ix) * g.channels;
            std::memcpy(dtap, src, sizeof(float) * g.channels);
          }
        }
      }
    }
  });
}

// Overlapping windows of one image hit shared input cells, so parallelism is
// per image; within an image taps accumulate in a fixed order.
void col2im_acc(const float* cols, const ConvGeometry& g, float* d_input) {
  const std::int64_t patch = std::int64_t{g.ksize} * g.ksize * g.channels;
  parallel_for(g.batch, 1, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
          const std::int64_t r = (b * g.out_h + oy) * g.out_w + ox;
          const float* src = cols + r * patch;
          for (int ky = 0; ky < g.ksize; ++ky) {
            const int iy = oy * g.stride - g.pad_top + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.ksize; ++kx) {
              const int ix = ox * g.stride - g.pad_left + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              float* dst = d_input + ((b * g.in_h + iy) * g.in_w + ix) * g.channels;
              const float* tap = src + (std::int64_t{ky} * g.ksize + kx) * g.channels;
              for (int c = 0; c < g.channels; ++c) dst[c] += tap[c];
            }
          }
        }
      }
    }
  });
}

}  // namespace pirtune::kernels
