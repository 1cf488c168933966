#include "pirtune/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pirtune/errors.hpp"
#include "pirtune/kernels.hpp"

namespace pirtune {

namespace k = kernels;

NodeId Graph::new_node(Shape shape, bool requires_grad) {
  Node n;
  n.shape = std::move(shape);
  n.value.resize(static_cast<size_t>(numel(n.shape)));
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::vector<float>& Graph::grad_buf(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad.resize(n.value.size(), 0.0f);
  return n.grad;
}

void Graph::set_back(NodeId id, std::function<void()> fn) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.requires_grad) n.back = std::move(fn);
}

void Graph::check_same_shape(NodeId a, NodeId b, const char* op) const {
  if (shape(a) != shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(shape(a)) + " vs " +
                     shape_str(shape(b)));
  }
}

float Graph::scalar(NodeId id) const {
  if (numel(shape(id)) != 1) {
    throw ShapeError("scalar: node has shape " + shape_str(shape(id)));
  }
  return value(id)[0];
}

double Graph::scalar_hi(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (numel(n.shape) != 1) {
    throw ShapeError("scalar_hi: node has shape " + shape_str(n.shape));
  }
  return n.has_hi ? n.hi_value : static_cast<double>(n.value[0]);
}

NodeId Graph::leaf(const Tensor& t, bool requires_grad) {
  NodeId id = new_node(t.shape, record_ && requires_grad);
  val(id) = t.data;
  return id;
}

NodeId Graph::leaf(Shape shape, std::vector<float> data, bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
    throw ShapeError("leaf: data size does not match shape " + shape_str(shape));
  }
  NodeId id = new_node(std::move(shape), record_ && requires_grad);
  val(id) = std::move(data);
  return id;
}

// ------------------------------------------------------------- elementwise

NodeId Graph::add(NodeId a, NodeId b) {
  check_same_shape(a, b, "add");
  const std::int64_t n = numel(shape(a));
  NodeId out = new_node(shape(a), requires_grad(a) || requires_grad(b));
  k::add(val(out).data(), value(a).data(), value(b).data(), n);
  if (n == 1) {
    nodes_.back().has_hi = true;
    nodes_.back().hi_value = scalar_hi(a) + scalar_hi(b);
  }
  set_back(out, [this, a, b, out, n] {
    const float* dy = grad(out).data();
    if (requires_grad(a)) k::axpy(grad_buf(a).data(), dy, 1.0f, n);
    if (requires_grad(b)) k::axpy(grad_buf(b).data(), dy, 1.0f, n);
  });
  return out;
}

NodeId Graph::add_scaled(NodeId a, NodeId b, float alpha) {
  check_same_shape(a, b, "add_scaled");
  const std::int64_t n = numel(shape(a));
  NodeId out = new_node(shape(a), requires_grad(a) || requires_grad(b));
  val(out) = value(a);
  k::axpy(val(out).data(), value(b).data(), alpha, n);
  if (n == 1) {
    nodes_.back().has_hi = true;
    nodes_.back().hi_value = scalar_hi(a) + static_cast<double>(alpha) * scalar_hi(b);
  }
  set_back(out, [this, a, b, out, n, alpha] {
    const float* dy = grad(out).data();
    if (requires_grad(a)) k::axpy(grad_buf(a).data(), dy, 1.0f, n);
    if (requires_grad(b)) k::axpy(grad_buf(b).data(), dy, alpha, n);
  });
  return out;
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_same_shape(a, b, "mul");
  const std::int64_t n = numel(shape(a));
  NodeId out = new_node(shape(a), requires_grad(a) || requires_grad(b));
  k::mul(val(out).data(), value(a).data(), value(b).data(), n);
  set_back(out, [this, a, b, out, n] {
    const float* dy = grad(out).data();
    if (requires_grad(a)) {
      float* da = grad_buf(a).data();
      const float* bv = value(b).data();
      for (std::int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
    }
    if (requires_grad(b)) {
      float* db = grad_buf(b).data();
      const float* av = value(a).data();
      for (std::int64_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
    }
  });
  return out;
}

NodeId Graph::affine(NodeId x, float a, float b) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node(shape(x), requires_grad(x));
  const float* xv = value(x).data();
  float* yv = val(out).data();
  for (std::int64_t i = 0; i < n; ++i) yv[i] = a * xv[i] + b;
  if (n == 1) {
    nodes_.back().has_hi = true;
    nodes_.back().hi_value =
        static_cast<double>(a) * scalar_hi(x) + static_cast<double>(b);
  }
  set_back(out, [this, x, out, n, a] {
    k::axpy(grad_buf(x).data(), grad(out).data(), a, n);
  });
  return out;
}

NodeId Graph::leaky_relu(NodeId x, float alpha) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node(shape(x), requires_grad(x));
  k::leaky_relu_fwd(val(out).data(), value(x).data(), alpha, n);
  set_back(out, [this, x, out, n, alpha] {
    k::leaky_relu_bwd(grad_buf(x).data(), value(x).data(), grad(out).data(), alpha, n);
  });
  return out;
}

NodeId Graph::tanh(NodeId x) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node(shape(x), requires_grad(x));
  const float* xv = value(x).data();
  float* yv = val(out).data();
  for (std::int64_t i = 0; i < n; ++i) yv[i] = std::tanh(xv[i]);
  set_back(out, [this, x, out, n] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    const float* yv2 = value(out).data();
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0f - yv2[i] * yv2[i]);
  });
  return out;
}

NodeId Graph::log(NodeId x) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node(shape(x), requires_grad(x));
  const float* xv = value(x).data();
  float* yv = val(out).data();
  for (std::int64_t i = 0; i < n; ++i) yv[i] = std::log(xv[i]);
  set_back(out, [this, x, out, n] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    const float* xv2 = value(x).data();
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] / xv2[i];
  });
  return out;
}

NodeId Graph::clamp(NodeId x, float lo, float hi) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node(shape(x), requires_grad(x));
  const float* xv = value(x).data();
  float* yv = val(out).data();
  for (std::int64_t i = 0; i < n; ++i) yv[i] = std::min(std::max(xv[i], lo), hi);
  set_back(out, [this, x, out, n, lo, hi] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    const float* xv2 = value(x).data();
    for (std::int64_t i = 0; i < n; ++i) {
      if (xv2[i] >= lo && xv2[i] <= hi) dx[i] += dy[i];
    }
  });
  return out;
}

// ------------------------------------------------------------- linear

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Shape& as = shape(a);
  const Shape& bs = shape(b);
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::int64_t M = as[0], K = as[1], N = bs[1];
  NodeId out = new_node({M, N}, requires_grad(a) || requires_grad(b));
  k::mm_nn(val(out).data(), value(a).data(), value(b).data(), M, K, N);
  set_back(out, [this, a, b, out, M, K, N] {
    const float* dy = grad(out).data();
    if (requires_grad(a)) {
      std::vector<float> tmp(static_cast<size_t>(M) * K);
      k::mm_nt(tmp.data(), dy, value(b).data(), M, N, K);
      k::axpy(grad_buf(a).data(), tmp.data(), 1.0f, M * K);
    }
    if (requires_grad(b)) {
      std::vector<float> tmp(static_cast<size_t>(K) * N);
      k::mm_tn(tmp.data(), value(a).data(), dy, K, M, N);
      k::axpy(grad_buf(b).data(), tmp.data(), 1.0f, K * N);
    }
  });
  return out;
}

NodeId Graph::dense(NodeId x, NodeId w, NodeId bias) {
  const Shape& xs = shape(x);
  const Shape& ws = shape(w);
  const Shape& bs = shape(bias);
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0] || bs.size() != 1 || bs[0] != ws[1]) {
    throw ShapeError("dense: incompatible shapes " + shape_str(xs) + ", " + shape_str(ws) + ", " +
                     shape_str(bs));
  }
  const std::int64_t B = xs[0], I = xs[1], O = ws[1];
  NodeId out = new_node({B, O}, requires_grad(x) || requires_grad(w) || requires_grad(bias));
  k::mm_nn(val(out).data(), value(x).data(), value(w).data(), B, I, O);
  {
    float* yv = val(out).data();
    const float* bv = value(bias).data();
    for (std::int64_t r = 0; r < B; ++r) {
      k::add(yv + r * O, yv + r * O, bv, O);
    }
  }
  set_back(out, [this, x, w, bias, out, B, I, O] {
    const float* dy = grad(out).data();
    if (requires_grad(x)) {
      std::vector<float> tmp(static_cast<size_t>(B) * I);
      k::mm_nt(tmp.data(), dy, value(w).data(), B, O, I);
      k::axpy(grad_buf(x).data(), tmp.data(), 1.0f, B * I);
    }
    if (requires_grad(w)) {
      std::vector<float> tmp(static_cast<size_t>(I) * O);
      k::mm_tn(tmp.data(), value(x).data(), dy, I, B, O);
      k::axpy(grad_buf(w).data(), tmp.data(), 1.0f, I * O);
    }
    if (requires_grad(bias)) {
      float* db = grad_buf(bias).data();
      for (std::int64_t r = 0; r < B; ++r) {
        k::axpy(db, dy + r * O, 1.0f, O);
      }
    }
  });
  return out;
}

NodeId Graph::conv2d(NodeId x, NodeId w, int ksize, int stride) {
  const Shape& xs = shape(x);
  const Shape& ws = shape(w);
  if (xs.size() != 4) throw ShapeError("conv2d: input must be [B,H,W,C], got " + shape_str(xs));
  const std::int64_t patch = static_cast<std::int64_t>(ksize) * ksize * xs[3];
  if (ws.size() != 2 || ws[0] != patch) {
    throw ShapeError("conv2d: weight must be [" + std::to_string(patch) + ", OC], got " +
                     shape_str(ws));
  }
  const k::ConvGeometry g =
      k::conv_geometry(static_cast<int>(xs[0]), static_cast<int>(xs[1]),
                       static_cast<int>(xs[2]), static_cast<int>(xs[3]), ksize, stride);
  const std::int64_t rows = xs[0] * g.out_h * g.out_w;
  const std::int64_t oc = ws[1];

  auto cols = std::make_shared<std::vector<float>>(static_cast<size_t>(rows) * patch);
  k::im2col(value(x).data(), g, cols->data());

  NodeId out = new_node({xs[0], g.out_h, g.out_w, oc}, requires_grad(x) || requires_grad(w));
  k::mm_nn(val(out).data(), cols->data(), value(w).data(), rows, patch, oc);
  set_back(out, [this, x, w, out, g, cols, rows, patch, oc] {
    const float* dy = grad(out).data();
    if (requires_grad(w)) {
      std::vector<float> tmp(static_cast<size_t>(patch) * oc);
      k::mm_tn(tmp.data(), cols->data(), dy, patch, rows, oc);
      k::axpy(grad_buf(w).data(), tmp.data(), 1.0f, patch * oc);
    }
    if (requires_grad(x)) {
      std::vector<float> dcols(static_cast<size_t>(rows) * patch);
      k::mm_nt(dcols.data(), dy, value(w).data(), rows, oc, patch);
      k::col2im_acc(dcols.data(), g, grad_buf(x).data());
    }
  });
  return out;
}

// ------------------------------------------------------------- shape

NodeId Graph::reshape(NodeId x, Shape shape_) {
  if (numel(shape_) != numel(shape(x))) {
    throw ShapeError("reshape: cannot view " + shape_str(shape(x)) + " as " + shape_str(shape_));
  }
  const std::int64_t n = numel(shape_);
  NodeId out = new_node(std::move(shape_), requires_grad(x));
  val(out) = value(x);
  set_back(out, [this, x, out, n] {
    k::axpy(grad_buf(x).data(), grad(out).data(), 1.0f, n);
  });
  return out;
}

NodeId Graph::slice_cols(NodeId x, std::int64_t c0, std::int64_t c1) {
  const Shape& xs = shape(x);
  if (xs.size() != 2 || c0 < 0 || c1 > xs[1] || c0 >= c1) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") for " + shape_str(xs));
  }
  const std::int64_t B = xs[0], N = xs[1], W = c1 - c0;
  NodeId out = new_node({B, W}, requires_grad(x));
  {
    const float* xv = value(x).data();
    float* yv = val(out).data();
    for (std::int64_t r = 0; r < B; ++r) {
      std::copy(xv + r * N + c0, xv + r * N + c1, yv + r * W);
    }
  }
  set_back(out, [this, x, out, B, N, W, c0] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    for (std::int64_t r = 0; r < B; ++r) {
      k::add(dx + r * N + c0, dx + r * N + c0, dy + r * W, W);
    }
  });
  return out;
}

// ------------------------------------------------------------- spatial

NodeId Graph::upsample_nn2x(NodeId x) {
  const Shape& xs = shape(x);
  if (xs.size() != 4) throw ShapeError("upsample_nn2x: input must be [B,H,W,C]");
  const std::int64_t B = xs[0], H = xs[1], W = xs[2], C = xs[3];
  NodeId out = new_node({B, 2 * H, 2 * W, C}, requires_grad(x));
  {
    const float* xv = value(x).data();
    float* yv = val(out).data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t y = 0; y < 2 * H; ++y) {
        for (std::int64_t xw = 0; xw < 2 * W; ++xw) {
          const float* src = xv + ((b * H + y / 2) * W + xw / 2) * C;
          float* dst = yv + ((b * 2 * H + y) * 2 * W + xw) * C;
          std::copy(src, src + C, dst);
        }
      }
    }
  }
  set_back(out, [this, x, out, B, H, W, C] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t y = 0; y < 2 * H; ++y) {
        for (std::int64_t xw = 0; xw < 2 * W; ++xw) {
          float* dst = dx + ((b * H + y / 2) * W + xw / 2) * C;
          const float* src = dy + ((b * 2 * H + y) * 2 * W + xw) * C;
          for (std::int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  });
  return out;
}

NodeId Graph::max_pool2x2(NodeId x) {
  const Shape& xs = shape(x);
  if (xs.size() != 4 || xs[1] % 2 != 0 || xs[2] % 2 != 0) {
    throw ShapeError("max_pool2x2: input must be [B,H,W,C] with even H and W, got " +
                     shape_str(xs));
  }
  const std::int64_t B = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const std::int64_t OH = H / 2, OW = W / 2;
  NodeId out = new_node({B, OH, OW, C}, requires_grad(x));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<size_t>(numel(shape(out))));
  {
    const float* xv = value(x).data();
    float* yv = val(out).data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t oy = 0; oy < OH; ++oy) {
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          for (std::int64_t c = 0; c < C; ++c) {
            std::int64_t best = ((b * H + 2 * oy) * W + 2 * ox) * C + c;
            float bestv = xv[best];
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::int64_t idx = ((b * H + 2 * oy + dy) * W + 2 * ox + dx) * C + c;
                if (xv[idx] > bestv) {
                  bestv = xv[idx];
                  best = idx;
                }
              }
            }
            const std::int64_t o = ((b * OH + oy) * OW + ox) * C + c;
            yv[o] = bestv;
            (*argmax)[static_cast<size_t>(o)] = best;
          }
        }
      }
    }
  }
  set_back(out, [this, x, out, argmax] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    for (size_t o = 0; o < argmax->size(); ++o) {
      dx[(*argmax)[o]] += dy[o];
    }
  });
  return out;
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Shape& xs = shape(x);
  if (xs.size() != 4) throw ShapeError("global_avg_pool: input must be [B,H,W,C]");
  const std::int64_t B = xs[0], HW = xs[1] * xs[2], C = xs[3];
  NodeId out = new_node({B, C}, requires_grad(x));
  {
    const float* xv = value(x).data();
    float* yv = val(out).data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < HW; ++i) acc += xv[(b * HW + i) * C + c];
        yv[b * C + c] = static_cast<float>(acc / static_cast<double>(HW));
      }
    }
  }
  set_back(out, [this, x, out, B, HW, C] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    const float inv = 1.0f / static_cast<float>(HW);
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t i = 0; i < HW; ++i) {
        for (std::int64_t c = 0; c < C; ++c) {
          dx[(b * HW + i) * C + c] += dy[b * C + c] * inv;
        }
      }
    }
  });
  return out;
}

// ------------------------------------------------------------- stochastic

NodeId Graph::dropout(NodeId x, float rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0f) return x;
  if (rate >= 1.0f) throw Error("dropout: rate must be < 1");
  const std::int64_t n = numel(shape(x));
  const float keep_scale = 1.0f / (1.0f - rate);
  auto mask = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    (*mask)[static_cast<size_t>(i)] = rng.uniform() >= rate ? keep_scale : 0.0f;
  }
  NodeId out = new_node(shape(x), requires_grad(x));
  k::mul(val(out).data(), value(x).data(), mask->data(), n);
  set_back(out, [this, x, out, mask, n] {
    float* dx = grad_buf(x).data();
    const float* dy = grad(out).data();
    const float* mv = mask->data();
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * mv[i];
  });
  return out;
}

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, RunningStats& stats, bool training,
                         float momentum, float eps) {
  const Shape& xs = shape(x);
  if (xs.empty()) throw ShapeError("batch_norm: scalar input");
  const std::int64_t C = xs.back();
  const std::int64_t N = numel(xs) / C;
  if (numel(shape(gamma)) != C || numel(shape(beta)) != C) {
    throw ShapeError("batch_norm: gamma/beta must have " + std::to_string(C) + " elements");
  }
  if (N < 2 && training) throw ShapeError("batch_norm: needs at least 2 rows per channel");

  auto mean = std::make_shared<std::vector<float>>(static_cast<size_t>(C));
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(C));
  const float* xv = value(x).data();

  if (training) {
    for (std::int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < N; ++i) acc += xv[i * C + c];
      const double mu = acc / static_cast<double>(N);
      double sq = 0.0;
      for (std::int64_t i = 0; i < N; ++i) {
        const double d = xv[i * C + c] - mu;
        sq += d * d;
      }
      const double var = sq / static_cast<double>(N);
      (*mean)[static_cast<size_t>(c)] = static_cast<float>(mu);
      (*inv_std)[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
      if (stats.batches == 0) {
        if (stats.mean.empty()) {
          stats.mean.resize(static_cast<size_t>(C));
          stats.var.resize(static_cast<size_t>(C));
        }
        stats.mean[static_cast<size_t>(c)] = static_cast<float>(mu);
        stats.var[static_cast<size_t>(c)] = static_cast<float>(var);
      } else {
        float& rm = stats.mean[static_cast<size_t>(c)];
        float& rv = stats.var[static_cast<size_t>(c)];
        rm = momentum * rm + (1.0f - momentum) * static_cast<float>(mu);
        rv = momentum * rv + (1.0f - momentum) * static_cast<float>(var);
      }
    }
    stats.batches += 1;
  } else {
    if (stats.mean.empty()) throw Error("batch_norm: eval before any training batch");
    for (std::int64_t c = 0; c < C; ++c) {
      (*mean)[static_cast<size_t>(c)] = stats.mean[static_cast<size_t>(c)];
      (*inv_std)[static_cast<size_t>(c)] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(stats.var[static_cast<size_t>(c)]) + eps));
    }
  }

  NodeId out =
      new_node(xs, requires_grad(x) || requires_grad(gamma) || requires_grad(beta));
  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(N * C));
  {
    const float* gv = value(gamma).data();
    const float* bv = value(beta).data();
    float* yv = val(out).data();
    for (std::int64_t i = 0; i < N; ++i) {
      for (std::int64_t c = 0; c < C; ++c) {
        const float h =
            (xv[i * C + c] - (*mean)[static_cast<size_t>(c)]) * (*inv_std)[static_cast<size_t>(c)];
        (*xhat)[static_cast<size_t>(i * C + c)] = h;
        yv[i * C + c] = gv[c] * h + bv[c];
      }
    }
  }

  // Eval mode treats mean/var as constants; training mode backpropagates
  // through the batch statistics.
  set_back(out, [this, x, gamma, beta, out, xhat, inv_std, N, C, training] {
    const float* dy = grad(out).data();
    const float* gv = value(gamma).data();
    if (requires_grad(gamma)) {
      float* dg = grad_buf(gamma).data();
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < N; ++i) {
          acc += static_cast<double>(dy[i * C + c]) * (*xhat)[static_cast<size_t>(i * C + c)];
        }
        dg[c] += static_cast<float>(acc);
      }
    }
    if (requires_grad(beta)) {
      float* db = grad_buf(beta).data();
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < N; ++i) acc += dy[i * C + c];
        db[c] += static_cast<float>(acc);
      }
    }
    if (requires_grad(x)) {
      float* dx = grad_buf(x).data();
      if (!training) {
        for (std::int64_t i = 0; i < N; ++i) {
          for (std::int64_t c = 0; c < C; ++c) {
            dx[i * C + c] += dy[i * C + c] * gv[c] * (*inv_std)[static_cast<size_t>(c)];
          }
        }
        return;
      }
      for (std::int64_t c = 0; c < C; ++c) {
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::int64_t i = 0; i < N; ++i) {
          const double dh = static_cast<double>(dy[i * C + c]) * gv[c];
          sum_dh += dh;
          sum_dh_h += dh * (*xhat)[static_cast<size_t>(i * C + c)];
        }
        const double istd = (*inv_std)[static_cast<size_t>(c)];
        const double invN = 1.0 / static_cast<double>(N);
        for (std::int64_t i = 0; i < N; ++i) {
          const double dh = static_cast<double>(dy[i * C + c]) * gv[c];
          const double h = (*xhat)[static_cast<size_t>(i * C + c)];
          dx[i * C + c] += static_cast<float>(istd * (dh - invN * sum_dh - h * invN * sum_dh_h));
        }
      }
    }
  });
  return out;
}

// ------------------------------------------------------------- heads

NodeId Graph::softmax_t(NodeId logits, double temperature) {
  const Shape& xs = shape(logits);
  if (xs.size() != 2) throw ShapeError("softmax_t: input must be [B,N]");
  if (temperature <= 0.0) throw Error("softmax_t: temperature must be positive");
  const std::int64_t B = xs[0], N = xs[1];
  NodeId out = new_node(xs, requires_grad(logits));
  {
    const float* xv = value(logits).data();
    float* yv = val(out).data();
    std::vector<double> row(static_cast<size_t>(N));
    for (std::int64_t b = 0; b < B; ++b) {
      double mx = -1e300;
      for (std::int64_t j = 0; j < N; ++j) {
        row[static_cast<size_t>(j)] = static_cast<double>(xv[b * N + j]) / temperature;
        mx = std::max(mx, row[static_cast<size_t>(j)]);
      }
      double denom = 0.0;
      for (std::int64_t j = 0; j < N; ++j) {
        row[static_cast<size_t>(j)] = std::exp(row[static_cast<size_t>(j)] - mx);
        denom += row[static_cast<size_t>(j)];
      }
      for (std::int64_t j = 0; j < N; ++j) {
        yv[b * N + j] = static_cast<float>(row[static_cast<size_t>(j)] / denom);
      }
    }
  }
  set_back(out, [this, logits, out, B, N, temperature] {
    float* dx = grad_buf(logits).data();
    const float* dy = grad(out).data();
    const float* yv = value(out).data();
    for (std::int64_t b = 0; b < B; ++b) {
      double s = 0.0;
      for (std::int64_t j = 0; j < N; ++j) {
        s += static_cast<double>(dy[b * N + j]) * yv[b * N + j];
      }
      for (std::int64_t j = 0; j < N; ++j) {
        dx[b * N + j] += static_cast<float>(
            static_cast<double>(yv[b * N + j]) * (dy[b * N + j] - s) / temperature);
      }
    }
  });
  return out;
}

NodeId Graph::cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const Shape& xs = shape(logits);
  if (xs.size() != 2) throw ShapeError("cross_entropy: logits must be [B,N]");
  const std::int64_t B = xs[0], N = xs[1];
  if (static_cast<std::int64_t>(labels.size()) != B) {
    throw ShapeError("cross_entropy: expected " + std::to_string(B) + " labels");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= N) throw Error("cross_entropy: label out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(B * N));
  double loss = 0.0;
  {
    const float* xv = value(logits).data();
    for (std::int64_t b = 0; b < B; ++b) {
      double mx = -1e300;
      for (std::int64_t j = 0; j < N; ++j) mx = std::max(mx, static_cast<double>(xv[b * N + j]));
      double denom = 0.0;
      for (std::int64_t j = 0; j < N; ++j) {
        const double e = std::exp(static_cast<double>(xv[b * N + j]) - mx);
        (*probs)[static_cast<size_t>(b * N + j)] = e;
        denom += e;
      }
      for (std::int64_t j = 0; j < N; ++j) (*probs)[static_cast<size_t>(b * N + j)] /= denom;
      loss -= std::log((*probs)[static_cast<size_t>(b * N + labels[static_cast<size_t>(b)])]);
    }
    loss /= static_cast<double>(B);
  }
  NodeId out = new_node({1}, requires_grad(logits));
  val(out)[0] = static_cast<float>(loss);
  nodes_.back().has_hi = true;
  nodes_.back().hi_value = loss;
  auto labs = std::make_shared<std::vector<int>>(labels);
  set_back(out, [this, logits, out, probs, labs, B, N] {
    const float g = grad(out)[0];
    float* dx = grad_buf(logits).data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t j = 0; j < N; ++j) {
        const double onehot = (j == (*labs)[static_cast<size_t>(b)]) ? 1.0 : 0.0;
        dx[b * N + j] += static_cast<float>(
            g * ((*probs)[static_cast<size_t>(b * N + j)] - onehot) / static_cast<double>(B));
      }
    }
  });
  return out;
}

NodeId Graph::mean_all(NodeId x) {
  const std::int64_t n = numel(shape(x));
  NodeId out = new_node({1}, requires_grad(x));
  const double mean = k::sum(value(x).data(), n) / static_cast<double>(n);
  val(out)[0] = static_cast<float>(mean);
  nodes_.back().has_hi = true;
  nodes_.back().hi_value = mean;
  set_back(out, [this, x, out, n] {
    const float g = grad(out)[0] / static_cast<float>(n);
    float* dx = grad_buf(x).data();
    for (std::int64_t i = 0; i < n; ++i) dx[i] += g;
  });
  return out;
}

// ------------------------------------------------------------- execution

void Graph::backward(NodeId root, float seed) {
  if (!record_) throw Error("backward: graph was built with record=false");
  if (numel(shape(root)) != 1) {
    throw ShapeError("backward: root must be scalar, has shape " + shape_str(shape(root)));
  }
  if (!nodes_[static_cast<size_t>(root)].requires_grad) {
    throw Error("backward: root does not depend on any trainable leaf");
  }
  grad_buf(root)[0] += seed;
  for (std::int64_t id = static_cast<std::int64_t>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.back && !n.grad.empty()) n.back();
  }
}

}  // namespace pirtune
