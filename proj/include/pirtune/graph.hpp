#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pirtune/rng.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

using NodeId = std::int32_t;

// Per-channel statistics a batch-norm layer accumulates during training and
// reads back at evaluation time. Owned by the network state, not the graph.
struct RunningStats {
  std::vector<float> mean;
  std::vector<float> var;
  std::int64_t batches = 0;
};

// Define-by-run reverse-mode tape. A Graph instance records one forward
// pass; backward() replays the recorded closures in reverse creation order.
// Rebuild a fresh Graph every step; parameters live outside as Tensors and
// enter through leaf().
//
// Gradients flow only into nodes whose requires_grad is set; leaves created
// with requires_grad=false (frozen parameters, constants) never allocate a
// gradient buffer and their upstream matmuls skip the corresponding
// gradient kernel entirely. A Graph built with record=false keeps values
// only (inference mode).
//
// Image tensors are NHWC throughout: [batch, height, width, channels].
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ------------------------------------------------------------- leaves
  NodeId leaf(const Tensor& t, bool requires_grad = false);
  NodeId leaf(Shape shape, std::vector<float> data, bool requires_grad = false);

  // ------------------------------------------------------------- elementwise
  NodeId add(NodeId a, NodeId b);
  // a + alpha * b
  NodeId add_scaled(NodeId a, NodeId b, float alpha);
  NodeId mul(NodeId a, NodeId b);
  // a * x + b, scalars applied elementwise
  NodeId affine(NodeId x, float a, float b);
  NodeId leaky_relu(NodeId x, float alpha);
  NodeId tanh(NodeId x);
  NodeId log(NodeId x);
  // Gradient passes only where x was not clipped.
  NodeId clamp(NodeId x, float lo, float hi);

  // ------------------------------------------------------------- linear
  // a:[M,K] b:[K,N] -> [M,N]
  NodeId matmul(NodeId a, NodeId b);
  // x:[B,I] w:[I,O] bias:[O] -> [B,O]
  NodeId dense(NodeId x, NodeId w, NodeId bias);
  // x:[B,H,W,C], w:[ksize*ksize*C, OC], SAME zero padding, no bias.
  NodeId conv2d(NodeId x, NodeId w, int ksize, int stride);

  // ------------------------------------------------------------- shape
  NodeId reshape(NodeId x, Shape shape);
  // x:[B,N] -> [B, c1-c0]
  NodeId slice_cols(NodeId x, std::int64_t c0, std::int64_t c1);

  // ------------------------------------------------------------- spatial
  NodeId upsample_nn2x(NodeId x);
  // 2x2 window, stride 2; height and width must be even. Ties route the
  // gradient to the first maximum in scan order.
  NodeId max_pool2x2(NodeId x);
  // [B,H,W,C] -> [B,C]
  NodeId global_avg_pool(NodeId x);

  // ------------------------------------------------------------- stochastic
  // Inverted dropout: scales kept activations by 1/(1-rate) during
  // training, identity when training=false.
  NodeId dropout(NodeId x, float rate, bool training, Rng& rng);

  // Batch normalization over all but the last axis. Training mode uses
  // batch statistics (biased variance) and pushes them into `stats` with
  // the given momentum; eval mode reads `stats`.
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, RunningStats& stats, bool training,
                    float momentum = 0.99f, float eps = 1e-5f);

  // ------------------------------------------------------------- heads
  // Rowwise softmax(logits / temperature); internals in double so extreme
  // temperatures stay finite.
  NodeId softmax_t(NodeId logits, double temperature);
  // Mean negative log-likelihood of integer labels under softmax(logits).
  NodeId cross_entropy(NodeId logits, const std::vector<int>& labels);
  // Scalar mean over every element.
  NodeId mean_all(NodeId x);

  // ------------------------------------------------------------- execution
  // Seeds d(root)/d(root) = seed and propagates. Root must be scalar.
  void backward(NodeId root, float seed = 1.0f);

  const Shape& shape(NodeId id) const { return nodes_[static_cast<size_t>(id)].shape; }
  const std::vector<float>& value(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].value;
  }
  float scalar(NodeId id) const;
  // Scalar value before the final float rounding, for heads that reduce in
  // double (mean_all, cross_entropy). Falls back to the float value.
  double scalar_hi(NodeId id) const;
  // Gradient buffer; empty if no gradient reached the node.
  const std::vector<float>& grad(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].grad;
  }
  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }
  Tensor value_tensor(NodeId id) const {
    return Tensor(shape(id), value(id));
  }
  std::int64_t node_count() const { return static_cast<std::int64_t>(nodes_.size()); }

 private:
  struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
    bool has_hi = false;
    double hi_value = 0.0;
    std::function<void()> back;
  };

  NodeId new_node(Shape shape, bool requires_grad);
  std::vector<float>& val(NodeId id) { return nodes_[static_cast<size_t>(id)].value; }
  // Gradient accumulation target, allocated (zeroed) on first touch.
  std::vector<float>& grad_buf(NodeId id);
  void set_back(NodeId id, std::function<void()> fn);
  void check_same_shape(NodeId a, NodeId b, const char* op) const;

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace pirtune
