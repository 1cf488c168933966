#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pirtune/checkpoint.hpp"
#include "pirtune/graph.hpp"
#include "pirtune/rng.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

// Declarative network descriptions. A NetworkSpec is a validated list of
// layers; a NetworkState owns the parameter tensors and batch norm running
// statistics for one spec. BoundNet stitches a state into a Graph for one
// forward/backward pass.

enum class LayerKind {
  kDense,
  kConv,
  kReshape,
  kUpsample2x,
  kMaxPool2x2,
  kGlobalAvgPool,
  kBatchNorm,
  kLeakyRelu,
  kRelu,
  kTanh,
  kDropout,
  kTap,
};

const char* layer_kind_name(LayerKind kind);

struct LayerDef {
  LayerKind kind;
  std::string name;      // parameter prefix (dense/conv/bn) or tap label
  std::int64_t in = 0;   // dense input width / conv input channels
  std::int64_t out = 0;  // dense output width / conv output channels / bn channels
  int ksize = 0;
  int stride = 0;
  float alpha = 0.0f;    // leaky relu slope
  float rate = 0.0f;     // dropout rate
  Shape target;          // reshape target, per sample
};

struct NetworkSpec {
  std::string name;
  bool conditional = false;
  std::int64_t num_classes = 0;
  Shape input_shape;   // per sample
  Shape output_shape;  // per sample
  std::vector<LayerDef> layers;
};

// Walks the layer list from input_shape, checking that consecutive shapes
// compose and that the final shape equals output_shape. Returns the shape at
// each tap. Throws ShapeError with the offending layer's name.
std::vector<std::pair<std::string, Shape>> validate_spec(const NetworkSpec& spec);

std::vector<LayerKind> layer_kinds(const NetworkSpec& spec);

// ---------------------------------------------------------------------------
// Scale presets
// ---------------------------------------------------------------------------

enum class ScalePreset { kDesk, kPaper };

struct PresetConfig {
  ScalePreset preset;
  std::string name;
  std::int64_t image_size;
  std::int64_t latent;
  std::int64_t num_classes;
  std::vector<std::int64_t> gen_depths;   // dense map depth, then stage depths
  std::vector<std::int64_t> disc_depths;
  std::vector<int> disc_strides;
  std::int64_t pretrain_steps;
  std::int64_t estimator_steps;
  std::int64_t tune_steps;
  std::int64_t iterate_estimator_steps;
};

PresetConfig preset_config(ScalePreset preset);
ScalePreset parse_preset(const std::string& name);

NetworkSpec build_generator(ScalePreset preset, bool conditional);
NetworkSpec build_discriminator(ScalePreset preset, bool conditional);
NetworkSpec build_estimator(ScalePreset preset);
NetworkSpec build_oracle(ScalePreset preset);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct Param {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

class NetworkState {
 public:
  NetworkState() = default;
  // Initializes parameters from the spec: weights truncated normal (std
  // 0.02), biases and bn shifts zero, bn scales one.
  NetworkState(NetworkSpec spec, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
  RunningStats& stats(const std::string& name);
  const std::vector<std::pair<std::string, RunningStats>>& all_stats() const {
    return stats_;
  }
  std::vector<std::pair<std::string, RunningStats>>& all_stats() {
    return stats_;
  }

  void freeze();
  bool frozen() const;
  std::int64_t total_parameters() const;

  Checkpoint to_checkpoint() const;
  static NetworkState from_checkpoint(NetworkSpec spec, const Checkpoint& ckpt);

 private:
  NetworkSpec spec_;
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> param_index_;
  std::vector<std::pair<std::string, RunningStats>> stats_;
  std::unordered_map<std::string, size_t> stats_index_;
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct Activations {
  NodeId output = -1;
  std::vector<std::pair<std::string, NodeId>> taps;
  NodeId tap(const std::string& name) const;
};

// Binds a state's parameters into a graph as leaves, created once so that
// several forward calls (e.g. the discriminator on real and fake batches)
// accumulate gradients into the same leaves. with_grads=false binds every
// parameter as a constant regardless of its trainable flag.
class BoundNet {
 public:
  BoundNet(Graph& g, NetworkState& state, bool with_grads = true);

  // update_stats=false keeps training-mode batch statistics in batch_norm but
  // leaves the state's running stats untouched, for passes that train some
  // other network through this one.
  Activations forward(NodeId input, bool training = false,
                      Rng* dropout_rng = nullptr, bool update_stats = true);
  NodeId param_leaf(const std::string& name) const;
  NetworkState& state() { return *state_; }

 private:
  Graph* g_;
  NetworkState* state_;
  std::unordered_map<std::string, NodeId> leaves_;
};

}  // namespace pirtune
