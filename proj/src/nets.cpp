#include "pirtune/nets.hpp"

#include <algorithm>

#include "pirtune/errors.hpp"
#include "pirtune/kernels.hpp"

namespace pirtune {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kReshape: return "reshape";
    case LayerKind::kUpsample2x: return "upsample2x";
    case LayerKind::kMaxPool2x2: return "max_pool2x2";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kBatchNorm: return "batch_norm";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kTanh: return "tanh";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kTap: return "tap";
  }
  return "unknown";
}

namespace {

[[noreturn]] void spec_error(const NetworkSpec& spec, const LayerDef& layer,
                             const std::string& why) {
  throw ShapeError(spec.name + ": layer " + layer.name + " (" +
                   layer_kind_name(layer.kind) + "): " + why);
}

Shape step_shape(const NetworkSpec& spec, const LayerDef& layer, Shape cur) {
  switch (layer.kind) {
    case LayerKind::kDense:
      if (cur.size() != 1 || cur[0] != layer.in) {
        spec_error(spec, layer, "expected flat input of width " +
                                    std::to_string(layer.in) + ", got " +
                                    shape_str(cur));
      }
      return {layer.out};
    case LayerKind::kConv: {
      if (cur.size() != 3 || cur[2] != layer.in) {
        spec_error(spec, layer, "expected [H,W," + std::to_string(layer.in) +
                                    "] input, got " + shape_str(cur));
      }
      auto geo = kernels::conv_geometry(1, cur[0], cur[1], layer.in,
                                        layer.ksize, layer.stride);
      return {geo.out_h, geo.out_w, layer.out};
    }
    case LayerKind::kReshape:
      if (numel(cur) != numel(layer.target)) {
        spec_error(spec, layer, "cannot reshape " + shape_str(cur) + " to " +
                                    shape_str(layer.target));
      }
      return layer.target;
    case LayerKind::kUpsample2x:
      if (cur.size() != 3) spec_error(spec, layer, "expected [H,W,C] input");
      return {cur[0] * 2, cur[1] * 2, cur[2]};
    case LayerKind::kMaxPool2x2:
      if (cur.size() != 3 || cur[0] % 2 != 0 || cur[1] % 2 != 0) {
        spec_error(spec, layer, "expected [H,W,C] input with even H, W; got " +
                                    shape_str(cur));
      }
      return {cur[0] / 2, cur[1] / 2, cur[2]};
    case LayerKind::kGlobalAvgPool:
      if (cur.size() != 3) spec_error(spec, layer, "expected [H,W,C] input");
      return {cur[2]};
    case LayerKind::kBatchNorm:
      if (cur.empty() || cur.back() != layer.out) {
        spec_error(spec, layer, "expected trailing channel dim " +
                                    std::to_string(layer.out) + ", got " +
                                    shape_str(cur));
      }
      return cur;
    case LayerKind::kLeakyRelu:
    case LayerKind::kRelu:
    case LayerKind::kTanh:
    case LayerKind::kDropout:
    case LayerKind::kTap:
      return cur;
  }
  spec_error(spec, layer, "unknown layer kind");
}

}  // namespace

std::vector<std::pair<std::string, Shape>> validate_spec(const NetworkSpec& spec) {
  std::vector<std::pair<std::string, Shape>> taps;
  Shape cur = spec.input_shape;
  for (const LayerDef& layer : spec.layers) {
    cur = step_shape(spec, layer, cur);
    if (layer.kind == LayerKind::kTap) taps.emplace_back(layer.name, cur);
  }
  if (cur != spec.output_shape) {
    throw ShapeError(spec.name + ": layers produce " + shape_str(cur) +
                     " but spec declares output " + shape_str(spec.output_shape));
  }
  return taps;
}

std::vector<LayerKind> layer_kinds(const NetworkSpec& spec) {
  std::vector<LayerKind> kinds;
  kinds.reserve(spec.layers.size());
  for (const auto& layer : spec.layers) kinds.push_back(layer.kind);
  return kinds;
}

PresetConfig preset_config(ScalePreset preset) {
  switch (preset) {
    case ScalePreset::kDesk:
      return {ScalePreset::kDesk, "desk",  16, 32, 2,
              {128, 64, 32, 3},   {16, 32, 64}, {2, 1, 2},
              20000, 10000, 5000, 2500};
    case ScalePreset::kPaper:
      return {ScalePreset::kPaper, "paper", 64, 64, 2,
              {512, 512, 256, 128, 64, 3},
              {16, 32, 64, 128, 256, 512}, {2, 1, 2, 1, 2, 1},
              1100000, 10000, 50000, 25000};
  }
  throw ConfigError("unknown scale preset");
}

ScalePreset parse_preset(const std::string& name) {
  if (name == "desk") return ScalePreset::kDesk;
  if (name == "paper") return ScalePreset::kPaper;
  throw ConfigError("unknown preset '" + name + "', expected desk or paper");
}

NetworkSpec build_generator(ScalePreset preset, bool conditional) {
  PresetConfig cfg = preset_config(preset);
  NetworkSpec spec;
  spec.name = "generator";
  spec.conditional = conditional;
  spec.num_classes = cfg.num_classes;
  const std::int64_t in_width =
      cfg.latent + (conditional ? cfg.num_classes : 0);
  spec.input_shape = {in_width};
  spec.output_shape = {cfg.image_size, cfg.image_size, 3};

  const std::int64_t d0 = cfg.gen_depths[0];
  spec.layers.push_back({LayerKind::kDense, "fc", in_width, 4 * 4 * d0,
                         0, 0, 0.0f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kLeakyRelu, "fc_act", 0, 0, 0, 0, 0.2f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kReshape, "to_map", 0, 0, 0, 0, 0.0f, 0.0f,
                         Shape{4, 4, d0}});

  std::int64_t depth = d0;
  const size_t stages = cfg.gen_depths.size() - 1;
  for (size_t s = 1; s <= stages; ++s) {
    if (s > 1) {
      spec.layers.push_back({LayerKind::kUpsample2x, "up" + std::to_string(s),
                             0, 0, 0, 0, 0.0f, 0.0f, {}});
    }
    const std::int64_t out = cfg.gen_depths[s];
    spec.layers.push_back({LayerKind::kConv, "conv" + std::to_string(s), depth,
                           out, 3, 1, 0.0f, 0.0f, {}});
    if (s < stages) {
      spec.layers.push_back({LayerKind::kLeakyRelu, "act" + std::to_string(s),
                             0, 0, 0, 0, 0.2f, 0.0f, {}});
    } else {
      spec.layers.push_back({LayerKind::kTanh, "out_act", 0, 0, 0, 0, 0.0f, 0.0f, {}});
    }
    depth = out;
  }
  validate_spec(spec);
  return spec;
}

NetworkSpec build_discriminator(ScalePreset preset, bool conditional) {
  PresetConfig cfg = preset_config(preset);
  NetworkSpec spec;
  spec.name = "discriminator";
  spec.conditional = conditional;
  spec.num_classes = cfg.num_classes;
  spec.input_shape = {cfg.image_size, cfg.image_size, 3};
  const std::int64_t out_width = 1 + (conditional ? cfg.num_classes : 0);
  spec.output_shape = {out_width};

  std::int64_t depth = 3;
  std::int64_t size = cfg.image_size;
  for (size_t i = 0; i < cfg.disc_depths.size(); ++i) {
    const std::int64_t out = cfg.disc_depths[i];
    const int stride = cfg.disc_strides[i];
    const std::string n = std::to_string(i + 1);
    spec.layers.push_back({LayerKind::kConv, "conv" + n, depth, out, 3, stride,
                           0.0f, 0.0f, {}});
    spec.layers.push_back({LayerKind::kBatchNorm, "bn" + n, 0, out, 0, 0, 0.0f,
                           0.0f, {}});
    spec.layers.push_back({LayerKind::kLeakyRelu, "act" + n, 0, 0, 0, 0, 0.2f,
                           0.0f, {}});
    if (i % 2 == 0) {
      spec.layers.push_back({LayerKind::kDropout, "drop" + n, 0, 0, 0, 0, 0.0f,
                             0.3f, {}});
    }
    depth = out;
    size = (size + stride - 1) / stride;
  }
  spec.layers.push_back({LayerKind::kReshape, "flatten", 0, 0, 0, 0, 0.0f, 0.0f,
                         Shape{size * size * depth}});
  spec.layers.push_back({LayerKind::kDense, "head", size * size * depth,
                         out_width, 0, 0, 0.0f, 0.0f, {}});
  validate_spec(spec);
  return spec;
}

NetworkSpec build_estimator(ScalePreset preset) {
  PresetConfig cfg = preset_config(preset);
  NetworkSpec spec;
  spec.name = "estimator";
  spec.input_shape = {cfg.image_size, cfg.image_size, 3};
  spec.output_shape = {100};

  const std::int64_t depths[] = {32, 64, 128, 256};
  std::int64_t depth = 3;
  for (size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    spec.layers.push_back({LayerKind::kConv, "conv" + n, depth, depths[i], 3, 2,
                           0.0f, 0.0f, {}});
    spec.layers.push_back({LayerKind::kLeakyRelu, "act" + n, 0, 0, 0, 0, 0.2f,
                           0.0f, {}});
    depth = depths[i];
  }
  spec.layers.push_back({LayerKind::kGlobalAvgPool, "gap", 0, 0, 0, 0, 0.0f,
                         0.0f, {}});
  spec.layers.push_back({LayerKind::kDense, "fc", depth, 100, 0, 0, 0.0f, 0.0f,
                         {}});
  validate_spec(spec);
  return spec;
}

NetworkSpec build_oracle(ScalePreset preset) {
  PresetConfig cfg = preset_config(preset);
  NetworkSpec spec;
  spec.name = "oracle";
  spec.num_classes = cfg.num_classes;
  spec.input_shape = {cfg.image_size, cfg.image_size, 3};
  spec.output_shape = {cfg.num_classes};

  const std::int64_t depths[] = {16, 32, 64, 128};
  std::int64_t depth = 3;
  std::int64_t size = cfg.image_size;
  for (size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    spec.layers.push_back({LayerKind::kConv, "conv" + n, depth, depths[i], 3, 1,
                           0.0f, 0.0f, {}});
    spec.layers.push_back({LayerKind::kRelu, "act" + n, 0, 0, 0, 0, 0.0f, 0.0f, {}});
    spec.layers.push_back({LayerKind::kTap, "conv" + n, 0, 0, 0, 0, 0.0f, 0.0f, {}});
    if (i < 3) {
      spec.layers.push_back({LayerKind::kMaxPool2x2, "pool" + n, 0, 0, 0, 0,
                             0.0f, 0.0f, {}});
      size /= 2;
    }
    depth = depths[i];
  }
  spec.layers.push_back({LayerKind::kReshape, "flatten", 0, 0, 0, 0, 0.0f, 0.0f,
                         Shape{size * size * depth}});
  spec.layers.push_back({LayerKind::kDense, "fc1", size * size * depth, 64, 0,
                         0, 0.0f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kRelu, "fc1_act", 0, 0, 0, 0, 0.0f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kTap, "fc1", 0, 0, 0, 0, 0.0f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kDense, "fc2", 64, cfg.num_classes, 0, 0,
                         0.0f, 0.0f, {}});
  spec.layers.push_back({LayerKind::kTap, "fc_out", 0, 0, 0, 0, 0.0f, 0.0f, {}});
  validate_spec(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// NetworkState
// ---------------------------------------------------------------------------

namespace {

void fill_truncated_normal(Tensor& t, Rng& rng) {
  for (auto& v : t.data) v = rng.truncated_normal_f(0.0f, 0.02f);
}

}  // namespace

NetworkState::NetworkState(NetworkSpec spec, Rng& rng) : spec_(std::move(spec)) {
  validate_spec(spec_);
  auto add_param = [this](const std::string& name, Shape shape) -> Tensor& {
    param_index_.emplace(name, params_.size());
    params_.push_back({name, Tensor(std::move(shape)), true});
    return params_.back().tensor;
  };
  for (const LayerDef& layer : spec_.layers) {
    switch (layer.kind) {
      case LayerKind::kDense: {
        Tensor& w = add_param(layer.name + ".w", {layer.in, layer.out});
        fill_truncated_normal(w, rng);
        add_param(layer.name + ".b", {layer.out});
        break;
      }
      case LayerKind::kConv: {
        Tensor& w = add_param(
            layer.name + ".w",
            {static_cast<std::int64_t>(layer.ksize) * layer.ksize * layer.in,
             layer.out});
        fill_truncated_normal(w, rng);
        break;
      }
      case LayerKind::kBatchNorm: {
        Tensor& gamma = add_param(layer.name + ".gamma", {layer.out});
        std::fill(gamma.data.begin(), gamma.data.end(), 1.0f);
        add_param(layer.name + ".beta", {layer.out});
        RunningStats stats;
        stats.mean.assign(static_cast<size_t>(layer.out), 0.0f);
        stats.var.assign(static_cast<size_t>(layer.out), 1.0f);
        stats_index_.emplace(layer.name, stats_.size());
        stats_.emplace_back(layer.name, std::move(stats));
        break;
      }
      default:
        break;
    }
  }
}

Param& NetworkState::param(const std::string& name) {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) {
    throw Error(spec_.name + ": no parameter named " + name);
  }
  return params_[it->second];
}

const Param& NetworkState::param(const std::string& name) const {
  return const_cast<NetworkState*>(this)->param(name);
}

RunningStats& NetworkState::stats(const std::string& name) {
  auto it = stats_index_.find(name);
  if (it == stats_index_.end()) {
    throw Error(spec_.name + ": no running stats named " + name);
  }
  return stats_[it->second].second;
}

void NetworkState::freeze() {
  for (Param& p : params_) p.trainable = false;
}

bool NetworkState::frozen() const {
  return std::none_of(params_.begin(), params_.end(),
                      [](const Param& p) { return p.trainable; });
}

std::int64_t NetworkState::total_parameters() const {
  std::int64_t n = 0;
  for (const Param& p : params_) n += p.tensor.size();
  return n;
}

Checkpoint NetworkState::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.put_string("net", spec_.name);
  for (const Param& p : params_) ckpt.put_tensor(p.name, p.tensor);
  for (const auto& [name, stats] : stats_) ckpt.put_stats(name, stats);
  for (const Param& p : params_) {
    ckpt.put_int("trainable." + p.name, p.trainable ? 1 : 0);
  }
  return ckpt;
}

NetworkState NetworkState::from_checkpoint(NetworkSpec spec,
                                           const Checkpoint& ckpt) {
  if (ckpt.text("net") != spec.name) {
    throw IoError("checkpoint holds net '" + ckpt.text("net") +
                  "', expected '" + spec.name + "'");
  }
  Rng unused(0);
  NetworkState state(std::move(spec), unused);
  for (Param& p : state.params_) {
    const Tensor& stored = ckpt.tensor(p.name);
    if (stored.shape != p.tensor.shape) {
      throw ShapeError(state.spec_.name + ": checkpoint tensor " + p.name +
                       " has shape " + shape_str(stored.shape) + ", spec needs " +
                       shape_str(p.tensor.shape));
    }
    p.tensor = stored;
    p.trainable = ckpt.integer("trainable." + p.name) != 0;
  }
  for (auto& [name, stats] : state.stats_) {
    const RunningStats& stored = ckpt.stats(name);
    if (stored.mean.size() != stats.mean.size()) {
      throw ShapeError(state.spec_.name + ": checkpoint stats " + name +
                       " has width " + std::to_string(stored.mean.size()));
    }
    stats = stored;
  }
  return state;
}

// ---------------------------------------------------------------------------
// BoundNet
// ---------------------------------------------------------------------------

NodeId Activations::tap(const std::string& name) const {
  for (const auto& [tap_name, id] : taps) {
    if (tap_name == name) return id;
  }
  throw Error("no tap named " + name);
}

BoundNet::BoundNet(Graph& g, NetworkState& state, bool with_grads)
    : g_(&g), state_(&state) {
  for (const Param& p : state.params()) {
    leaves_.emplace(p.name, g.leaf(p.tensor, with_grads && p.trainable));
  }
}

NodeId BoundNet::param_leaf(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) {
    throw Error(state_->spec().name + ": no bound parameter named " + name);
  }
  return it->second;
}

Activations BoundNet::forward(NodeId input, bool training, Rng* dropout_rng,
                              bool update_stats) {
  Graph& g = *g_;
  const NetworkSpec& spec = state_->spec();
  const Shape& in_shape = g.shape(input);
  if (in_shape.size() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(),
                  in_shape.begin() + 1)) {
    throw ShapeError(spec.name + ": forward input " + shape_str(in_shape) +
                     " does not match spec input " + shape_str(spec.input_shape));
  }
  const std::int64_t batch = in_shape[0];

  Activations acts;
  NodeId x = input;
  for (const LayerDef& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::kDense:
        x = g.dense(x, param_leaf(layer.name + ".w"),
                    param_leaf(layer.name + ".b"));
        break;
      case LayerKind::kConv:
        x = g.conv2d(x, param_leaf(layer.name + ".w"), layer.ksize,
                     layer.stride);
        break;
      case LayerKind::kReshape: {
        Shape target{batch};
        target.insert(target.end(), layer.target.begin(), layer.target.end());
        x = g.reshape(x, std::move(target));
        break;
      }
      case LayerKind::kUpsample2x:
        x = g.upsample_nn2x(x);
        break;
      case LayerKind::kMaxPool2x2:
        x = g.max_pool2x2(x);
        break;
      case LayerKind::kGlobalAvgPool:
        x = g.global_avg_pool(x);
        break;
      case LayerKind::kBatchNorm:
        if (training && !update_stats) {
          // batch_norm only touches the stats during this call; backward keeps
          // its own copies of the batch moments, so a scratch copy is safe.
          RunningStats scratch = state_->stats(layer.name);
          x = g.batch_norm(x, param_leaf(layer.name + ".gamma"),
                           param_leaf(layer.name + ".beta"), scratch, true);
        } else {
          x = g.batch_norm(x, param_leaf(layer.name + ".gamma"),
                           param_leaf(layer.name + ".beta"),
                           state_->stats(layer.name), training);
        }
        break;
      case LayerKind::kLeakyRelu:
        x = g.leaky_relu(x, layer.alpha);
        break;
      case LayerKind::kRelu:
        x = g.leaky_relu(x, 0.0f);
        break;
      case LayerKind::kTanh:
        x = g.tanh(x);
        break;
      case LayerKind::kDropout:
        if (training && layer.rate > 0.0f) {
          if (dropout_rng == nullptr) {
            throw Error(spec.name + ": training forward needs a dropout rng");
          }
          x = g.dropout(x, layer.rate, true, *dropout_rng);
        }
        break;
      case LayerKind::kTap:
        acts.taps.emplace_back(layer.name, x);
        break;
    }
  }
  acts.output = x;
  return acts;
}

}  // namespace pirtune
