#include "pirtune/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pirtune/errors.hpp"
#include "pirtune/graph.hpp"
#include "pirtune/optim.hpp"
#include "pirtune/rng.hpp"

namespace pirtune {

namespace {

float jittered(Rng& rng, float base, float amount) {
  return base + static_cast<float>(rng.uniform() * 2.0 - 1.0) * amount;
}

float uniform_in(Rng& rng, float lo, float hi) {
  return lo + static_cast<float>(rng.uniform()) * (hi - lo);
}

void paint_image(float* px, std::int64_t size, int label, Rng& rng) {
  const auto at = [&](std::int64_t y, std::int64_t x, int c) -> float& {
    return px[(y * size + x) * 3 + c];
  };

  // Sky gradient shared by both classes, hue-jittered per image.
  const float jitter = jittered(rng, 0.0f, 0.06f);
  const float top[3] = {0.35f + jitter, 0.55f + jitter, 0.85f};
  const float horizon[3] = {0.75f + jitter, 0.80f + jitter, 0.92f};
  for (std::int64_t y = 0; y < size; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(size - 1);
    for (std::int64_t x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) at(y, x, c) = top[c] + t * (horizon[c] - top[c]);
    }
  }

  if (label == 0) {
    // Mountains: one to three dark triangles anchored on the bottom edge.
    const int count = 1 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < count; ++k) {
      const float cx = uniform_in(rng, 0.1f, 0.9f) * static_cast<float>(size - 1);
      const float half_w = uniform_in(rng, 0.18f, 0.45f) * static_cast<float>(size);
      const float apex_y = uniform_in(rng, 0.15f, 0.55f) * static_cast<float>(size - 1);
      const float shade = uniform_in(rng, 0.16f, 0.34f);
      const float rock[3] = {shade, shade * 0.92f, shade * 0.85f};
      for (std::int64_t y = 0; y < size; ++y) {
        if (static_cast<float>(y) < apex_y) continue;
        const float rise = (static_cast<float>(y) - apex_y) /
                           (static_cast<float>(size - 1) - apex_y + 1e-6f);
        const float w_row = half_w * rise;
        for (std::int64_t x = 0; x < size; ++x) {
          if (std::abs(static_cast<float>(x) - cx) <= w_row) {
            for (int c = 0; c < 3; ++c) at(y, x, c) = rock[c];
          }
        }
      }
    }
  } else {
    // Coast: water band with a distinct hue below a horizon line.
    const std::int64_t horizon_y = static_cast<std::int64_t>(
        uniform_in(rng, 0.40f, 0.65f) * static_cast<float>(size));
    const float depth_shade = uniform_in(rng, 0.0f, 0.10f);
    const float water_top[3] = {0.12f + jitter * 0.5f, 0.45f, 0.55f};
    const float water_bot[3] = {0.08f, 0.32f - depth_shade, 0.45f - depth_shade};
    for (std::int64_t y = horizon_y; y < size; ++y) {
      const float t = static_cast<float>(y - horizon_y) /
                      static_cast<float>(size - horizon_y);
      for (std::int64_t x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) {
          at(y, x, c) = water_top[c] + t * (water_bot[c] - water_top[c]);
        }
      }
    }
  }

  // Noise texture, then map [0,1] -> [-1,1].
  for (std::int64_t i = 0; i < size * size * 3; ++i) {
    float v = px[i] + jittered(rng, 0.0f, 0.03f);
    v = std::clamp(v, 0.0f, 1.0f);
    px[i] = v * 2.0f - 1.0f;
  }
}

}  // namespace

Corpus generate_corpus(std::uint64_t seed, std::int64_t n, std::int64_t size) {
  if (size != 16 && size != 32 && size != 64) {
    throw ConfigError("generate_corpus: size must be 16, 32, or 64, got " +
                      std::to_string(size));
  }
  if (n < 2) throw ConfigError("generate_corpus: need at least 2 images");

  Corpus corpus;
  corpus.seed = seed;
  corpus.images = Tensor({n, size, size, 3});
  corpus.labels.resize(static_cast<size_t>(n));
  Rng base(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    corpus.labels[static_cast<size_t>(i)] = label;
    Rng rng = base.derive(static_cast<std::uint64_t>(i));
    paint_image(corpus.images.data.data() + i * size * size * 3, size, label, rng);
  }
  return corpus;
}

Checkpoint corpus_to_checkpoint(const Corpus& corpus) {
  Checkpoint ckpt;
  ckpt.put_string("net", "corpus");
  ckpt.put_tensor("images", corpus.images);
  Tensor labels({corpus.count()});
  for (std::int64_t i = 0; i < corpus.count(); ++i) {
    labels.at(i) = static_cast<float>(corpus.labels[static_cast<size_t>(i)]);
  }
  ckpt.put_tensor("labels", labels);
  ckpt.put_int("seed", static_cast<std::int64_t>(corpus.seed));
  return ckpt;
}

Corpus corpus_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.text("net") != "corpus") {
    throw IoError("checkpoint does not hold a corpus");
  }
  Corpus corpus;
  corpus.images = ckpt.tensor("images");
  if (corpus.images.shape.size() != 4 || corpus.images.shape[3] != 3) {
    throw ShapeError("corpus images must be [N,S,S,3], got " +
                     shape_str(corpus.images.shape));
  }
  const Tensor& labels = ckpt.tensor("labels");
  if (labels.size() != corpus.count()) {
    throw ShapeError("corpus labels length does not match image count");
  }
  corpus.labels.resize(static_cast<size_t>(labels.size()));
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    const int v = static_cast<int>(std::lround(labels.at(i)));
    if (v != 0 && v != 1) throw IoError("corpus labels must be 0 or 1");
    corpus.labels[static_cast<size_t>(i)] = v;
  }
  corpus.seed = static_cast<std::uint64_t>(ckpt.integer("seed"));
  return corpus;
}

NetworkState train_oracle(const Corpus& corpus, ScalePreset preset,
                          std::int64_t steps, std::uint64_t seed) {
  const std::int64_t n = corpus.count();
  if (n == 0) throw ConfigError("train_oracle: empty corpus");
  PresetConfig cfg = preset_config(preset);
  if (corpus.image_size() != cfg.image_size) {
    throw ShapeError("train_oracle: corpus images are " +
                     std::to_string(corpus.image_size()) + "px, preset needs " +
                     std::to_string(cfg.image_size));
  }

  Rng root(seed);
  Rng init_rng = root.derive(0);
  Rng batch_rng = root.derive(1);
  NetworkState state(build_oracle(preset), init_rng);
  AdamOptimizer opt(1e-3f);

  const std::int64_t batch_size = std::min<std::int64_t>(32, n);
  const std::int64_t s = cfg.image_size;
  const std::int64_t px = s * s * 3;

  for (std::int64_t step = 0; step < steps; ++step) {
    Tensor batch({batch_size, s, s, 3});
    std::vector<int> labels(static_cast<size_t>(batch_size));
    for (std::int64_t b = 0; b < batch_size; ++b) {
      const std::int64_t idx =
          static_cast<std::int64_t>(batch_rng.uniform_index(static_cast<std::uint64_t>(n)));
      std::copy_n(corpus.images.data.begin() + idx * px, px,
                  batch.data.begin() + b * px);
      labels[static_cast<size_t>(b)] = corpus.labels[static_cast<size_t>(idx)];
    }

    Graph g;
    BoundNet net(g, state);
    Activations acts = net.forward(g.leaf(batch), true);
    NodeId loss = g.cross_entropy(acts.output, labels);
    if (!std::isfinite(g.scalar_hi(loss))) {
      throw NumericError("oracle training diverged at step " +
                         std::to_string(step));
    }
    g.backward(loss);

    opt.start_step();
    for (Param& p : state.params()) {
      const auto& grad = g.grad(net.param_leaf(p.name));
      if (grad.empty()) continue;
      opt.apply(p.name, p.tensor.data, grad);
    }
  }

  state.freeze();
  return state;
}

double classifier_accuracy(NetworkState& state, const Corpus& corpus) {
  const std::int64_t n = corpus.count();
  if (n == 0) throw ConfigError("classifier_accuracy: empty corpus");
  const std::int64_t s = corpus.image_size();
  const std::int64_t px = s * s * 3;
  const std::int64_t classes = state.spec().output_shape.back();

  std::int64_t correct = 0;
  const std::int64_t chunk = 64;
  for (std::int64_t start = 0; start < n; start += chunk) {
    const std::int64_t b = std::min(chunk, n - start);
    Tensor batch({b, s, s, 3});
    std::copy_n(corpus.images.data.begin() + start * px, b * px,
                batch.data.begin());
    Graph g(false);
    BoundNet net(g, state, false);
    const auto& logits = g.value(net.forward(g.leaf(batch)).output);
    for (std::int64_t i = 0; i < b; ++i) {
      const float* row = logits.data() + i * classes;
      const std::int64_t pick =
          std::max_element(row, row + classes) - row;
      if (pick == corpus.labels[static_cast<size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace pirtune
