#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pirtune/errors.hpp"
#include "pirtune/nets.hpp"

using namespace pirtune;

namespace {

Tensor random_batch(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal_f(0.0f, 1.0f);
  return t;
}

}  // namespace

TEST_CASE("paper preset reproduces the published dimensions") {
  PresetConfig cfg = preset_config(ScalePreset::kPaper);
  CHECK(cfg.image_size == 64);
  CHECK(cfg.latent == 64);
  CHECK(cfg.gen_depths == std::vector<std::int64_t>{512, 512, 256, 128, 64, 3});
  CHECK(cfg.disc_depths == std::vector<std::int64_t>{16, 32, 64, 128, 256, 512});
  CHECK(cfg.disc_strides == std::vector<int>{2, 1, 2, 1, 2, 1});

  NetworkSpec g = build_generator(ScalePreset::kPaper, false);
  CHECK(g.input_shape == Shape{64});
  CHECK(g.output_shape == Shape{64, 64, 3});
  int upsamples = 0;
  for (const auto& l : g.layers) {
    if (l.kind == LayerKind::kUpsample2x) ++upsamples;
  }
  // output spatial size = 4 * 2^upsamples
  CHECK((4LL << upsamples) == 64);

  NetworkSpec d = build_discriminator(ScalePreset::kPaper, false);
  CHECK(d.input_shape == Shape{64, 64, 3});
  // 64x64 through strides 2,1,2,1,2,1 leaves an 8x8 map before the head.
  for (const auto& l : d.layers) {
    if (l.kind == LayerKind::kReshape) {
      CHECK(l.target == Shape{8 * 8 * 512});
    }
  }
  int dropouts = 0;
  for (const auto& l : d.layers) {
    if (l.kind == LayerKind::kDropout) ++dropouts;
  }
  CHECK(dropouts == 3);
}

TEST_CASE("desk preset shapes") {
  NetworkSpec g = build_generator(ScalePreset::kDesk, false);
  CHECK(g.input_shape == Shape{32});
  CHECK(g.output_shape == Shape{16, 16, 3});

  NetworkSpec gc = build_generator(ScalePreset::kDesk, true);
  CHECK(gc.input_shape == Shape{34});

  NetworkSpec d = build_discriminator(ScalePreset::kDesk, false);
  CHECK(d.output_shape == Shape{1});
  NetworkSpec dc = build_discriminator(ScalePreset::kDesk, true);
  CHECK(dc.output_shape == Shape{3});

  CHECK(build_estimator(ScalePreset::kDesk).output_shape == Shape{100});
  CHECK(build_oracle(ScalePreset::kDesk).output_shape == Shape{2});
}

TEST_CASE("estimator and oracle trunks are architecturally distinct") {
  auto est = layer_kinds(build_estimator(ScalePreset::kDesk));
  auto ora = layer_kinds(build_oracle(ScalePreset::kDesk));
  CHECK(est != ora);
}

TEST_CASE("validate_spec rejects a non-composing layer stack") {
  NetworkSpec broken = build_generator(ScalePreset::kDesk, false);
  broken.layers[0].out = 17;
  CHECK_THROWS_AS(validate_spec(broken), ShapeError);

  NetworkSpec truncated = build_generator(ScalePreset::kDesk, false);
  truncated.layers.pop_back();
  truncated.layers.pop_back();
  CHECK_THROWS_AS(validate_spec(truncated), ShapeError);
}

TEST_CASE("generator forward emits tanh-bounded images") {
  Rng rng(5);
  NetworkState g_state(build_generator(ScalePreset::kDesk, false), rng);

  Graph g;
  Rng latent_rng(6);
  BoundNet net(g, g_state);
  NodeId z = g.leaf(random_batch(latent_rng, {2, 32}));
  Activations acts = net.forward(z);
  CHECK(g.shape(acts.output) == Shape{2, 16, 16, 3});
  for (float v : g.value(acts.output)) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("discriminator forward shape and dropout rng requirement") {
  Rng rng(7);
  NetworkState d_state(build_discriminator(ScalePreset::kDesk, true), rng);

  Graph g;
  Rng data_rng(8);
  BoundNet net(g, d_state);
  NodeId images = g.leaf(random_batch(data_rng, {4, 16, 16, 3}));
  Activations eval_acts = net.forward(images, false);
  CHECK(g.shape(eval_acts.output) == Shape{4, 3});

  CHECK_THROWS_AS(net.forward(images, true, nullptr), Error);
  Rng drop_rng(9);
  Activations train_acts = net.forward(images, true, &drop_rng);
  CHECK(g.shape(train_acts.output) == Shape{4, 3});

  NodeId bad = g.leaf(random_batch(data_rng, {4, 8, 8, 3}));
  CHECK_THROWS_AS(net.forward(bad), ShapeError);
}

TEST_CASE("estimator forward emits 100 logits per image") {
  Rng rng(11);
  NetworkState r_state(build_estimator(ScalePreset::kDesk), rng);
  Graph g;
  Rng data_rng(12);
  BoundNet net(g, r_state);
  NodeId images = g.leaf(random_batch(data_rng, {4, 16, 16, 3}));
  CHECK(g.shape(net.forward(images).output) == Shape{4, 100});
}

TEST_CASE("oracle exposes taps from low to high layers, deterministically") {
  Rng rng(13);
  NetworkState o_state(build_oracle(ScalePreset::kDesk), rng);

  auto tap_shapes = validate_spec(o_state.spec());
  REQUIRE(tap_shapes.size() == 6);
  CHECK(tap_shapes[0].first == "conv1");
  CHECK(tap_shapes[0].second == Shape{16, 16, 16});
  CHECK(tap_shapes[3].first == "conv4");
  CHECK(tap_shapes[3].second == Shape{2, 2, 128});
  CHECK(tap_shapes[4].first == "fc1");
  CHECK(tap_shapes[4].second == Shape{64});
  CHECK(tap_shapes[5].first == "fc_out");
  CHECK(tap_shapes[5].second == Shape{2});

  Rng data_rng(14);
  Tensor batch = random_batch(data_rng, {3, 16, 16, 3});
  auto run = [&](std::vector<float>& out) {
    Graph g(false);
    BoundNet net(g, o_state);
    Activations acts = net.forward(g.leaf(batch));
    out = g.value(acts.tap("fc_out"));
    CHECK(g.shape(acts.tap("conv2")) == Shape{3, 8, 8, 32});
  };
  std::vector<float> a, b;
  run(a);
  run(b);
  CHECK(a == b);

  Graph g(false);
  BoundNet net(g, o_state);
  Activations acts = net.forward(g.leaf(batch));
  CHECK_THROWS_AS(acts.tap("conv9"), Error);
}

TEST_CASE("network state init is seed-deterministic and freezable") {
  NetworkSpec spec = build_generator(ScalePreset::kDesk, false);
  Rng rng_a(21), rng_b(21), rng_c(22);
  NetworkState a(spec, rng_a);
  NetworkState b(spec, rng_b);
  NetworkState c(spec, rng_c);
  CHECK(a.param("fc.w").tensor.data == b.param("fc.w").tensor.data);
  CHECK(a.param("fc.w").tensor.data != c.param("fc.w").tensor.data);
  CHECK(a.param("fc.b").tensor.data ==
        std::vector<float>(a.param("fc.b").tensor.data.size(), 0.0f));

  CHECK(!a.frozen());
  a.freeze();
  CHECK(a.frozen());
  for (const Param& p : a.params()) CHECK(!p.trainable);

  // Weight init stays inside the truncation band.
  for (float v : b.param("conv1.w").tensor.data) CHECK(std::abs(v) <= 0.04f);
}

TEST_CASE("frozen parameters receive no gradients") {
  Rng rng(31);
  NetworkState d_state(build_discriminator(ScalePreset::kDesk, false), rng);
  d_state.param("conv1.w").trainable = false;

  Graph g;
  Rng data_rng(32);
  BoundNet net(g, d_state);
  NodeId images = g.leaf(random_batch(data_rng, {2, 16, 16, 3}));
  Activations acts = net.forward(images);
  g.backward(g.mean_all(acts.output));
  CHECK(!g.requires_grad(net.param_leaf("conv1.w")));
  CHECK(g.requires_grad(net.param_leaf("conv2.w")));
  CHECK(!g.grad(net.param_leaf("conv2.w")).empty());
}

TEST_CASE("network state checkpoint round trip") {
  Rng rng(41);
  NetworkState state(build_discriminator(ScalePreset::kDesk, true), rng);
  state.param("conv2.w").trainable = false;
  state.stats("bn1").mean[3] = 0.25f;
  state.stats("bn1").batches = 7;

  Checkpoint ckpt = state.to_checkpoint();
  NetworkState back = NetworkState::from_checkpoint(state.spec(), ckpt);
  CHECK(back.to_checkpoint().serialize() == ckpt.serialize());
  CHECK(!back.param("conv2.w").trainable);
  CHECK(back.param("conv1.w").trainable);
  CHECK(back.stats("bn1").mean[3] == 0.25f);
  CHECK(back.stats("bn1").batches == 7);

  CHECK_THROWS_AS(
      NetworkState::from_checkpoint(build_generator(ScalePreset::kDesk, false), ckpt),
      IoError);
  NetworkSpec wrong = build_discriminator(ScalePreset::kPaper, true);
  CHECK_THROWS_AS(NetworkState::from_checkpoint(wrong, ckpt), MissingArtifactError);

  Rng g_rng(42);
  NetworkState g_desk(build_generator(ScalePreset::kDesk, false), g_rng);
  CHECK_THROWS_AS(
      NetworkState::from_checkpoint(build_generator(ScalePreset::kPaper, false),
                                    g_desk.to_checkpoint()),
      ShapeError);
}

TEST_CASE("preset parsing") {
  CHECK(parse_preset("desk") == ScalePreset::kDesk);
  CHECK(parse_preset("paper") == ScalePreset::kPaper);
  CHECK_THROWS_AS(parse_preset("huge"), ConfigError);
}
