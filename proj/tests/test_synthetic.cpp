#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "pirtune/errors.hpp"
#include "pirtune/graph.hpp"
#include "pirtune/nets.hpp"
#include "pirtune/synthetic_data.hpp"

using namespace pirtune;

TEST_CASE("corpus generation is deterministic and label-balanced") {
  Corpus a = generate_corpus(7, 10, 16);
  Corpus b = generate_corpus(7, 10, 16);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.seed == 7);

  Corpus c = generate_corpus(8, 10, 16);
  CHECK(a.images.data != c.images.data);

  CHECK(a.count() == 10);
  CHECK(a.image_size() == 16);
  int ones = 0;
  for (size_t i = 0; i < a.labels.size(); ++i) {
    CHECK(a.labels[i] == static_cast<int>(i % 2));
    ones += a.labels[i];
  }
  CHECK(ones == 5);
}

TEST_CASE("corpus pixels are bounded and centered") {
  Corpus corpus = generate_corpus(11, 64, 16);
  double sum = 0.0;
  for (float v : corpus.images.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
    sum += v;
  }
  const double mean = sum / static_cast<double>(corpus.images.data.size());
  CHECK(mean > -0.5);
  CHECK(mean < 0.5);
}

TEST_CASE("the two classes are visually distinct") {
  Corpus corpus = generate_corpus(21, 32, 16);
  const std::int64_t per_image = 16 * 16 * 3;
  std::vector<double> mean0(static_cast<size_t>(per_image), 0.0);
  std::vector<double> mean1(static_cast<size_t>(per_image), 0.0);
  for (std::int64_t i = 0; i < corpus.count(); ++i) {
    auto& dst = corpus.labels[static_cast<size_t>(i)] == 0 ? mean0 : mean1;
    for (std::int64_t p = 0; p < per_image; ++p) {
      dst[static_cast<size_t>(p)] += corpus.images.data[static_cast<size_t>(i * per_image + p)];
    }
  }
  double gap = 0.0;
  for (std::int64_t p = 0; p < per_image; ++p) {
    gap += std::abs(mean0[static_cast<size_t>(p)] - mean1[static_cast<size_t>(p)]) / 16.0;
  }
  gap /= static_cast<double>(per_image);
  CHECK(gap > 0.05);
}

TEST_CASE("corpus rejects unsupported sizes and counts") {
  CHECK_THROWS_AS(generate_corpus(1, 10, 20), ConfigError);
  CHECK_THROWS_AS(generate_corpus(1, 10, 8), ConfigError);
  CHECK_THROWS_AS(generate_corpus(1, 1, 16), ConfigError);
}

TEST_CASE("corpus survives a checkpoint round trip bitwise") {
  Corpus corpus = generate_corpus(31, 6, 32);
  Checkpoint ckpt = corpus_to_checkpoint(corpus);
  Corpus back = corpus_from_checkpoint(ckpt);
  CHECK(back.images.shape == corpus.images.shape);
  CHECK(back.images.data == corpus.images.data);
  CHECK(back.labels == corpus.labels);
  CHECK(back.seed == corpus.seed);
}

TEST_CASE("oracle training separates the classes and freezes the result") {
  Corpus corpus = generate_corpus(41, 64, 16);
  NetworkState oracle = train_oracle(corpus, ScalePreset::kDesk, 300, 5);

  CHECK(oracle.frozen());
  CHECK(classifier_accuracy(oracle, corpus) >= 0.9);

  // An untrained state of the same architecture is the baseline.
  Rng init_rng(5);
  NetworkState fresh(build_oracle(ScalePreset::kDesk), init_rng);
  CHECK(classifier_accuracy(oracle, corpus) > classifier_accuracy(fresh, corpus));
}

TEST_CASE("oracle training is deterministic in its seed") {
  Corpus corpus = generate_corpus(41, 32, 16);
  NetworkState a = train_oracle(corpus, ScalePreset::kDesk, 60, 9);
  NetworkState b = train_oracle(corpus, ScalePreset::kDesk, 60, 9);
  CHECK(a.to_checkpoint().serialize() == b.to_checkpoint().serialize());

  NetworkState c = train_oracle(corpus, ScalePreset::kDesk, 60, 10);
  CHECK(a.to_checkpoint().serialize() != c.to_checkpoint().serialize());
}

TEST_CASE("trained oracle keeps every tapped layer alive across the corpus") {
  Corpus corpus = generate_corpus(41, 64, 16);
  NetworkState oracle = train_oracle(corpus, ScalePreset::kDesk, 300, 5);

  Graph g(false);
  BoundNet net(g, oracle);
  Activations acts = net.forward(g.leaf(corpus.images));

  // Post-activation taps: a filter counts as alive on an image when any of
  // its spatial positions is nonzero. Training must not have collapsed a
  // layer to mostly dead filters.
  for (const char* name : {"conv1", "conv2", "conv3", "conv4", "fc1"}) {
    const NodeId tap = acts.tap(name);
    const Shape& s = g.shape(tap);
    const std::int64_t B = s[0];
    const std::int64_t C = s.back();
    const std::int64_t spatial = numel(s) / (B * C);
    const auto& v = g.value(tap);
    std::int64_t alive = 0;
    for (std::int64_t c = 0; c < C; ++c) {
      std::int64_t images_active = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        bool active = false;
        for (std::int64_t p = 0; p < spatial && !active; ++p) {
          active = v[static_cast<size_t>((b * spatial + p) * C + c)] != 0.0f;
        }
        images_active += active ? 1 : 0;
      }
      alive += images_active * 10 >= B ? 1 : 0;
    }
    INFO(name, ": ", alive, " of ", C, " filters alive");
    CHECK(alive * 2 >= C);
  }
}
