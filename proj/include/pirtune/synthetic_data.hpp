#pragma once

#include <cstdint>
#include <vector>

#include "pirtune/checkpoint.hpp"
#include "pirtune/nets.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

// Procedural two-class toy landscape corpus. Class 0 ("mountain") is a sky
// gradient with one to three dark triangles rising from the bottom edge;
// class 1 ("coast") is a sky gradient over a water band with a distinct hue
// below a horizon line. Pixels live in [-1, 1], NHWC.
struct Corpus {
  Tensor images;            // [N, S, S, 3]
  std::vector<int> labels;  // values in {0, 1}, alternating
  std::uint64_t seed = 0;

  std::int64_t count() const { return images.shape.empty() ? 0 : images.shape[0]; }
  std::int64_t image_size() const {
    return images.shape.size() == 4 ? images.shape[1] : 0;
  }
};

// Deterministic for a given (seed, n, size); size must be 16, 32, or 64 and
// n at least 2. Labels alternate 0,1,0,1,... so even n gives an exact class
// balance.
Corpus generate_corpus(std::uint64_t seed, std::int64_t n, std::int64_t size);

Checkpoint corpus_to_checkpoint(const Corpus& corpus);
Corpus corpus_from_checkpoint(const Checkpoint& ckpt);

// Trains the oracle classifier on the corpus (Adam, lr 1e-3, batch 32,
// cross-entropy) and returns it frozen. Throws NumericError naming the step
// if the loss diverges.
NetworkState train_oracle(const Corpus& corpus, ScalePreset preset,
                          std::int64_t steps, std::uint64_t seed);

// Argmax accuracy of a classifier state over the corpus, eval mode.
double classifier_accuracy(NetworkState& state, const Corpus& corpus);

}  // namespace pirtune
