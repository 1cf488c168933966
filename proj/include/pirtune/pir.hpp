#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "pirtune/nets.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

// Closed-form image objectives standing in for human positive-interaction
// rates. Color objectives score channel energy in a value space mapped from
// the generator's tanh range to [0,1]; filter objectives score the energy of
// chosen oracle-network filters against the whole layer's activity. Every
// objective yields a value in [0,1], and an image (or layer) with no energy
// at all scores 0 by convention.
struct PirObjective {
  enum class Kind { kSingleColor, kTwoColor, kThreeColor, kFilterNorm };
  Kind kind = Kind::kSingleColor;
  std::string id;
  std::vector<int> channels;            // color kinds, listed left to right
  std::string layer;                    // filter kind: oracle tap name
  std::vector<std::int64_t> filters;    // filter kind: duplicate-free indices
};

const char* channel_name(int channel);

PirObjective single_color(int channel);
PirObjective two_color(int left, int right);
PirObjective three_color(int left, int middle, int right);
PirObjective filter_norm_objective(std::string layer,
                                   std::vector<std::int64_t> filters);

// k distinct filter indices from [0, filter_count), ascending. Deterministic
// for a given seed, so an experiment's filter draw can be recorded and
// replayed.
std::vector<std::int64_t> sample_filter_set(std::int64_t filter_count,
                                            std::int64_t k,
                                            std::uint64_t seed);

// Color PIR of one [H,W,3] image with pixels in [-1,1]. Pixels are mapped to
// value space (x+1)/2 first; the result is the square root of the targeted
// energy fraction. Width splits: halves are [0,W/2) and [W/2,W); thirds give
// the remainder columns to the leftmost third.
double color_pir(const Tensor& image, const PirObjective& objective);

// Energy-ratio core of the filter objectives, at the activation level:
// sqrt(energy of chosen channels / energy of all channels) over activations
// laid out with the channel as the trailing dimension, or 0 when the layer
// is silent. Exactly 1 when the set covers every channel.
double activation_energy_ratio(const std::vector<float>& act,
                               std::int64_t channels,
                               const std::vector<std::int64_t>& filters);

// Filter PIR of each image in [N,S,S,3]: runs the oracle in eval mode and
// scores the tap named by the objective. Throws if the tap is unknown or a
// filter index falls outside the tap's channel count.
std::vector<double> filter_norm_pirs(NetworkState& oracle, const Tensor& images,
                                     const std::string& layer,
                                     const std::vector<std::int64_t>& filters);
double filter_norm_pir(NetworkState& oracle, const Tensor& image,
                       const std::string& layer,
                       const std::vector<std::int64_t>& filters);

// Objective dispatch over a [N,S,S,3] batch (oracle may be null for color
// kinds) and over a single [S,S,3] image.
std::vector<double> true_pirs(const Tensor& images, const PirObjective& objective,
                              NetworkState* oracle = nullptr);
double true_pir(const Tensor& image, const PirObjective& objective,
                NetworkState* oracle = nullptr);

// positive_count ~ Binomial(n, p), deterministic for a given seed.
int sample_impressions(double p, int n, std::uint64_t seed);

struct PirRecord {
  std::int64_t image_id = 0;
  std::string objective_id;
  int impressions = 0;
  int positive_count = 0;
  double observed_pir = 0.0;  // positive_count / impressions
};

// Simulated impression dataset: one record per generated image, with the
// image tensors kept alongside keyed by image_id (row index).
struct PirDataset {
  std::vector<PirRecord> records;
  Tensor images;  // [N, S, S, 3]
  std::uint64_t seed = 0;

  // Fraction of records whose observed PIR is exactly zero.
  double zero_fraction() const;
};

// Renders n_images from the generator (latents drawn fresh; a conditional
// generator gets uniformly drawn classes), computes each image's true PIR,
// and draws a binomial impression count per image from a seed derived for
// that image alone.
PirDataset build_pir_dataset(NetworkState& gen, const PirObjective& objective,
                             NetworkState* oracle, std::int64_t n_images = 1000,
                             int n_impressions = 1000, std::uint64_t seed = 0);

void write_pir_csv(const PirDataset& dataset, std::ostream& out);

// CSV of records plus a binary container for the image tensors.
void save_pir_dataset(const PirDataset& dataset, const std::string& csv_path,
                      const std::string& images_path);
PirDataset load_pir_dataset(const std::string& csv_path,
                            const std::string& images_path);

}  // namespace pirtune
