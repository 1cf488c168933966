#include "pirtune/pir.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pirtune/checkpoint.hpp"
#include "pirtune/csv.hpp"
#include "pirtune/errors.hpp"
#include "pirtune/gan.hpp"
#include "pirtune/graph.hpp"
#include "pirtune/rng.hpp"

namespace pirtune {

namespace {

int checked_channel(int channel) {
  if (channel < 0 || channel > 2) {
    throw ConfigError("pir objective: channel " + std::to_string(channel) +
                      " outside [0, 3)");
  }
  return channel;
}

void check_image_shape(const Tensor& image) {
  if (image.shape.size() != 3 || image.shape[2] != 3) {
    throw ShapeError("pir: expected one [H,W,3] image");
  }
}

double value_at(const float* px) {
  return (static_cast<double>(*px) + 1.0) / 2.0;
}

// Column spans of the color regions, left to right. Halves split at W/2;
// thirds give the division remainder to the leftmost region.
std::vector<std::int64_t> region_edges(std::int64_t width, size_t regions) {
  if (regions == 1) return {0, width};
  if (regions == 2) return {0, width / 2, width};
  const std::int64_t base = width / 3;
  return {0, width - 2 * base, width - base, width};
}

}  // namespace

const char* channel_name(int channel) {
  switch (checked_channel(channel)) {
    case 0: return "red";
    case 1: return "green";
    default: return "blue";
  }
}

PirObjective single_color(int channel) {
  PirObjective o;
  o.kind = PirObjective::Kind::kSingleColor;
  o.channels = {checked_channel(channel)};
  o.id = channel_name(channel);
  return o;
}

PirObjective two_color(int left, int right) {
  PirObjective o;
  o.kind = PirObjective::Kind::kTwoColor;
  o.channels = {checked_channel(left), checked_channel(right)};
  o.id = std::string(channel_name(left)) + "|" + channel_name(right);
  return o;
}

PirObjective three_color(int left, int middle, int right) {
  PirObjective o;
  o.kind = PirObjective::Kind::kThreeColor;
  o.channels = {checked_channel(left), checked_channel(middle),
                checked_channel(right)};
  o.id = std::string(channel_name(left)) + "|" + channel_name(middle) + "|" +
         channel_name(right);
  return o;
}

PirObjective filter_norm_objective(std::string layer,
                                   std::vector<std::int64_t> filters) {
  if (layer.empty()) throw ConfigError("pir objective: empty layer name");
  if (filters.empty()) throw ConfigError("pir objective: empty filter set");
  std::vector<std::int64_t> sorted = filters;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("pir objective: duplicate filter index");
  }
  PirObjective o;
  o.kind = PirObjective::Kind::kFilterNorm;
  o.id = layer;
  for (size_t i = 0; i < filters.size(); ++i) {
    o.id += (i == 0 ? ":" : "+") + std::to_string(filters[i]);
  }
  o.layer = std::move(layer);
  o.filters = std::move(filters);
  return o;
}

std::vector<std::int64_t> sample_filter_set(std::int64_t filter_count,
                                            std::int64_t k,
                                            std::uint64_t seed) {
  if (k < 1 || k > filter_count) {
    throw ConfigError("sample_filter_set: need 1 <= k <= " +
                      std::to_string(filter_count));
  }
  std::vector<std::int64_t> pool(static_cast<size_t>(filter_count));
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  for (std::int64_t i = 0; i < k; ++i) {
    std::swap(pool[static_cast<size_t>(i)],
              pool[static_cast<size_t>(i + rng.uniform_index(filter_count - i))]);
  }
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

double color_pir(const Tensor& image, const PirObjective& objective) {
  check_image_shape(image);
  if (objective.kind == PirObjective::Kind::kFilterNorm) {
    throw ConfigError("color_pir: objective " + objective.id +
                      " is a filter objective");
  }
  const std::int64_t h = image.shape[0];
  const std::int64_t w = image.shape[1];
  const std::vector<std::int64_t> edges = region_edges(w, objective.channels.size());

  double total = 0.0;
  for (const float& px : image.data) {
    const double v = value_at(&px);
    total += v * v;
  }
  if (total == 0.0) return 0.0;

  double target = 0.0;
  for (size_t r = 0; r + 1 < edges.size(); ++r) {
    const int c = objective.channels[r];
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = edges[r]; x < edges[r + 1]; ++x) {
        const double v = value_at(&image.data[static_cast<size_t>((y * w + x) * 3 + c)]);
        target += v * v;
      }
    }
  }
  return std::sqrt(target / total);
}

double activation_energy_ratio(const std::vector<float>& act,
                               std::int64_t channels,
                               const std::vector<std::int64_t>& filters) {
  // Per-channel energies first, so a set covering every channel gives a
  // numerator that is term-for-term the denominator.
  std::vector<double> energy(static_cast<size_t>(channels), 0.0);
  for (size_t i = 0; i < act.size(); ++i) {
    const double v = act[i];
    energy[i % static_cast<size_t>(channels)] += v * v;
  }
  double total = 0.0;
  for (double e : energy) total += e;
  if (total == 0.0) return 0.0;
  double target = 0.0;
  for (std::int64_t f : filters) target += energy[static_cast<size_t>(f)];
  return std::sqrt(target / total);
}

std::vector<double> filter_norm_pirs(NetworkState& oracle, const Tensor& images,
                                     const std::string& layer,
                                     const std::vector<std::int64_t>& filters) {
  if (images.shape.size() != 4) throw ShapeError("pir: expected [N,S,S,3] images");
  if (filters.empty()) throw ConfigError("filter_norm_pir: empty filter set");
  const std::int64_t n = images.shape[0];
  const std::int64_t px = numel(images.shape) / std::max<std::int64_t>(n, 1);
  std::vector<double> out(static_cast<size_t>(n));
  for (std::int64_t at = 0; at < n; at += 64) {
    const std::int64_t b = std::min<std::int64_t>(64, n - at);
    Tensor batch({b, images.shape[1], images.shape[2], images.shape[3]});
    std::copy_n(images.data.begin() + at * px, b * px, batch.data.begin());
    Graph g(false);
    BoundNet net(g, oracle, false);
    const Activations acts = net.forward(g.leaf(batch));
    const NodeId tap = acts.tap(layer);
    const Shape& ts = g.shape(tap);
    const std::int64_t channels = ts.back();
    for (std::int64_t f : filters) {
      if (f < 0 || f >= channels) {
        throw ConfigError("filter_norm_pir: filter " + std::to_string(f) +
                          " outside layer " + layer + " with " +
                          std::to_string(channels) + " filters");
      }
    }
    const std::int64_t per_image = numel(ts) / b;
    const std::vector<float>& tv = g.value(tap);
    for (std::int64_t i = 0; i < b; ++i) {
      const std::vector<float> row(tv.begin() + i * per_image,
                                   tv.begin() + (i + 1) * per_image);
      out[static_cast<size_t>(at + i)] =
          activation_energy_ratio(row, channels, filters);
    }
  }
  return out;
}

double filter_norm_pir(NetworkState& oracle, const Tensor& image,
                       const std::string& layer,
                       const std::vector<std::int64_t>& filters) {
  check_image_shape(image);
  Tensor batch({1, image.shape[0], image.shape[1], image.shape[2]}, image.data);
  return filter_norm_pirs(oracle, batch, layer, filters)[0];
}

std::vector<double> true_pirs(const Tensor& images, const PirObjective& objective,
                              NetworkState* oracle) {
  if (objective.kind == PirObjective::Kind::kFilterNorm) {
    if (oracle == nullptr) {
      throw ConfigError("true_pir: objective " + objective.id +
                        " needs the oracle network");
    }
    return filter_norm_pirs(*oracle, images, objective.layer, objective.filters);
  }
  if (images.shape.size() != 4) throw ShapeError("pir: expected [N,S,S,3] images");
  const std::int64_t n = images.shape[0];
  const std::int64_t px = numel(images.shape) / std::max<std::int64_t>(n, 1);
  std::vector<double> out(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    Tensor image({images.shape[1], images.shape[2], images.shape[3]},
                 {images.data.begin() + i * px, images.data.begin() + (i + 1) * px});
    out[static_cast<size_t>(i)] = color_pir(image, objective);
  }
  return out;
}

double true_pir(const Tensor& image, const PirObjective& objective,
                NetworkState* oracle) {
  check_image_shape(image);
  Tensor batch({1, image.shape[0], image.shape[1], image.shape[2]}, image.data);
  return true_pirs(batch, objective, oracle)[0];
}

int sample_impressions(double p, int n, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("sample_impressions: probability " + csv_double(p) +
                      " outside [0, 1]");
  }
  if (n < 1) throw ConfigError("sample_impressions: need at least one impression");
  Rng rng(seed);
  return rng.binomial(n, p);
}

double PirDataset::zero_fraction() const {
  if (records.empty()) return 0.0;
  std::int64_t zeros = 0;
  for (const PirRecord& r : records) zeros += r.observed_pir == 0.0 ? 1 : 0;
  return static_cast<double>(zeros) / static_cast<double>(records.size());
}

PirDataset build_pir_dataset(NetworkState& gen, const PirObjective& objective,
                             NetworkState* oracle, std::int64_t n_images,
                             int n_impressions, std::uint64_t seed) {
  if (n_images < 1) throw ConfigError("build_pir_dataset: need at least one image");
  const Shape& out_shape = gen.spec().output_shape;  // [S,S,3]
  const std::int64_t s = out_shape[0];
  const std::int64_t px = s * s * 3;
  const bool conditional = gen.spec().conditional;
  const std::int64_t num_classes = gen.spec().num_classes;
  const std::int64_t latent =
      gen.spec().input_shape[0] - (conditional ? num_classes : 0);

  const Rng root(seed);
  Rng rng_latent = root.derive(1);
  Rng rng_class = root.derive(2);
  const Rng impressions_base = root.derive(3);

  PirDataset ds;
  ds.seed = seed;
  ds.images = Tensor({n_images, s, s, 3});
  for (std::int64_t at = 0; at < n_images; at += 64) {
    const std::int64_t b = std::min<std::int64_t>(64, n_images - at);
    Tensor z({b, latent});
    for (float& v : z.data) v = rng_latent.normal_f(0.0f, 1.0f);
    if (conditional) {
      std::vector<int> classes(static_cast<size_t>(b));
      for (int& c : classes) c = static_cast<int>(rng_class.uniform_index(num_classes));
      z = append_one_hot(z, classes, num_classes);
    }
    Graph g(false);
    BoundNet net(g, gen, false);
    const NodeId images = net.forward(g.leaf(z)).output;
    std::copy_n(g.value(images).begin(), b * px, ds.images.data.begin() + at * px);
  }

  const std::vector<double> pirs = true_pirs(ds.images, objective, oracle);
  ds.records.resize(static_cast<size_t>(n_images));
  for (std::int64_t i = 0; i < n_images; ++i) {
    PirRecord& r = ds.records[static_cast<size_t>(i)];
    r.image_id = i;
    r.objective_id = objective.id;
    r.impressions = n_impressions;
    r.positive_count =
        sample_impressions(pirs[static_cast<size_t>(i)], n_impressions,
                           impressions_base.derive(static_cast<std::uint64_t>(i)).seed());
    r.observed_pir =
        static_cast<double>(r.positive_count) / static_cast<double>(n_impressions);
  }
  return ds;
}

void write_pir_csv(const PirDataset& dataset, std::ostream& out) {
  out << "image_id,objective_id,impressions,positive_count,observed_pir\n";
  for (const PirRecord& r : dataset.records) {
    out << r.image_id << ',' << r.objective_id << ',' << r.impressions << ','
        << r.positive_count << ',' << csv_double(r.observed_pir) << '\n';
  }
}

void save_pir_dataset(const PirDataset& dataset, const std::string& csv_path,
                      const std::string& images_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot write " + csv_path);
  write_pir_csv(dataset, csv);
  if (!csv.flush()) throw IoError("short write to " + csv_path);

  Checkpoint ckpt;
  ckpt.put_tensor("images", dataset.images);
  ckpt.put_int("seed", static_cast<std::int64_t>(dataset.seed));
  ckpt.save(images_path);
}

PirDataset load_pir_dataset(const std::string& csv_path,
                            const std::string& images_path) {
  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot read " + csv_path);
  PirDataset ds;
  std::string line;
  if (!std::getline(csv, line) ||
      line != "image_id,objective_id,impressions,positive_count,observed_pir") {
    throw IoError(csv_path + ": not an impression dataset CSV");
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    PirRecord r;
    try {
      std::getline(cells, cell, ',');
      r.image_id = std::stoll(cell);
      std::getline(cells, r.objective_id, ',');
      std::getline(cells, cell, ',');
      r.impressions = std::stoi(cell);
      std::getline(cells, cell, ',');
      r.positive_count = std::stoi(cell);
    } catch (const std::exception&) {
      throw IoError(csv_path + ": malformed row " +
                    std::to_string(ds.records.size()));
    }
    if (r.impressions < 1 || r.positive_count < 0 ||
        r.positive_count > r.impressions) {
      throw IoError(csv_path + ": invalid counts in row " +
                    std::to_string(ds.records.size()));
    }
    r.observed_pir =
        static_cast<double>(r.positive_count) / static_cast<double>(r.impressions);
    ds.records.push_back(std::move(r));
  }

  const Checkpoint ckpt = Checkpoint::load(images_path);
  ds.images = ckpt.tensor("images");
  ds.seed = static_cast<std::uint64_t>(ckpt.integer("seed"));
  if (ds.images.shape.empty() ||
      ds.images.shape[0] != static_cast<std::int64_t>(ds.records.size())) {
    throw IoError(images_path + ": image count does not match the CSV");
  }
  return ds;
}

}  // namespace pirtune
