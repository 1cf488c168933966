#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pirtune/errors.hpp"
#include "pirtune/graph.hpp"
#include "pirtune/nets.hpp"
#include "pirtune/pir.hpp"
#include "pirtune/rng.hpp"
#include "pirtune/synthetic_data.hpp"

using namespace pirtune;

namespace {

// [H,W,3] image with every channel at the given raw pixel values.
Tensor flat_image(std::int64_t h, std::int64_t w, float r, float g, float b) {
  Tensor t({h, w, 3});
  for (size_t i = 0; i < t.data.size(); i += 3) {
    t.data[i] = r;
    t.data[i + 1] = g;
    t.data[i + 2] = b;
  }
  return t;
}

// Sets one channel to +1 and the others to -1 (zero value) on [x0, x1).
void paint_region(Tensor& image, std::int64_t x0, std::int64_t x1, int channel) {
  const std::int64_t h = image.shape[0];
  const std::int64_t w = image.shape[1];
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = x0; x < x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.data[static_cast<size_t>((y * w + x) * 3 + c)] = c == channel ? 1.0f : -1.0f;
      }
    }
  }
}

Tensor random_image(std::int64_t h, std::int64_t w, Rng& rng, float lo = -1.0f,
                    float hi = 1.0f) {
  Tensor t({h, w, 3});
  for (float& v : t.data) {
    v = lo + (hi - lo) * static_cast<float>(rng.uniform());
  }
  return t;
}

struct TempPaths {
  std::string csv = "/tmp/pirtune_test_dataset.csv";
  std::string images = "/tmp/pirtune_test_images.bin";
  ~TempPaths() {
    std::remove(csv.c_str());
    std::remove(images.c_str());
  }
};

}  // namespace

TEST_CASE("color pir: closed forms") {
  SUBCASE("pure red image scores 1") {
    const Tensor img = flat_image(4, 4, 1.0f, -1.0f, -1.0f);
    CHECK(color_pir(img, single_color(0)) == 1.0);
    CHECK(color_pir(img, single_color(1)) == 0.0);
  }
  SUBCASE("gray image scores sqrt(1/3) on any single channel") {
    const Tensor img = flat_image(5, 3, 0.3f, 0.3f, 0.3f);
    for (int c = 0; c < 3; ++c) {
      CHECK(color_pir(img, single_color(c)) ==
            doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
    }
  }
  SUBCASE("left red, right blue") {
    Tensor img({4, 4, 3});
    paint_region(img, 0, 2, 0);
    paint_region(img, 2, 4, 2);
    CHECK(color_pir(img, two_color(0, 2)) == 1.0);
    CHECK(color_pir(img, single_color(0)) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(color_pir(img, two_color(2, 0)) == 0.0);
  }
  SUBCASE("width 16 thirds split 6/5/5") {
    Tensor img({2, 16, 3});
    paint_region(img, 0, 6, 1);
    paint_region(img, 6, 11, 2);
    paint_region(img, 11, 16, 0);
    CHECK(color_pir(img, three_color(1, 2, 0)) == 1.0);
    CHECK(color_pir(img, three_color(0, 1, 2)) == 0.0);
    // The leftmost region is the wide one: 6 of 16 columns.
    CHECK(color_pir(img, single_color(1)) ==
          doctest::Approx(std::sqrt(6.0 / 16.0)).epsilon(1e-12));
  }
  SUBCASE("image with zero total value scores 0 by convention") {
    const Tensor img = flat_image(4, 4, -1.0f, -1.0f, -1.0f);
    CHECK(color_pir(img, single_color(0)) == 0.0);
    CHECK(color_pir(img, three_color(0, 1, 2)) == 0.0);
  }
}

TEST_CASE("color pir: two identical halves reduce to the single color score") {
  Rng rng(101);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor img = random_image(6, 8, rng);
    for (int c = 0; c < 3; ++c) {
      CHECK(color_pir(img, two_color(c, c)) ==
            doctest::Approx(color_pir(img, single_color(c))).epsilon(1e-12));
    }
  }
}

TEST_CASE("color pir: extra target-channel energy never lowers the score") {
  Rng rng(103);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor img = random_image(5, 6, rng, -1.0f, 0.8f);
    const double before = color_pir(img, single_color(1));
    for (size_t i = 1; i < img.data.size(); i += 3) img.data[i] += 0.1f;
    const double after = color_pir(img, single_color(1));
    CHECK(after >= before - 1e-15);
  }
}

TEST_CASE("color pir: scores stay in the unit interval for all kinds") {
  Rng rng(107);
  const std::vector<PirObjective> objectives = {
      single_color(2), two_color(0, 1), three_color(2, 0, 1)};
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor img = random_image(16, 16, rng);
    for (const PirObjective& o : objectives) {
      const double p = color_pir(img, o);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("filter pir: whole-layer set scores exactly 1") {
  Rng rng(109);
  NetworkState oracle(build_oracle(ScalePreset::kDesk), rng);
  const Tensor img = random_image(16, 16, rng);
  std::vector<std::int64_t> all(32);
  for (int i = 0; i < 32; ++i) all[static_cast<size_t>(i)] = i;
  CHECK(filter_norm_pir(oracle, img, "conv2", all) == 1.0);
}

TEST_CASE("filter pir: uniform per-filter energy gives sqrt(k/F)") {
  // Two spatial positions, four channels, all activations equal.
  const std::vector<float> act = {0.7f, 0.7f, 0.7f, 0.7f, 0.7f, 0.7f, 0.7f, 0.7f};
  CHECK(activation_energy_ratio(act, 4, {2}) ==
        doctest::Approx(std::sqrt(0.25)).epsilon(1e-15));
  CHECK(activation_energy_ratio(act, 4, {0, 3}) ==
        doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(activation_energy_ratio(std::vector<float>(8, 0.0f), 4, {1}) == 0.0);
}

TEST_CASE("filter pir: matches a direct recomputation from the tap activations") {
  Rng rng(113);
  NetworkState oracle(build_oracle(ScalePreset::kDesk), rng);
  const Tensor img = random_image(16, 16, rng);
  const std::vector<std::int64_t> filters = {1, 7, 12};

  Tensor batch({1, 16, 16, 3}, img.data);
  Graph g(false);
  BoundNet net(g, oracle, false);
  const NodeId tap = net.forward(g.leaf(batch)).tap("conv3");
  const Shape& ts = g.shape(tap);
  const std::int64_t channels = ts.back();
  const std::vector<float>& act = g.value(tap);
  double target = 0.0;
  double total = 0.0;
  for (size_t i = 0; i < act.size(); ++i) {
    const double v = act[i];
    total += v * v;
    for (std::int64_t f : filters) {
      if (static_cast<std::int64_t>(i) % channels == f) target += v * v;
    }
  }
  const double expected = total == 0.0 ? 0.0 : std::sqrt(target / total);

  CHECK(filter_norm_pir(oracle, img, "conv3", filters) ==
        doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("filter pir: scaling all activations leaves the ratio unchanged") {
  Rng rng(127);
  std::vector<float> act(6 * 6 * 16);
  for (float& v : act) v = static_cast<float>(rng.normal());
  const std::vector<std::int64_t> filters = {0, 5, 9};
  // A power-of-two scale is exact in float, so the ratio is bitwise equal.
  std::vector<float> doubled = act;
  for (float& v : doubled) v *= 4.0f;
  CHECK(activation_energy_ratio(act, 16, filters) ==
        activation_energy_ratio(doubled, 16, filters));
  // A general scale rounds each product, leaving only that rounding behind.
  std::vector<float> scaled = act;
  for (float& v : scaled) v *= 3.7f;
  CHECK(activation_energy_ratio(act, 16, filters) ==
        doctest::Approx(activation_energy_ratio(scaled, 16, filters)).epsilon(1e-6));
}

TEST_CASE("filter pir: unknown layers and bad filter sets are rejected") {
  Rng rng(131);
  NetworkState oracle(build_oracle(ScalePreset::kDesk), rng);
  const Tensor img = random_image(16, 16, rng);
  CHECK_THROWS_AS(filter_norm_pir(oracle, img, "conv9", {0}), Error);
  CHECK_THROWS_AS(filter_norm_pir(oracle, img, "conv1", {16}), ConfigError);
  CHECK_THROWS_AS(filter_norm_pir(oracle, img, "conv1", {-1}), ConfigError);
  CHECK_THROWS_AS(filter_norm_objective("conv1", {3, 3}), ConfigError);
  CHECK_THROWS_AS(filter_norm_objective("conv1", {}), ConfigError);
}

TEST_CASE("objective identifiers and filter set sampling") {
  CHECK(single_color(0).id == "red");
  CHECK(two_color(0, 2).id == "red|blue");
  CHECK(three_color(1, 2, 0).id == "green|blue|red");
  CHECK(filter_norm_objective("conv3", {1, 4, 9}).id == "conv3:1+4+9");
  CHECK_THROWS_AS(single_color(3), ConfigError);

  const auto set = sample_filter_set(64, 20, 7);
  CHECK(set.size() == 20);
  CHECK(std::is_sorted(set.begin(), set.end()));
  CHECK(std::adjacent_find(set.begin(), set.end()) == set.end());
  CHECK(set.front() >= 0);
  CHECK(set.back() < 64);
  CHECK(sample_filter_set(64, 20, 7) == set);
  CHECK(sample_filter_set(64, 20, 8) != set);
  const auto full = sample_filter_set(5, 5, 3);
  CHECK(full == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(sample_filter_set(8, 9, 1), ConfigError);
  CHECK_THROWS_AS(sample_filter_set(8, 0, 1), ConfigError);
}

TEST_CASE("impressions: boundary probabilities and validation") {
  CHECK(sample_impressions(0.0, 500, 11) == 0);
  CHECK(sample_impressions(1.0, 500, 11) == 500);
  CHECK(sample_impressions(0.5, 1000, 13) == sample_impressions(0.5, 1000, 13));
  CHECK_THROWS_AS(sample_impressions(-0.01, 10, 1), ConfigError);
  CHECK_THROWS_AS(sample_impressions(1.01, 10, 1), ConfigError);
  CHECK_THROWS_AS(sample_impressions(0.5, 0, 1), ConfigError);
}

TEST_CASE("impressions: monte carlo moments match the binomial") {
  const int n = 1000;
  const double p = 0.3;
  const int draws = 10000;
  const Rng base(1234);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double f = static_cast<double>(sample_impressions(
                         p, n, base.derive(static_cast<std::uint64_t>(i)).seed())) /
                     n;
    sum += f;
    sum_sq += f * f;
  }
  const double mean = sum / draws;
  const double var = sum_sq / draws - mean * mean;
  const double expected_var = p * (1.0 - p) / n;
  CHECK(mean == doctest::Approx(p).epsilon(0.005 / p));
  CHECK(var > 0.8 * expected_var);
  CHECK(var < 1.2 * expected_var);
}

TEST_CASE("pir dataset: shape, determinism, and recount of the zero fraction") {
  Rng rng(137);
  NetworkState gen(build_generator(ScalePreset::kDesk, false), rng);
  const PirObjective obj = single_color(0);

  const PirDataset a = build_pir_dataset(gen, obj, nullptr, 64, 50, 5);
  CHECK(a.records.size() == 64);
  CHECK(a.images.shape == Shape{64, 16, 16, 3});
  for (const PirRecord& r : a.records) {
    CHECK(r.objective_id == "red");
    CHECK(r.impressions == 50);
    CHECK(r.positive_count >= 0);
    CHECK(r.positive_count <= 50);
    CHECK(r.observed_pir == static_cast<double>(r.positive_count) / 50.0);
  }

  const PirDataset b = build_pir_dataset(gen, obj, nullptr, 64, 50, 5);
  CHECK(a.images.data == b.images.data);
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].positive_count == b.records[i].positive_count);
  }
  const PirDataset c = build_pir_dataset(gen, obj, nullptr, 64, 50, 6);
  CHECK(a.images.data != c.images.data);

  std::int64_t zeros = 0;
  for (const PirRecord& r : a.records) zeros += r.observed_pir == 0.0 ? 1 : 0;
  CHECK(a.zero_fraction() ==
        doctest::Approx(static_cast<double>(zeros) / 64.0).epsilon(1e-15));
}

TEST_CASE("pir dataset: filter objective and conditional generator paths") {
  Rng rng(139);
  NetworkState gen(build_generator(ScalePreset::kDesk, true), rng);
  NetworkState oracle(build_oracle(ScalePreset::kDesk), rng);
  const PirObjective obj = filter_norm_objective("conv2", sample_filter_set(32, 4, 3));

  const PirDataset ds = build_pir_dataset(gen, obj, &oracle, 16, 20, 9);
  CHECK(ds.records.size() == 16);
  for (const PirRecord& r : ds.records) {
    CHECK(r.objective_id == obj.id);
    CHECK(r.observed_pir >= 0.0);
    CHECK(r.observed_pir <= 1.0);
  }
  CHECK_THROWS_AS(build_pir_dataset(gen, obj, nullptr, 4, 10, 9), ConfigError);
}

TEST_CASE("pir dataset: csv and image container round trip") {
  Rng rng(149);
  NetworkState gen(build_generator(ScalePreset::kDesk, false), rng);
  const PirDataset ds = build_pir_dataset(gen, two_color(1, 2), nullptr, 24, 40, 17);

  std::ostringstream out;
  write_pir_csv(ds, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "image_id,objective_id,impressions,positive_count,observed_pir");
  std::int64_t rows = 0;
  std::int64_t zero_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const size_t last_comma = line.rfind(',');
    if (line.substr(last_comma + 1) == "0") ++zero_rows;
  }
  CHECK(rows == 24);
  CHECK(ds.zero_fraction() ==
        doctest::Approx(static_cast<double>(zero_rows) / 24.0).epsilon(1e-15));

  TempPaths paths;
  save_pir_dataset(ds, paths.csv, paths.images);
  const PirDataset back = load_pir_dataset(paths.csv, paths.images);
  CHECK(back.seed == ds.seed);
  CHECK(back.images.data == ds.images.data);
  REQUIRE(back.records.size() == ds.records.size());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(back.records[i].image_id == ds.records[i].image_id);
    CHECK(back.records[i].objective_id == ds.records[i].objective_id);
    CHECK(back.records[i].positive_count == ds.records[i].positive_count);
    CHECK(back.records[i].observed_pir == ds.records[i].observed_pir);
  }
}
