#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace pirtune {

// Deterministic random source. All draws are built directly on the
// standard-specified mt19937_64 output stream (never on distribution
// classes, whose algorithms vary across standard libraries), so a seed
// reproduces the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream for a named purpose (data, init, noise, ...).
  // Derivation hashes the parent seed with the stream id, so streams do
  // not overlap and adding one never shifts another.
  Rng derive(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 1))); }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::int64_t uniform_index(std::int64_t n) {
    const auto i = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Sum of n Bernoulli(p) draws. Exact binomial sampling; n stays small
  // enough here (impression counts) that the linear cost is irrelevant.
  int binomial(int n, double p) {
    int count = 0;
    for (int i = 0; i < n; ++i) count += bernoulli(p) ? 1 : 0;
    return count;
  }

  // Standard normal via Box-Muller, one cached spare per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  float normal_f(float mean, float stddev) {
    return mean + stddev * static_cast<float>(normal());
  }

  // Normal resampled until |z| <= 2 standard deviations.
  float truncated_normal_f(float mean, float stddev) {
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return mean + stddev * static_cast<float>(z);
  }

  // Fisher-Yates shuffle of index order, driven by uniform_index.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_index(i + 1))]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pirtune
