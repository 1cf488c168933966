#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "pirtune/errors.hpp"
#include "pirtune/optim.hpp"

using namespace pirtune;

namespace {

// Textbook double-precision references the kernel path must track.
struct RefAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  long t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    ++t;
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      double mh = m[i] / (1.0 - std::pow(b1, t));
      double vh = v[i] / (1.0 - std::pow(b2, t));
      p[i] -= lr * (mh / (std::sqrt(vh) + eps));
    }
  }
};

struct RefRmsprop {
  double lr, decay, eps;
  std::vector<double> v;
  void step(std::vector<double>& p, const std::vector<double>& g) {
    if (v.empty()) v.assign(p.size(), 0.0);
    for (size_t i = 0; i < p.size(); ++i) {
      v[i] = decay * v[i] + (1.0 - decay) * g[i] * g[i];
      p[i] -= lr * (g[i] / std::sqrt(v[i] + eps));
    }
  }
};

}  // namespace

TEST_CASE("adam tracks a double-precision reference") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  const size_t n = 257;

  std::vector<float> p(n);
  for (auto& x : p) x = dist(rng);
  std::vector<double> pref(p.begin(), p.end());

  AdamOptimizer opt(1e-2f, 0.5f, 0.999f);
  RefAdam ref{1e-2, 0.5, 0.999, 1e-8, {}, {}};

  for (int step = 0; step < 40; ++step) {
    std::vector<float> g(n);
    for (auto& x : g) x = dist(rng);
    std::vector<double> gd(g.begin(), g.end());
    opt.start_step();
    opt.apply("p", p, g);
    ref.step(pref, gd);
  }
  CHECK(opt.steps() == 40);
  for (size_t i = 0; i < n; ++i) {
    CHECK(std::abs(p[i] - pref[i]) <= 1e-5 * std::max(1.0, std::abs(pref[i])));
  }
}

TEST_CASE("adam first step moves each weight by about lr") {
  std::vector<float> p{0.0f, 1.0f, -2.0f};
  std::vector<float> g{0.3f, -0.8f, 0.0001f};
  AdamOptimizer opt(1e-3f, 0.5f, 0.999f);
  opt.start_step();
  opt.apply("p", p, g);
  // After bias correction mhat = g and vhat = g^2, so the step is
  // lr * g / (|g| + eps), i.e. lr * sign(g) up to eps.
  CHECK(p[0] == doctest::Approx(0.0f - 1e-3f).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(1.0f + 1e-3f).epsilon(1e-3));
  CHECK(p[2] == doctest::Approx(-2.0f - 1e-3f).epsilon(1e-3));
}

TEST_CASE("adam minimizes a quadratic") {
  std::vector<float> p{4.0f, -3.0f};
  const std::vector<float> target{1.0f, 2.0f};
  AdamOptimizer opt(0.05f, 0.9f, 0.999f);
  for (int step = 0; step < 400; ++step) {
    std::vector<float> g(2);
    for (int i = 0; i < 2; ++i) g[i] = 2.0f * (p[i] - target[i]);
    opt.start_step();
    opt.apply("p", p, g);
  }
  CHECK(std::abs(p[0] - target[0]) < 1e-2f);
  CHECK(std::abs(p[1] - target[1]) < 1e-2f);
}

TEST_CASE("rmsprop tracks a double-precision reference") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  const size_t n = 130;

  std::vector<float> p(n);
  for (auto& x : p) x = dist(rng);
  std::vector<double> pref(p.begin(), p.end());

  RmspropOptimizer opt(1e-3f, 0.9f);
  RefRmsprop ref{1e-3, 0.9, 1e-8, {}};

  for (int step = 0; step < 40; ++step) {
    std::vector<float> g(n);
    for (auto& x : g) x = dist(rng);
    std::vector<double> gd(g.begin(), g.end());
    opt.start_step();
    opt.apply("p", p, g);
    ref.step(pref, gd);
  }
  for (size_t i = 0; i < n; ++i) {
    CHECK(std::abs(p[i] - pref[i]) <= 1e-5 * std::max(1.0, std::abs(pref[i])));
  }
}

TEST_CASE("optimizer state restore resumes bit-identically") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  const size_t n = 64;
  std::vector<float> p0(n);
  for (auto& x : p0) x = dist(rng);
  std::vector<std::vector<float>> grads;
  for (int s = 0; s < 20; ++s) {
    std::vector<float> g(n);
    for (auto& x : g) x = dist(rng);
    grads.push_back(std::move(g));
  }

  auto run = [&](AdamOptimizer& opt, std::vector<float>& p, int from, int to) {
    for (int s = from; s < to; ++s) {
      opt.start_step();
      opt.apply("w", p, grads[static_cast<size_t>(s)]);
    }
  };

  std::vector<float> p_full = p0;
  AdamOptimizer full(1e-2f, 0.5f, 0.999f);
  run(full, p_full, 0, 20);

  std::vector<float> p_split = p0;
  AdamOptimizer first(1e-2f, 0.5f, 0.999f);
  run(first, p_split, 0, 10);
  AdamOptimizer second(1e-2f, 0.5f, 0.999f);
  second.restore(first.steps(), first.slots());
  run(second, p_split, 10, 20);

  for (size_t i = 0; i < n; ++i) CHECK(p_full[i] == p_split[i]);
}

TEST_CASE("optimizer misuse is rejected") {
  AdamOptimizer opt(1e-3f);
  std::vector<float> p{1.0f, 2.0f};
  std::vector<float> g{0.1f, 0.2f};
  CHECK_THROWS_AS(opt.apply("p", p, g), Error);

  opt.start_step();
  std::vector<float> bad{0.1f};
  CHECK_THROWS_AS(opt.apply("p", p, bad), ShapeError);
  opt.apply("p", p, g);
  std::vector<float> shrunk{1.0f};
  CHECK_THROWS_AS(opt.apply("p", shrunk, shrunk), ShapeError);

  CHECK_THROWS_AS(AdamOptimizer(-1.0f), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer(1e-3f, 1.0f), ConfigError);
  CHECK_THROWS_AS(RmspropOptimizer(1e-3f, 1.5f), ConfigError);
}
