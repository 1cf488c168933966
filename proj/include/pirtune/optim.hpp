#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pirtune {

// Per-parameter optimizers keyed by parameter name. Slots are created lazily
// on first use and sized to the parameter; the caller advances the step with
// start_step() once per training step, then applies every parameter's
// gradient. State is exposed for checkpointing so interrupted training
// resumes bit-identically.

struct AdamSlots {
  std::vector<float> m;
  std::vector<float> v;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                         float eps = 1e-8f);

  void start_step();
  void apply(const std::string& key, std::vector<float>& param,
             const std::vector<float>& grad);

  float learning_rate() const { return lr_; }
  void set_learning_rate(float lr) { lr_ = lr; }
  std::int64_t steps() const { return steps_; }
  const std::map<std::string, AdamSlots>& slots() const { return slots_; }

  void restore(std::int64_t steps, std::map<std::string, AdamSlots> slots);

 private:
  float lr_;
  float beta1_;
  float beta2_;
  float eps_;
  std::int64_t steps_ = 0;
  float bc1_ = 1.0f;
  float bc2_ = 1.0f;
  std::map<std::string, AdamSlots> slots_;
};

class RmspropOptimizer {
 public:
  explicit RmspropOptimizer(float lr, float decay = 0.9f, float eps = 1e-8f);

  void start_step();
  void apply(const std::string& key, std::vector<float>& param,
             const std::vector<float>& grad);

  float learning_rate() const { return lr_; }
  void set_learning_rate(float lr) { lr_ = lr; }
  std::int64_t steps() const { return steps_; }
  const std::map<std::string, std::vector<float>>& slots() const {
    return slots_;
  }

  void restore(std::int64_t steps, std::map<std::string, std::vector<float>> slots);

 private:
  float lr_;
  float decay_;
  float eps_;
  std::int64_t steps_ = 0;
  std::map<std::string, std::vector<float>> slots_;
};

}  // namespace pirtune
