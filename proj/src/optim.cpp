#include "pirtune/optim.hpp"

#include <cmath>

#include "pirtune/errors.hpp"
#include "pirtune/kernels.hpp"

namespace pirtune {

namespace {

void check_apply(const char* who, std::int64_t steps, size_t param_size,
                 size_t grad_size, size_t slot_size) {
  if (steps < 1) {
    throw Error(std::string(who) + ": apply() before start_step()");
  }
  if (param_size != grad_size) {
    throw ShapeError(std::string(who) + ": param/grad size mismatch");
  }
  if (slot_size != param_size) {
    throw ShapeError(std::string(who) + ": parameter size changed between steps");
  }
}

}  // namespace

AdamOptimizer::AdamOptimizer(float lr, float beta1, float beta2, float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  // Zero is allowed: it freezes the parameters while slots still advance.
  if (lr < 0.0f) throw ConfigError("adam: learning rate must not be negative");
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
}

void AdamOptimizer::start_step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  bc1_ = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(beta1_), t)));
  bc2_ = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(beta2_), t)));
}

void AdamOptimizer::apply(const std::string& key, std::vector<float>& param,
                          const std::vector<float>& grad) {
  auto [it, fresh] = slots_.try_emplace(key);
  if (fresh) {
    it->second.m.assign(param.size(), 0.0f);
    it->second.v.assign(param.size(), 0.0f);
  }
  check_apply("adam", steps_, param.size(), grad.size(), it->second.m.size());
  kernels::adam_update(param.data(), it->second.m.data(), it->second.v.data(),
                       grad.data(), static_cast<std::int64_t>(param.size()),
                       lr_, beta1_, beta2_, eps_, bc1_, bc2_);
}

void AdamOptimizer::restore(std::int64_t steps,
                            std::map<std::string, AdamSlots> slots) {
  if (steps < 0) throw ConfigError("adam: negative step count");
  steps_ = steps;
  slots_ = std::move(slots);
  if (steps_ > 0) {
    const double t = static_cast<double>(steps_);
    bc1_ = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(beta1_), t)));
    bc2_ = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(beta2_), t)));
  }
}

RmspropOptimizer::RmspropOptimizer(float lr, float decay, float eps)
    : lr_(lr), decay_(decay), eps_(eps) {
  if (lr < 0.0f) throw ConfigError("rmsprop: learning rate must not be negative");
  if (decay < 0.0f || decay >= 1.0f) {
    throw ConfigError("rmsprop: decay must lie in [0,1)");
  }
}

void RmspropOptimizer::start_step() { ++steps_; }

void RmspropOptimizer::apply(const std::string& key, std::vector<float>& param,
                             const std::vector<float>& grad) {
  auto [it, fresh] = slots_.try_emplace(key);
  if (fresh) it->second.assign(param.size(), 0.0f);
  check_apply("rmsprop", steps_, param.size(), grad.size(), it->second.size());
  kernels::rmsprop_update(param.data(), it->second.data(), grad.data(),
                          static_cast<std::int64_t>(param.size()), lr_, decay_,
                          eps_);
}

void RmspropOptimizer::restore(std::int64_t steps,
                               std::map<std::string, std::vector<float>> slots) {
  if (steps < 0) throw ConfigError("rmsprop: negative step count");
  steps_ = steps;
  slots_ = std::move(slots);
}

}  // namespace pirtune
