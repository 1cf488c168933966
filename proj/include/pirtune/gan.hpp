#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "pirtune/graph.hpp"
#include "pirtune/nets.hpp"
#include "pirtune/optim.hpp"
#include "pirtune/rng.hpp"
#include "pirtune/synthetic_data.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

// Adversarial losses in log-likelihood form. Every term is a mean
// log-probability, so it is never positive, and training drives each
// network to maximize its combined term (the generator objective is the
// non-saturating form: it maximizes log P(real on fakes) rather than
// minimizing log P(fake on fakes)).
struct GanLossTerms {
  double fake_image = 0.0;        // mean log P(D calls G(z) fake)
  double fake_image_fools = 0.0;  // mean log P(D calls G(z) real)
  double real_image = 0.0;        // mean log P(D calls a real image real)

  // Class terms, only meaningful when conditional is set. Each is a mean
  // log P(class | image) under the discriminator's class head.
  bool conditional = false;
  double fake_image_class = 0.0;
  double real_image_class = 0.0;

  float w_fake_class = 1.5f;
  float w_real_class = 1.0f;

  // What the discriminator maximizes. The fake-class term is deliberately
  // absent so the discriminator never cooperates with the generator on
  // class evidence for generated images.
  double discriminator_loss() const;
  // What the generator maximizes.
  double generator_loss() const;
};

// Probability heads over the discriminator's raw output columns: column 0
// maps through tanh to P(real) = (tanh(s) + 1) / 2, clamped away from 0 and
// 1 before any log; columns 1..C are class logits.
inline constexpr float kProbEps = 1e-6f;

NodeId prob_real(Graph& g, NodeId disc_out);
NodeId prob_fake(Graph& g, NodeId disc_out);
NodeId class_logits(Graph& g, NodeId disc_out, std::int64_t num_classes);

// Appends one-hot class columns to a latent batch, producing the input a
// conditional generator expects.
Tensor append_one_hot(const Tensor& z, const std::vector<int>& classes,
                      std::int64_t num_classes);

// Evaluates the unconditional terms on the given batches, eval mode, without
// touching either network. z must already match the generator's input width.
GanLossTerms gan_losses(NetworkState& gen, NetworkState& disc,
                        const Tensor& real, const Tensor& z);

// Conditional variant: z carries only the latent part, the sampled classes
// are appended here, and both class terms are filled in. Throws ConfigError
// if a label set does not match its batch or the discriminator has no class
// head.
GanLossTerms acgan_losses(NetworkState& gen, NetworkState& disc,
                          const Tensor& real,
                          const std::vector<int>& real_labels, const Tensor& z,
                          const std::vector<int>& fake_classes,
                          float w_fake_class = 1.5f, float w_real_class = 1.0f);

struct GanTrainConfig {
  std::int64_t steps = 20000;
  std::int64_t batch = 32;
  float d_lr = 1e-5f;
  float d_decay = 0.9f;
  float g_lr = 1e-5f;
  float g_beta1 = 0.5f;
  float w_fake_class = 1.5f;
  float w_real_class = 1.0f;
  std::int64_t history_every = 50;
};

// Extra generator objective: receives the step graph and the generated
// batch, returns a scalar node that is maximized alongside the fooling
// term. Used to steer generation toward an external score.
using GeneratorObjective = std::function<NodeId(Graph&, NodeId fake_images)>;

struct GanStepLosses {
  GanLossTerms terms;
  double objective = 0.0;  // extra generator term, when one is set
};

struct GanHistoryRow {
  std::int64_t step = 0;  // 1-based
  double d_loss = 0.0;
  double g_loss = 0.0;
  double fake_image = 0.0;
  double fake_image_fools = 0.0;
  double real_image = 0.0;
  double fake_image_class = 0.0;
  double real_image_class = 0.0;
  double objective = 0.0;
};

void write_gan_history_csv(const std::vector<GanHistoryRow>& rows,
                           std::ostream& out);

// One training engine for both pretraining and later tuning: each step runs
// a single discriminator update (RMSProp) followed by a single generator
// update (Adam), on fresh batches. The discriminator's running batch-norm
// stats advance only during its own update; the generator's pass through it
// uses batch statistics without recording them. When no extra generator
// objective is set the step graph is exactly plain adversarial training, so
// a tuning run with the objective disabled reproduces pretraining bitwise.
class GanTrainer {
 public:
  GanTrainer(NetworkState& gen, NetworkState& disc, const Corpus& corpus,
             GanTrainConfig cfg, bool conditional, std::uint64_t seed);

  void set_generator_objective(GeneratorObjective objective, float weight);

  // One discriminator step then one generator step. Throws NumericError
  // naming the step index if any loss term turns non-finite.
  GanStepLosses step();

  // Runs cfg.steps steps (or the given count), recording history every
  // cfg.history_every steps and always at the final step.
  std::vector<GanHistoryRow> run();
  std::vector<GanHistoryRow> run(std::int64_t steps);

  std::int64_t steps_done() const { return step_index_; }
  const GanTrainConfig& config() const { return cfg_; }

 private:
  Tensor draw_real(std::vector<int>& labels);
  Tensor draw_latents(std::vector<int>& classes);

  NetworkState* gen_;
  NetworkState* disc_;
  const Corpus* corpus_;
  GanTrainConfig cfg_;
  bool conditional_;
  RmspropOptimizer d_opt_;
  AdamOptimizer g_opt_;
  Rng rng_data_;
  Rng rng_latent_;
  Rng rng_class_;
  Rng rng_dropout_;
  GeneratorObjective objective_;
  float objective_weight_ = 0.0f;
  std::int64_t step_index_ = 0;
};

struct PretrainResult {
  NetworkState gen;
  NetworkState disc;
  std::vector<GanHistoryRow> history;
};

// Initializes a generator/discriminator pair from the preset and trains for
// cfg.steps. Identical (corpus, preset, conditional, cfg, seed) inputs give
// bit-identical checkpoints.
PretrainResult pretrain_gan(const Corpus& corpus, ScalePreset preset,
                            bool conditional, GanTrainConfig cfg,
                            std::uint64_t seed);

// Real-vs-fake accuracy of the discriminator, eval mode: every corpus image
// plus an equal number of generated images, scored by P(real) vs 1/2.
double discriminator_accuracy(NetworkState& gen, NetworkState& disc,
                              const Corpus& corpus, std::uint64_t seed);

}  // namespace pirtune
