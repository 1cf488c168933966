#include "pirtune/gan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pirtune/csv.hpp"
#include "pirtune/errors.hpp"

namespace pirtune {

namespace {

std::int64_t latent_width(const NetworkState& gen) {
  const NetworkSpec& s = gen.spec();
  return s.input_shape[0] - (s.conditional ? s.num_classes : 0);
}

Tensor corpus_rows(const Corpus& corpus, const std::vector<std::int64_t>& idx) {
  const std::int64_t s = corpus.image_size();
  const std::int64_t px = s * s * 3;
  Tensor batch({static_cast<std::int64_t>(idx.size()), s, s, 3});
  for (size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(corpus.images.data.begin() + idx[i] * px, px,
                batch.data.begin() + static_cast<std::int64_t>(i) * px);
  }
  return batch;
}

}  // namespace

double GanLossTerms::discriminator_loss() const {
  double l = fake_image + real_image;
  if (conditional) l += static_cast<double>(w_real_class) * real_image_class;
  return l;
}

double GanLossTerms::generator_loss() const {
  double l = fake_image_fools;
  if (conditional) l += static_cast<double>(w_fake_class) * fake_image_class;
  return l;
}

NodeId prob_real(Graph& g, NodeId disc_out) {
  const NodeId t = g.tanh(g.slice_cols(disc_out, 0, 1));
  return g.clamp(g.affine(t, 0.5f, 0.5f), kProbEps, 1.0f - kProbEps);
}

NodeId prob_fake(Graph& g, NodeId disc_out) {
  const NodeId t = g.tanh(g.slice_cols(disc_out, 0, 1));
  return g.clamp(g.affine(t, -0.5f, 0.5f), kProbEps, 1.0f - kProbEps);
}

NodeId class_logits(Graph& g, NodeId disc_out, std::int64_t num_classes) {
  return g.slice_cols(disc_out, 1, 1 + num_classes);
}

Tensor append_one_hot(const Tensor& z, const std::vector<int>& classes,
                      std::int64_t num_classes) {
  if (z.shape.size() != 2) throw ShapeError("append_one_hot: expected [N, D] latents");
  const std::int64_t n = z.shape[0];
  const std::int64_t d = z.shape[1];
  if (static_cast<std::int64_t>(classes.size()) != n) {
    throw ConfigError("append_one_hot: need one class per latent row");
  }
  Tensor out({n, d + num_classes});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(z.data.begin() + i * d, d, out.data.begin() + i * (d + num_classes));
    const int c = classes[static_cast<size_t>(i)];
    if (c < 0 || c >= num_classes) {
      throw ConfigError("append_one_hot: class " + std::to_string(c) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    out.data[static_cast<size_t>(i * (d + num_classes) + d + c)] = 1.0f;
  }
  return out;
}

GanLossTerms gan_losses(NetworkState& gen, NetworkState& disc,
                        const Tensor& real, const Tensor& z) {
  if (real.shape.empty() || real.shape[0] == 0) {
    throw ConfigError("gan_losses: empty real batch");
  }
  if (z.shape.empty() || z.shape[0] == 0) {
    throw ConfigError("gan_losses: empty latent batch");
  }
  Graph g(false);
  BoundNet gnet(g, gen, false);
  BoundNet dnet(g, disc, false);
  const NodeId fake = gnet.forward(g.leaf(z)).output;
  const NodeId d_real = dnet.forward(g.leaf(real)).output;
  const NodeId d_fake = dnet.forward(fake).output;
  GanLossTerms t;
  t.real_image = g.scalar_hi(g.mean_all(g.log(prob_real(g, d_real))));
  t.fake_image = g.scalar_hi(g.mean_all(g.log(prob_fake(g, d_fake))));
  t.fake_image_fools = g.scalar_hi(g.mean_all(g.log(prob_real(g, d_fake))));
  return t;
}

GanLossTerms acgan_losses(NetworkState& gen, NetworkState& disc,
                          const Tensor& real,
                          const std::vector<int>& real_labels, const Tensor& z,
                          const std::vector<int>& fake_classes,
                          float w_fake_class, float w_real_class) {
  if (!gen.spec().conditional || !disc.spec().conditional) {
    throw ConfigError("acgan_losses: both networks must be conditional");
  }
  const std::int64_t num_classes = disc.spec().num_classes;
  if (real.shape.empty() ||
      static_cast<std::int64_t>(real_labels.size()) != real.shape[0]) {
    throw ConfigError("acgan_losses: need one label per real image");
  }
  const Tensor zc = append_one_hot(z, fake_classes, num_classes);

  Graph g(false);
  BoundNet gnet(g, gen, false);
  BoundNet dnet(g, disc, false);
  const NodeId fake = gnet.forward(g.leaf(zc)).output;
  const NodeId d_real = dnet.forward(g.leaf(real)).output;
  const NodeId d_fake = dnet.forward(fake).output;
  GanLossTerms t;
  t.conditional = true;
  t.w_fake_class = w_fake_class;
  t.w_real_class = w_real_class;
  t.real_image = g.scalar_hi(g.mean_all(g.log(prob_real(g, d_real))));
  t.fake_image = g.scalar_hi(g.mean_all(g.log(prob_fake(g, d_fake))));
  t.fake_image_fools = g.scalar_hi(g.mean_all(g.log(prob_real(g, d_fake))));
  t.real_image_class =
      -g.scalar_hi(g.cross_entropy(class_logits(g, d_real, num_classes), real_labels));
  t.fake_image_class =
      -g.scalar_hi(g.cross_entropy(class_logits(g, d_fake, num_classes), fake_classes));
  return t;
}

GanTrainer::GanTrainer(NetworkState& gen, NetworkState& disc,
                       const Corpus& corpus, GanTrainConfig cfg,
                       bool conditional, std::uint64_t seed)
    : gen_(&gen),
      disc_(&disc),
      corpus_(&corpus),
      cfg_(cfg),
      conditional_(conditional),
      d_opt_(cfg.d_lr, cfg.d_decay),
      g_opt_(cfg.g_lr, cfg.g_beta1),
      rng_data_(Rng(seed).derive(1)),
      rng_latent_(Rng(seed).derive(2)),
      rng_class_(Rng(seed).derive(3)),
      rng_dropout_(Rng(seed).derive(4)) {
  if (corpus.count() < 2) throw ConfigError("gan: corpus needs at least 2 images");
  if (cfg.batch < 2) throw ConfigError("gan: batch must be at least 2");
  if (gen.spec().conditional != conditional ||
      disc.spec().conditional != conditional) {
    throw ConfigError("gan: network conditionality does not match the trainer");
  }
}

void GanTrainer::set_generator_objective(GeneratorObjective objective,
                                         float weight) {
  // Weight zero drops the hook entirely so the step graph, and therefore the
  // parameter trajectory, is bitwise that of plain adversarial training.
  objective_ = weight == 0.0f ? GeneratorObjective{} : std::move(objective);
  objective_weight_ = weight;
}

Tensor GanTrainer::draw_real(std::vector<int>& labels) {
  const std::int64_t n = corpus_->count();
  std::vector<std::int64_t> idx(static_cast<size_t>(cfg_.batch));
  labels.resize(static_cast<size_t>(cfg_.batch));
  for (size_t i = 0; i < idx.size(); ++i) {
    idx[i] = rng_data_.uniform_index(n);
    labels[i] = corpus_->labels[static_cast<size_t>(idx[i])];
  }
  return corpus_rows(*corpus_, idx);
}

Tensor GanTrainer::draw_latents(std::vector<int>& classes) {
  const std::int64_t latent = latent_width(*gen_);
  Tensor z({cfg_.batch, latent});
  for (float& v : z.data) v = rng_latent_.normal_f(0.0f, 1.0f);
  if (!conditional_) {
    classes.clear();
    return z;
  }
  const std::int64_t num_classes = gen_->spec().num_classes;
  classes.resize(static_cast<size_t>(cfg_.batch));
  for (int& c : classes) c = static_cast<int>(rng_class_.uniform_index(num_classes));
  return append_one_hot(z, classes, num_classes);
}

GanStepLosses GanTrainer::step() {
  const std::int64_t num_classes = gen_->spec().num_classes;
  GanStepLosses out;
  out.terms.conditional = conditional_;
  out.terms.w_fake_class = cfg_.w_fake_class;
  out.terms.w_real_class = cfg_.w_real_class;

  {
    // Discriminator step. The generator is bound without gradients, so this
    // update cannot touch it.
    Graph g;
    BoundNet gnet(g, *gen_, false);
    BoundNet dnet(g, *disc_, true);
    std::vector<int> real_labels;
    const Tensor real = draw_real(real_labels);
    std::vector<int> fake_classes;
    const Tensor z = draw_latents(fake_classes);
    const NodeId fake = gnet.forward(g.leaf(z)).output;
    const NodeId d_real = dnet.forward(g.leaf(real), true, &rng_dropout_).output;
    const NodeId d_fake = dnet.forward(fake, true, &rng_dropout_).output;
    const NodeId l_real = g.mean_all(g.log(prob_real(g, d_real)));
    const NodeId l_fake = g.mean_all(g.log(prob_fake(g, d_fake)));
    NodeId root = g.add(l_real, l_fake);
    if (conditional_) {
      // Cross entropy is a negative log-likelihood, so the class term enters
      // with a negated weight. Only real images feed the class head here;
      // scoring fakes would let the discriminator cooperate with the
      // generator instead of opposing it.
      const NodeId ce_real =
          g.cross_entropy(class_logits(g, d_real, num_classes), real_labels);
      root = g.add_scaled(root, ce_real, -cfg_.w_real_class);
      out.terms.real_image_class = -g.scalar_hi(ce_real);
    }
    // Seed -1 turns the minimizing optimizers into ascent on the terms.
    g.backward(root, -1.0f);
    d_opt_.start_step();
    for (auto& p : disc_->params()) {
      if (!p.trainable) continue;
      const std::vector<float>& gr = g.grad(dnet.param_leaf(p.name));
      if (!gr.empty()) d_opt_.apply(p.name, p.tensor.data, gr);
    }
    out.terms.real_image = g.scalar_hi(l_real);
    out.terms.fake_image = g.scalar_hi(l_fake);
  }

  {
    // Generator step on fresh latents. The discriminator is bound without
    // gradients and its running stats are left alone.
    Graph g;
    BoundNet gnet(g, *gen_, true);
    BoundNet dnet(g, *disc_, false);
    std::vector<int> fake_classes;
    const Tensor z = draw_latents(fake_classes);
    const NodeId fake = gnet.forward(g.leaf(z)).output;
    const NodeId d_fake =
        dnet.forward(fake, true, &rng_dropout_, /*update_stats=*/false).output;
    const NodeId fools = g.mean_all(g.log(prob_real(g, d_fake)));
    NodeId root = fools;
    if (conditional_) {
      const NodeId ce_fake =
          g.cross_entropy(class_logits(g, d_fake, num_classes), fake_classes);
      root = g.add_scaled(root, ce_fake, -cfg_.w_fake_class);
      out.terms.fake_image_class = -g.scalar_hi(ce_fake);
    }
    if (objective_) {
      const NodeId obj = objective_(g, fake);
      root = g.add_scaled(root, obj, objective_weight_);
      out.objective = g.scalar_hi(obj);
    }
    g.backward(root, -1.0f);
    g_opt_.start_step();
    for (auto& p : gen_->params()) {
      if (!p.trainable) continue;
      const std::vector<float>& gr = g.grad(gnet.param_leaf(p.name));
      if (!gr.empty()) g_opt_.apply(p.name, p.tensor.data, gr);
    }
    out.terms.fake_image_fools = g.scalar_hi(fools);
  }

  ++step_index_;
  if (!std::isfinite(out.terms.discriminator_loss()) ||
      !std::isfinite(out.terms.generator_loss()) ||
      !std::isfinite(out.objective)) {
    throw NumericError("gan training diverged at step " +
                       std::to_string(step_index_));
  }
  return out;
}

std::vector<GanHistoryRow> GanTrainer::run() { return run(cfg_.steps); }

std::vector<GanHistoryRow> GanTrainer::run(std::int64_t steps) {
  std::vector<GanHistoryRow> history;
  for (std::int64_t s = 0; s < steps; ++s) {
    const GanStepLosses l = step();
    const bool periodic =
        cfg_.history_every > 0 && step_index_ % cfg_.history_every == 0;
    if (periodic || s + 1 == steps) {
      history.push_back({step_index_, l.terms.discriminator_loss(),
                         l.terms.generator_loss(), l.terms.fake_image,
                         l.terms.fake_image_fools, l.terms.real_image,
                         l.terms.fake_image_class, l.terms.real_image_class,
                         l.objective});
    }
  }
  return history;
}

void write_gan_history_csv(const std::vector<GanHistoryRow>& rows,
                           std::ostream& out) {
  out << "step,d_loss,g_loss,fake_image,fake_image_fools,real_image,"
         "fake_image_class,real_image_class,objective\n";
  for (const GanHistoryRow& r : rows) {
    out << r.step << ',' << csv_double(r.d_loss) << ',' << csv_double(r.g_loss) << ','
        << csv_double(r.fake_image) << ',' << csv_double(r.fake_image_fools) << ','
        << csv_double(r.real_image) << ',' << csv_double(r.fake_image_class) << ','
        << csv_double(r.real_image_class) << ',' << csv_double(r.objective) << '\n';
  }
}

PretrainResult pretrain_gan(const Corpus& corpus, ScalePreset preset,
                            bool conditional, GanTrainConfig cfg,
                            std::uint64_t seed) {
  Rng init = Rng(seed).derive(0);
  PretrainResult r{
      NetworkState(build_generator(preset, conditional), init),
      NetworkState(build_discriminator(preset, conditional), init),
      {}};
  GanTrainer trainer(r.gen, r.disc, corpus, cfg, conditional, seed);
  r.history = trainer.run();
  return r;
}

double discriminator_accuracy(NetworkState& gen, NetworkState& disc,
                              const Corpus& corpus, std::uint64_t seed) {
  const std::int64_t n = corpus.count();
  if (n == 0) throw ConfigError("discriminator_accuracy: empty corpus");
  const bool conditional = gen.spec().conditional;
  const std::int64_t num_classes = gen.spec().num_classes;
  const std::int64_t latent = latent_width(gen);
  Rng rng(seed);
  std::int64_t correct = 0;
  for (std::int64_t at = 0; at < n; at += 32) {
    const std::int64_t b = std::min<std::int64_t>(32, n - at);
    std::vector<std::int64_t> idx(static_cast<size_t>(b));
    for (std::int64_t i = 0; i < b; ++i) idx[static_cast<size_t>(i)] = at + i;
    const Tensor real = corpus_rows(corpus, idx);
    Tensor z({b, latent});
    for (float& v : z.data) v = rng.normal_f(0.0f, 1.0f);
    if (conditional) {
      std::vector<int> classes(static_cast<size_t>(b));
      for (int& c : classes) c = static_cast<int>(rng.uniform_index(num_classes));
      z = append_one_hot(z, classes, num_classes);
    }
    Graph g(false);
    BoundNet gnet(g, gen, false);
    BoundNet dnet(g, disc, false);
    const NodeId fake = gnet.forward(g.leaf(z)).output;
    const NodeId p_real = prob_real(g, dnet.forward(g.leaf(real)).output);
    const NodeId p_fake = prob_real(g, dnet.forward(fake).output);
    for (float p : g.value(p_real)) correct += p > 0.5f ? 1 : 0;
    for (float p : g.value(p_fake)) correct += p < 0.5f ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(2 * n);
}

}  // namespace pirtune
