#include "meda/training_phases.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace meda {

namespace {

void check_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be finite and >= 0");
}

void check_xi(const XiWeights& xi) {
  for (const auto& v : {xi.rec, xi.gm, xi.cls_ltt, xi.cls_ori, xi.cls_syn})
    if (v) check_non_negative(*v, "xi");
}

void add_into(NetworkParams& acc, const NetworkParams& g) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += g.weights[l];
    acc.biases[l] += g.biases[l];
  }
}

bool is_min(const MinorityMask& m, int label) {
  return label >= 0 && static_cast<std::size_t>(label) < m.size() && m[static_cast<std::size_t>(label)];
}

}  // namespace

void PhaseWeights::validate() const {
  for (double v : {phase1.rec, phase1.gm, phase1.cls_ltt, phase1.cls_img, phase2.rec, phase2.cls_img, phase3.gm,
                   phase3.cls_ltt})
    check_non_negative(v, "beta");
  check_xi(xi1);
  check_xi(xi2);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs_phase1 < 0 || max_epochs_phase2 < 0 || max_epochs_phase3 < 0)
    throw ConfigError("max_epochs must be >= 0");
  check_non_negative(min_rel_improvement, "min_rel_improvement");
  for (double v : {lr.encoder, lr.decoder, lr.latent_classifier, lr.image_classifier, lr.gmm})
    check_non_negative(v, "learning rate");
}

double combine_min_maj(double loss_min, double loss_maj, double xi) { return loss_min + xi * loss_maj; }

double StepRecord::component(const std::string& name) const {
  for (const auto& [k, v] : components)
    if (k == name) return v;
  throw InputError("no loss component named " + name);
}

std::string LossTrace::to_csv() const {
  std::ostringstream out;
  out << "iteration,phase,component,value\n";
  char buf[64];
  for (const auto& s : steps) {
    for (const auto& [name, value] : s.components) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      out << s.iteration << ',' << s.phase << ',' << name << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", s.total);
    out << s.iteration << ',' << s.phase << ",total," << buf << '\n';
  }
  return out.str();
}

void LossTrace::append(const LossTrace& other) {
  const long offset = static_cast<long>(steps.size());
  for (StepRecord s : other.steps) {
    s.iteration += offset;
    steps.push_back(std::move(s));
  }
  epochs_run.insert(epochs_run.end(), other.epochs_run.begin(), other.epochs_run.end());
}

Optimizers Optimizers::from(const LearningRates& lr) {
  Optimizers o;
  o.encoder.hyper.lr = lr.encoder;
  o.decoder.hyper.lr = lr.decoder;
  o.latent_classifier.hyper.lr = lr.latent_classifier;
  o.image_classifier.hyper.lr = lr.image_classifier;
  o.gmm.hyper.lr = lr.gmm;
  return o;
}

Vector min_maj_weights(const Labels& labels, const MinorityMask& minority, std::optional<double> xi) {
  long n_min = 0, n_maj = 0;
  for (int l : labels) (is_min(minority, l) ? n_min : n_maj) += 1;
  double x = 1.0;
  if (xi) {
    x = *xi;
  } else if (n_min > 0 && n_maj > 0) {
    x = static_cast<double>(n_min) / static_cast<double>(n_maj);
  }
  Vector w(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    w(static_cast<Eigen::Index>(i)) = is_min(minority, labels[i]) ? 1.0 / static_cast<double>(n_min)
                                                                   : x / static_cast<double>(n_maj);
  return w;
}

// --- phase 1 ------------------------------------------------------------------------

StepEvaluation phase1_evaluate(const Matrix& images, const Labels& labels, const ModelQuartet& m,
                               const GMMParams& gmm, const PhaseWeights& w, const LGMConfig& cfg,
                               const MinorityMask& minority) {
  const auto& b = w.phase1;
  const auto enc = forward(m.encoder.spec, m.encoder.params, images);
  const auto dec = forward(m.decoder.spec, m.decoder.params, enc.output);
  const auto ltt = forward(m.latent_classifier.spec, m.latent_classifier.params, enc.output);
  const auto ori = forward(m.image_classifier.spec, m.image_classifier.params, images);
  const auto syn = forward(m.image_classifier.spec, m.image_classifier.params, dec.output);

  const auto rec = weighted_reconstruction_loss(dec.output, images, min_maj_weights(labels, minority, w.xi1.rec));
  const auto gm = lgm_loss_and_grads_weighted(enc.output, labels, gmm, cfg, min_maj_weights(labels, minority, w.xi1.gm));
  Matrix g_ltt, g_ori, g_syn;
  const double cls_ltt =
      weighted_cross_entropy(ltt.output, labels, min_maj_weights(labels, minority, w.xi1.cls_ltt), &g_ltt);
  const double cls_ori =
      weighted_cross_entropy(ori.output, labels, min_maj_weights(labels, minority, w.xi1.cls_ori), &g_ori);
  const double cls_syn =
      weighted_cross_entropy(syn.output, labels, min_maj_weights(labels, minority, w.xi1.cls_syn), &g_syn);
  const double cls_img = cls_ori + cls_syn;

  StepEvaluation ev;
  ev.record.phase = 1;
  ev.record.components = {{"rec", rec.value}, {"gm", gm.total}, {"cls_ltt", cls_ltt}, {"cls_img", cls_img}};
  ev.record.total = b.rec * rec.value + b.gm * gm.total + b.cls_ltt * cls_ltt + b.cls_img * cls_img;

  // image classifier: both streams
  auto gi_ori = backward(m.image_classifier.spec, m.image_classifier.params, ori.cache, b.cls_img * g_ori);
  auto gi_syn = backward(m.image_classifier.spec, m.image_classifier.params, syn.cache, b.cls_img * g_syn);
  add_into(gi_ori.param_grads, gi_syn.param_grads);
  // decoder: reconstruction + image classification of reconstructions
  const auto gd = backward(m.decoder.spec, m.decoder.params, dec.cache, b.rec * rec.grad + gi_syn.input_grad);
  const auto gl = backward(m.latent_classifier.spec, m.latent_classifier.params, ltt.cache, b.cls_ltt * g_ltt);
  const auto ge = backward(m.encoder.spec, m.encoder.params, enc.cache,
                           gd.input_grad + gl.input_grad + b.gm * gm.grad_features);

  ev.grads.encoder = ge.param_grads;
  ev.grads.decoder = gd.param_grads;
  ev.grads.latent_classifier = gl.param_grads;
  ev.grads.image_classifier = std::move(gi_ori.param_grads);
  ev.grads.gmm_means = b.gm * gm.grad_means;
  ev.grads.gmm_log_variances = b.gm * gm.grad_log_variances;
  return ev;
}

// --- phase 2 ------------------------------------------------------------------------

StepEvaluation phase2_evaluate(const Matrix& latents, const Matrix& real, const Labels& labels,
                               const ModelQuartet& m, const PhaseWeights& w, const MinorityMask& minority) {
  const auto& b = w.phase2;
  const auto dec = forward(m.decoder.spec, m.decoder.params, latents);
  const auto ori = forward(m.image_classifier.spec, m.image_classifier.params, real);
  const auto syn = forward(m.image_classifier.spec, m.image_classifier.params, dec.output);

  const auto rec = weighted_reconstruction_loss(dec.output, real, min_maj_weights(labels, minority, w.xi2.rec));
  Matrix g_ori, g_syn;
  const double cls_ori =
      weighted_cross_entropy(ori.output, labels, min_maj_weights(labels, minority, w.xi2.cls_ori), &g_ori);
  const double cls_syn =
      weighted_cross_entropy(syn.output, labels, min_maj_weights(labels, minority, w.xi2.cls_syn), &g_syn);
  const double cls_img = cls_ori + cls_syn;

  StepEvaluation ev;
  ev.record.phase = 2;
  ev.record.components = {{"rec", rec.value}, {"cls_img", cls_img}};
  ev.record.total = b.rec * rec.value + b.cls_img * cls_img;

  auto gi_ori = backward(m.image_classifier.spec, m.image_classifier.params, ori.cache, b.cls_img * g_ori);
  auto gi_syn = backward(m.image_classifier.spec, m.image_classifier.params, syn.cache, b.cls_img * g_syn);
  add_into(gi_ori.param_grads, gi_syn.param_grads);
  const auto gd = backward(m.decoder.spec, m.decoder.params, dec.cache, b.rec * rec.grad + gi_syn.input_grad);
  ev.grads.decoder = gd.param_grads;
  ev.grads.image_classifier = std::move(gi_ori.param_grads);
  return ev;
}

// --- phase 3 ------------------------------------------------------------------------

StepEvaluation phase3_evaluate(const Matrix& latents, const Labels& labels, const ModelQuartet& m,
                               const GMMParams& gmm_init, const PhaseWeights& w, const LGMConfig& cfg) {
  const auto& b = w.phase3;
  const Matrix synthesized = predict(m.decoder, latents);
  const auto enc = forward(m.encoder.spec, m.encoder.params, synthesized);
  const auto ltt = forward(m.latent_classifier.spec, m.latent_classifier.params, enc.output);
  const auto gm = lgm_loss_and_grads(enc.output, labels, gmm_init, cfg);
  Matrix g_ltt;
  const auto n = static_cast<Eigen::Index>(labels.size());
  const double cls_ltt = weighted_cross_entropy(ltt.output, labels, Vector::Constant(n, 1.0 / n), &g_ltt);

  StepEvaluation ev;
  ev.record.phase = 3;
  ev.record.components = {{"gm", gm.total}, {"cls_ltt", cls_ltt}};
  ev.record.total = b.gm * gm.total + b.cls_ltt * cls_ltt;

  const auto gl = backward(m.latent_classifier.spec, m.latent_classifier.params, ltt.cache, b.cls_ltt * g_ltt);
  const auto ge = backward(m.encoder.spec, m.encoder.params, enc.cache, gl.input_grad + b.gm * gm.grad_features);
  ev.grads.encoder = ge.param_grads;
  ev.grads.latent_classifier = gl.param_grads;
  return ev;
}

void apply_gradients(const QuartetGrads& g, ModelQuartet& models, GMMParams& gmm, Optimizers& opt) {
  if (g.encoder) adam_step(models.encoder.params, *g.encoder, opt.encoder);
  if (g.decoder) adam_step(models.decoder.params, *g.decoder, opt.decoder);
  if (g.latent_classifier) adam_step(models.latent_classifier.params, *g.latent_classifier, opt.latent_classifier);
  if (g.image_classifier) adam_step(models.image_classifier.params, *g.image_classifier, opt.image_classifier);
  if (g.gmm_means && g.gmm_log_variances) {
    std::vector<Matrix*> p{&gmm.means_mut(), &gmm.log_variances_mut()};
    std::vector<const Matrix*> gr{&*g.gmm_means, &*g.gmm_log_variances};
    adam_update(p, gr, opt.gmm);
    gmm.clamp();
  }
}

StepRecord phase1_step(const LabeledImageSet& batch, ModelQuartet& models, GMMParams& gmm, const PhaseWeights& w,
                       const LGMConfig& cfg, const MinorityMask& minority, Optimizers& opt) {
  if (batch.size() == 0) throw InputError("phase 1 batch is empty");
  auto ev = phase1_evaluate(batch.images, batch.labels, models, gmm, w, cfg, minority);
  apply_gradients(ev.grads, models, gmm, opt);
  return ev.record;
}

namespace {

Matrix sample_latents(const GMMParams& gmm, const Labels& labels, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix sd = (gmm.log_variances().array() * 0.5).exp().matrix();
  Matrix z(static_cast<Eigen::Index>(labels.size()), gmm.dim());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= gmm.class_count()) throw InputError("label outside the mixture");
    for (int j = 0; j < gmm.dim(); ++j)
      z(static_cast<Eigen::Index>(i), j) = gmm.means()(k, j) + sd(k, j) * normal(rng);
  }
  return z;
}

}  // namespace

StepRecord phase2_step(const GMMParams& gmm_init, const Labels& batch_labels, const LabeledImageSet& real,
                       ModelQuartet& models, const PhaseWeights& w, const MinorityMask& minority, Optimizers& opt,
                       Rng& rng) {
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(gmm_init.class_count()));
  for (std::size_t i = 0; i < real.size(); ++i)
    if (real.labels[i] >= 0 && real.labels[i] < gmm_init.class_count())
      members[static_cast<std::size_t>(real.labels[i])].push_back(i);
  for (int l : batch_labels)
    if (l < 0 || l >= gmm_init.class_count() || members[static_cast<std::size_t>(l)].empty())
      throw DataError("class " + std::to_string(l) + " has no real samples to pair with");

  const Matrix z = sample_latents(gmm_init, batch_labels, rng);
  Matrix paired(z.rows(), real.images.cols());
  for (std::size_t i = 0; i < batch_labels.size(); ++i) {
    const auto& pool = members[static_cast<std::size_t>(batch_labels[i])];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    paired.row(static_cast<Eigen::Index>(i)) = real.images.row(static_cast<Eigen::Index>(pool[pick(rng)]));
  }
  auto ev = phase2_evaluate(z, paired, batch_labels, models, w, minority);
  GMMParams unused = gmm_init;
  apply_gradients(ev.grads, models, unused, opt);
  return ev.record;
}

StepRecord phase3_step(const GMMParams& gmm_init, const Labels& batch_labels, ModelQuartet& models,
                       const PhaseWeights& w, const LGMConfig& cfg, Optimizers& opt, Rng& rng) {
  const Matrix z = sample_latents(gmm_init, batch_labels, rng);
  auto ev = phase3_evaluate(z, batch_labels, models, gmm_init, w, cfg);
  GMMParams unused = gmm_init;
  apply_gradients(ev.grads, models, unused, opt);
  return ev.record;
}

// --- epochs ------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> plan_batches(const Labels& labels, const MinorityMask& minority,
                                                   int batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const std::size_t n = labels.size();
  if (n == 0) return {};
  std::vector<std::size_t> mins, majs;
  for (std::size_t i = 0; i < n; ++i) (is_min(minority, labels[i]) ? mins : majs).push_back(i);
  std::shuffle(mins.begin(), mins.end(), rng);
  std::shuffle(majs.begin(), majs.end(), rng);

  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t count = (n + bs - 1) / bs;
  std::vector<std::size_t> capacity(count, bs);
  capacity.back() = n - (count - 1) * bs;
  std::vector<std::vector<std::size_t>> batches(count);

  std::size_t b = 0;
  for (std::size_t idx : mins) {
    while (batches[b].size() >= capacity[b]) b = (b + 1) % count;
    batches[b].push_back(idx);
    b = (b + 1) % count;
  }
  std::size_t next = 0;
  for (std::size_t i = 0; i < count; ++i)
    while (batches[i].size() < capacity[i]) batches[i].push_back(majs[next++]);

  if (!mins.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, mins.size() - 1);
    for (auto& batch : batches) {
      const bool has_min = std::any_of(batch.begin(), batch.end(), [&](std::size_t i) { return is_min(minority, labels[i]); });
      if (!has_min) batch.push_back(mins[pick(rng)]);
    }
  }
  for (auto& batch : batches) std::shuffle(batch.begin(), batch.end(), rng);
  return batches;
}

int run_epochs(const EpochControl& control, int steps_per_epoch, const std::function<StepRecord(int, int)>& step,
               LossTrace& trace) {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  for (; epoch < control.max_epochs; ++epoch) {
    double sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      StepRecord rec = step(epoch, s);
      rec.iteration = static_cast<long>(trace.steps.size());
      const bool finite = std::isfinite(rec.total);
      sum += rec.total;
      trace.steps.push_back(std::move(rec));
      if (!finite) {
        trace.epochs_run.push_back(epoch + 1);
        throw TrainingDiverged("non-finite loss at iteration " + std::to_string(trace.steps.size() - 1), trace);
      }
    }
    const double mean = steps_per_epoch > 0 ? sum / steps_per_epoch : 0.0;
    if (std::isinf(best)) {
      best = mean;
      continue;
    }
    const double rel = (best - mean) / std::max(std::abs(best), 1e-12);
    if (rel < control.min_rel_improvement) {
      ++stale;
    } else {
      stale = 0;
    }
    best = std::min(best, mean);
    if (stale >= control.patience) {
      ++epoch;
      break;
    }
  }
  trace.epochs_run.push_back(epoch);
  return epoch;
}

namespace {

Labels balanced_labels(int count, int classes, long offset) {
  Labels out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = static_cast<int>((offset + i) % classes);
  return out;
}

}  // namespace

LossTrace run_phase(PhaseId phase, const PhaseContext& ctx, TrainingState& state, Rng& rng) {
  if (!ctx.train || ctx.train->size() == 0) throw DataError("phase needs a non-empty training set");
  ctx.weights.validate();
  ctx.lgm.validate();
  ctx.train_cfg.validate();
  const auto& train = *ctx.train;
  const auto& tc = ctx.train_cfg;
  const int steps = static_cast<int>((train.size() + tc.batch_size - 1) / tc.batch_size);
  EpochControl control{0, tc.patience, tc.min_rel_improvement};
  LossTrace trace;
  std::vector<std::vector<std::size_t>> plan;
  auto replan = [&](int s) {
    if (s == 0) plan = plan_batches(train.labels, ctx.minority, tc.batch_size, rng);
  };

  switch (phase) {
    case PhaseId::One: {
      control.max_epochs = tc.max_epochs_phase1;
      run_epochs(control, steps, [&](int, int s) {
        replan(s);
        const LabeledImageSet batch = train.subset(plan[static_cast<std::size_t>(s)]);
        return phase1_step(batch, state.models, state.gmm, ctx.weights, ctx.lgm, ctx.minority, state.opt);
      }, trace);
      break;
    }
    case PhaseId::Two: {
      if (!ctx.gmm_init) throw ConfigError("phase 2 needs the initial mixture");
      control.max_epochs = tc.max_epochs_phase2;
      run_epochs(control, steps, [&](int, int s) {
        replan(s);
        Labels labels;
        for (std::size_t i : plan[static_cast<std::size_t>(s)]) labels.push_back(train.labels[i]);
        return phase2_step(*ctx.gmm_init, labels, train, state.models, ctx.weights, ctx.minority, state.opt, rng);
      }, trace);
      break;
    }
    case PhaseId::Three: {
      if (!ctx.gmm_init) throw ConfigError("phase 3 needs the initial mixture");
      control.max_epochs = tc.max_epochs_phase3;
      const int k = ctx.gmm_init->class_count();
      run_epochs(control, steps, [&](int e, int s) {
        const Labels labels = balanced_labels(tc.batch_size, k, static_cast<long>(e) * steps + s);
        return phase3_step(*ctx.gmm_init, labels, state.models, ctx.weights, ctx.lgm, state.opt, rng);
      }, trace);
      break;
    }
  }
  return trace;
}

}  // namespace meda
