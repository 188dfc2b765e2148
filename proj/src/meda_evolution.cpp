#include "meda/meda_evolution.hpp"

#include "meda/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace meda {

void EvolutionConfig::validate() const {
  if (pop_per_class < 1) throw ConfigError("pop_per_class must be >= 1");
  if (!(selection_rate > 0.0 && selection_rate <= 1.0)) throw ConfigError("selection_rate must lie in (0, 1]");
  if (!(blend >= 0.0 && blend <= 1.0)) throw ConfigError("blend must lie in [0, 1]");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (real_batch_per_class < 1) throw ConfigError("real_batch_per_class must be >= 1");
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
}

std::string EvolutionTrace::to_csv() const {
  std::ostringstream out;
  out << "outer,iteration,feat4,gm1,gm2,spop,latent_survival,image_survival,mean_fitness_gm2,mean_fitness_spop,"
         "updated,event\n";
  char buf[160];
  for (const auto& it : iterations) {
    std::snprintf(buf, sizeof buf, "%d,%d,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%d,", it.outer, it.iteration,
                  it.feat4, it.gm1, it.gm2, it.spop, it.latent_survival, it.image_survival, it.mean_fitness_gm2,
                  it.mean_fitness_spop, it.updated ? 1 : 0);
    out << buf << it.event << '\n';
  }
  return out.str();
}

Classifier as_classifier(const Network& net) {
  return [&net](const Matrix& x) { return predict(net, x); };
}

std::vector<std::size_t> select_correct(const Matrix& scores, const Labels& labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) throw ShapeError("score rows differ from labels");
  const Labels pred = argmax_rows(scores);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) keep.push_back(i);
  return keep;
}

LatentPopulation quality_filter_latents(const LatentPopulation& pop, const Classifier& latent_classifier) {
  const auto keep = select_correct(latent_classifier(pop.features), pop.labels);
  if (keep.empty()) throw EmptySurvivors("latent classifier rejected every sample");
  return pop.subset(keep);
}

LatentPopulation quality_filter_latents(const LatentPopulation& pop, const ModelQuartet& models) {
  return quality_filter_latents(pop, as_classifier(models.latent_classifier));
}

LabeledImageSet quality_filter_images(const LabeledImageSet& images, const Classifier& image_classifier) {
  const auto keep = select_correct(image_classifier(images.images), images.labels);
  if (keep.empty()) throw EmptySurvivors("image classifier rejected every sample");
  return images.subset(keep);
}

LabeledImageSet quality_filter_images(const LabeledImageSet& images, const ModelQuartet& models) {
  return quality_filter_images(images, as_classifier(models.image_classifier));
}

DiversitySelection diversity_select(const LabeledImageSet& quali, const LabeledImageSet& real, double selection_rate) {
  if (!(selection_rate > 0.0 && selection_rate <= 1.0)) throw InputError("selection_rate must lie in (0, 1]");
  const int k = std::max(class_count_of(quali), class_count_of(real));

  std::vector<std::vector<AHash>> ref_hashes(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < real.size(); ++i)
    ref_hashes[static_cast<std::size_t>(real.labels[i])].push_back(
        average_hash(real.image(i), real.height, real.width, real.channels));

  DiversitySelection out;
  out.fitness.assign(quali.size(), 0.0);
  out.agreement.assign(quali.size(), 0);
  out.scale.assign(quali.size(), 1);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < quali.size(); ++i) {
    const auto c = static_cast<std::size_t>(quali.labels[i]);
    const auto& refs = ref_hashes[c];
    if (refs.empty()) throw DataError("no real reference images for class " + std::to_string(c));
    const AHash h = average_hash(quali.image(i), quali.height, quali.width, quali.channels);
    long long matches = 0;
    for (const auto& r : refs) matches += 64 - static_cast<long long>((h.bits ^ r.bits).count());
    out.agreement[i] = matches;
    out.scale[i] = 64 * static_cast<long long>(refs.size());
    out.fitness[i] = static_cast<double>(matches) / static_cast<double>(out.scale[i]);
    by_class[c].push_back(i);
  }

  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return out.agreement[a] < out.agreement[b]; });
    const auto keep = static_cast<std::size_t>(std::ceil(selection_rate * static_cast<double>(members.size()) - 1e-9));
    out.indices.insert(out.indices.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(keep, 1, members.size())));
  }
  out.selected = quali.subset(out.indices);
  return out;
}

GMMParams evolve_distribution(const LatentPopulation& gm2, const LatentPopulation& spop, const GMMParams& prev,
                              double gamma) {
  Matrix means = prev.means();
  Matrix logvar = prev.log_variances();
  for (int c = 0; c < prev.class_count(); ++c) {
    const bool in_quali = std::find(gm2.labels.begin(), gm2.labels.end(), c) != gm2.labels.end();
    const bool in_diver = std::find(spop.labels.begin(), spop.labels.end(), c) != spop.labels.end();
    if (!in_quali || !in_diver) continue;
    const ClassGaussian g = evolve_update(estimate_class_gaussian(gm2, c), estimate_class_gaussian(spop, c), gamma);
    means.row(c) = g.mean.transpose();
    logvar.row(c) = g.variance.array().log().transpose();
  }
  return GMMParams(std::move(means), std::move(logvar));
}

namespace {

std::vector<int> class_counts(const Labels& labels, int k) {
  std::vector<int> h(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++h[static_cast<std::size_t>(l)];
  return h;
}

// Up to `per_class` uniformly drawn real images of every class in `classes`.
LabeledImageSet draw_references(const LabeledImageSet& real, const std::vector<int>& classes, int per_class, Rng& rng) {
  std::vector<std::size_t> pick;
  for (int c : classes) {
    auto members = real.members_of(c);
    if (members.empty()) throw DataError("no real images of class " + std::to_string(c) + " for fitness references");
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(std::min<std::size_t>(members.size(), static_cast<std::size_t>(per_class)));
    pick.insert(pick.end(), members.begin(), members.end());
  }
  return real.subset(pick);
}

// Integer sums keep the class means exact up to one rounding, so a subset of
// lowest-fitness members never averages above the whole pool.
double class_averaged(const DiversitySelection& sel, const Labels& labels, const std::vector<std::size_t>& members,
                      int k) {
  std::vector<long long> sum(static_cast<std::size_t>(k), 0);
  std::vector<long long> count(static_cast<std::size_t>(k), 0);
  std::vector<long long> scale(static_cast<std::size_t>(k), 1);
  for (std::size_t i : members) {
    const auto c = static_cast<std::size_t>(labels[i]);
    sum[c] += sel.agreement[i];
    scale[c] = sel.scale[i];
    ++count[c];
  }
  double total = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < sum.size(); ++c)
    if (count[c] > 0) {
      total += static_cast<double>(sum[c]) / (static_cast<double>(scale[c]) * static_cast<double>(count[c]));
      ++classes;
    }
  return classes ? total / classes : 0.0;
}

}  // namespace

MedaResult run_meda(const ModelQuartet& models, const GMMParams& init, const LabeledImageSet& real,
                    const EvolutionConfig& cfg, Rng& rng, int outer_index) {
  cfg.validate();
  models.validate();
  const int k = init.class_count();
  if (models.class_count() != k || models.latent_dim() != init.dim())
    throw ShapeError("models and mixture disagree on K or h");

  MedaResult result{init, {}};
  const std::vector<int> counts(static_cast<std::size_t>(k), cfg.pop_per_class);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    EvolutionIteration it;
    it.outer = outer_index;
    it.iteration = iter;

    const LatentPopulation feat4 = sample(result.gmm, counts, rng);
    it.feat4 = feat4.size();
    it.class_feat4 = class_counts(feat4.labels, k);
    try {
      const auto gm1_idx = select_correct(predict(models.latent_classifier, feat4.features), feat4.labels);
      const LatentPopulation gm1 = feat4.subset(gm1_idx);
      it.gm1 = gm1.size();
      it.class_gm1 = class_counts(gm1.labels, k);
      it.latent_survival = static_cast<double>(it.gm1) / static_cast<double>(it.feat4);
      if (gm1.size() == 0) throw EmptySurvivors("latent classifier rejected every sample");

      LabeledImageSet synth;
      synth.height = real.height;
      synth.width = real.width;
      synth.channels = real.channels;
      synth.images = predict(models.decoder, gm1.features).cwiseMax(0.0).cwiseMin(1.0);
      synth.labels = gm1.labels;
      const auto quali_idx = select_correct(predict(models.image_classifier, synth.images), synth.labels);
      it.gm2 = quali_idx.size();
      it.image_survival = static_cast<double>(it.gm2) / static_cast<double>(it.gm1);
      if (quali_idx.empty()) throw EmptySurvivors("image classifier rejected every decoded sample");
      const LabeledImageSet quali = synth.subset(quali_idx);
      const LatentPopulation gm2 = gm1.subset(quali_idx);
      it.class_gm2 = class_counts(gm2.labels, k);

      std::vector<int> present;
      for (int c = 0; c < k; ++c)
        if (it.class_gm2[static_cast<std::size_t>(c)] > 0) present.push_back(c);
      const LabeledImageSet refs = draw_references(real, present, cfg.real_batch_per_class, rng);
      const DiversitySelection sel = diversity_select(quali, refs, cfg.selection_rate);
      const LatentPopulation spop = gm2.subset(sel.indices);
      it.spop = spop.size();
      it.class_spop = class_counts(spop.labels, k);

      std::vector<std::size_t> all(quali.size());
      std::iota(all.begin(), all.end(), 0);
      it.mean_fitness_gm2 = class_averaged(sel, quali.labels, all, k);
      it.mean_fitness_spop = class_averaged(sel, quali.labels, sel.indices, k);

      result.gmm = evolve_distribution(gm2, spop, result.gmm, cfg.blend);
      it.updated = true;
    } catch (const EmptySurvivors& e) {
      it.event = e.what();
    }
    result.trace.iterations.push_back(std::move(it));
  }
  return result;
}

// --- full program -----------------------------------------------------------------------

ArtifactPaths ArtifactPaths::in(const std::filesystem::path& run_dir) {
  return {run_dir / "models.bin", run_dir / "gmm_init.bin", run_dir / "gmm_opti.bin", run_dir / "loss_trace.csv",
          run_dir / "evolution_trace.csv"};
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  io::write_file(p, std::span<const char>(text.data(), text.size()));
}

void persist(const FullTrainingResult& r, const ArtifactPaths& paths, bool have_init, bool have_opti) {
  save_params(r.models, paths.models);
  if (have_init) save_gmm(r.gmm_init, paths.gmm_init);
  if (have_opti) save_gmm(r.gmm_opti, paths.gmm_opti);
  write_text(paths.loss_trace, r.loss_trace.to_csv());
  write_text(paths.evolution_trace, r.evolution_trace.to_csv());
}

}  // namespace

FullTrainingResult run_full_training(const LabeledImageSet& train, int class_count, const FullTrainingConfig& cfg,
                                     const std::optional<ArtifactPaths>& artifacts) {
  cfg.evolution.validate();
  cfg.train.validate();
  cfg.weights.validate();
  cfg.lgm.validate();
  train.validate();
  if (class_count < 2) throw ConfigError("need at least two classes");

  Rng rng(cfg.train.seed);
  FullTrainingResult r;
  r.models = build_quartet(cfg.arch, train.pixel_count(), class_count, rng);
  Matrix means(class_count, cfg.arch.latent_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = normal(rng);
  TrainingState state{r.models, GMMParams(means, Matrix::Zero(class_count, cfg.arch.latent_dim)),
                      Optimizers::from(cfg.train.lr)};

  PhaseContext ctx;
  ctx.train = &train;
  ctx.weights = cfg.weights;
  ctx.lgm = cfg.lgm;
  ctx.train_cfg = cfg.train;
  ctx.minority.assign(static_cast<std::size_t>(class_count), false);
  for (int c : cfg.minority_classes) {
    if (c < 0 || c >= class_count) throw ConfigError("minority class " + std::to_string(c) + " is not a class");
    ctx.minority[static_cast<std::size_t>(c)] = true;
  }

  bool have_init = false, have_opti = false;
  try {
    r.loss_trace.append(run_phase(PhaseId::One, ctx, state, rng));
    r.phase_sequence.push_back(1);
    r.gmm_init = state.gmm;
    r.gmm_opti = state.gmm;
    have_init = true;
    ctx.gmm_init = &r.gmm_init;
    for (int outer = 0; outer < cfg.evolution.outer_iterations; ++outer) {
      r.loss_trace.append(run_phase(PhaseId::Two, ctx, state, rng));
      r.phase_sequence.push_back(2);
      r.loss_trace.append(run_phase(PhaseId::Three, ctx, state, rng));
      r.phase_sequence.push_back(3);
      MedaResult evo = run_meda(state.models, r.gmm_init, train, cfg.evolution, rng, outer);
      r.phase_sequence.push_back(4);
      r.gmm_opti = std::move(evo.gmm);
      have_opti = true;
      r.evolution_trace.iterations.insert(r.evolution_trace.iterations.end(), evo.trace.iterations.begin(),
                                          evo.trace.iterations.end());
    }
  } catch (const TrainingDiverged& e) {
    r.models = state.models;
    r.loss_trace.append(e.trace());
    if (artifacts) persist(r, *artifacts, have_init, have_opti);
    throw TrainingDiverged(e.detail(), r.loss_trace);
  }
  r.models = state.models;
  if (artifacts) persist(r, *artifacts, have_init, have_opti);
  return r;
}

}  // namespace meda
