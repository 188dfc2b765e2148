#include "helpers.hpp"
#include "meda/training_phases.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace meda;
using testutil::random_matrix;

namespace {

const ArchitectureConfig kTinyArch{3, {6}, {6}, {5}, {6, 4}};

struct Fixture {
  LabeledImageSet data;
  ModelQuartet models;
  GMMParams gmm;
  MinorityMask minority{false, true, false};
};

Fixture make_fixture(std::uint64_t seed, int n = 12) {
  Rng rng(seed);
  Fixture f;
  f.data.height = 3;
  f.data.width = 3;
  f.data.images = random_matrix(rng, n, 9, 0.0, 1.0);
  f.data.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) f.data.labels[static_cast<std::size_t>(i)] = i % 3;
  f.models = build_quartet(kTinyArch, 9, 3, rng);
  // nonzero biases keep finite-difference probes away from ReLU kinks at exactly 0
  for (Network* net : {&f.models.encoder, &f.models.decoder, &f.models.latent_classifier, &f.models.image_classifier})
    for (auto& b : net->params.biases) b = random_matrix(rng, b.rows(), b.cols(), 0.05, 0.3);
  f.gmm = testutil::random_gmm(rng, 3, 3);
  return f;
}

bool same(const ModelQuartet& a, const ModelQuartet& b, bool enc, bool dec, bool ltt, bool img) {
  return (!enc || a.encoder.params.same_values(b.encoder.params)) &&
         (!dec || a.decoder.params.same_values(b.decoder.params)) &&
         (!ltt || a.latent_classifier.params.same_values(b.latent_classifier.params)) &&
         (!img || a.image_classifier.params.same_values(b.image_classifier.params));
}

double weighted_total(const StepRecord& r, std::initializer_list<std::pair<const char*, double>> betas) {
  double t = 0.0;
  for (const auto& [name, beta] : betas) t += beta * r.component(name);
  return t;
}

void check_grads(Network& net, const NetworkParams& analytic, const std::function<double()>& f, double tol) {
  auto params = net.params.tensors();
  auto grads = analytic.tensors();
  for (std::size_t t = 0; t < params.size(); ++t)
    CHECK(testutil::max_rel_error(*grads[t], testutil::numeric_grad(*params[t], f), 1e-7) <= tol);
}

}  // namespace

TEST_CASE("combine_min_maj examples") {
  CHECK(combine_min_maj(2.0, 3.0, 0.0) == 2.0);
  CHECK(combine_min_maj(2.0, 3.0, 1.0) == 5.0);
  CHECK(combine_min_maj(2.0, 3.0, 0.5) == 3.5);
}

TEST_CASE("min_maj_weights realise L_min + xi * L_maj") {
  const MinorityMask m{false, true};
  const Labels y{0, 0, 0, 1};
  Vector w = min_maj_weights(y, m, 0.5);
  CHECK(w(3) == 1.0);
  CHECK(w(0) == doctest::Approx(0.5 / 3));
  w = min_maj_weights(y, m, std::nullopt);
  CHECK(w(0) == doctest::Approx(1.0 / 9));  // auto xi = 1/3
  w = min_maj_weights({0, 0}, m, std::nullopt);
  CHECK(w(0) == 0.5);
}

TEST_CASE("phase 1: zero betas leave every parameter untouched") {
  Fixture f = make_fixture(1);
  const ModelQuartet before = f.models;
  const GMMParams gmm_before = f.gmm;
  PhaseWeights w;
  w.phase1 = {0.0, 0.0, 0.0, 0.0};
  Optimizers opt = Optimizers::from(LearningRates{});
  phase1_step(f.data, f.models, f.gmm, w, LGMConfig{}, f.minority, opt);
  CHECK(same(before, f.models, true, true, true, true));
  CHECK(f.gmm == gmm_before);
}

TEST_CASE("phase 1: total is the beta-weighted sum of components") {
  Fixture f = make_fixture(2);
  PhaseWeights w;
  w.phase1 = {0.3, 1.7, 0.9, 2.1};
  Optimizers opt = Optimizers::from(LearningRates{});
  const auto r = phase1_step(f.data, f.models, f.gmm, w, LGMConfig{}, f.minority, opt);
  CHECK(std::abs(r.total - weighted_total(r, {{"rec", 0.3}, {"gm", 1.7}, {"cls_ltt", 0.9}, {"cls_img", 2.1}})) < 1e-10);
}

TEST_CASE("phase 1 gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Fixture f = make_fixture(10 + seed, 6);
    PhaseWeights w;
    w.phase1 = {0.7, 1.3, 0.8, 1.1};
    const LGMConfig cfg{0.2, 0.3};
    const auto ev = phase1_evaluate(f.data.images, f.data.labels, f.models, f.gmm, w, cfg, f.minority);
    Matrix means = f.gmm.means();
    Matrix lv = f.gmm.log_variances();
    auto loss = [&] {
      return phase1_evaluate(f.data.images, f.data.labels, f.models, GMMParams(means, lv), w, cfg, f.minority)
          .record.total;
    };
    check_grads(f.models.encoder, *ev.grads.encoder, loss, 1e-4);
    check_grads(f.models.decoder, *ev.grads.decoder, loss, 1e-4);
    check_grads(f.models.latent_classifier, *ev.grads.latent_classifier, loss, 1e-4);
    check_grads(f.models.image_classifier, *ev.grads.image_classifier, loss, 1e-4);
    CHECK(testutil::max_rel_error(*ev.grads.gmm_means, testutil::numeric_grad(means, loss)) <= 1e-4);
    CHECK(testutil::max_rel_error(*ev.grads.gmm_log_variances, testutil::numeric_grad(lv, loss)) <= 1e-4);
  }
}

TEST_CASE("phase 1: one small step decreases the objective") {
  std::vector<double> deltas;
  for (std::uint64_t seed : {21, 22, 23}) {
    Fixture f = make_fixture(seed);
    const PhaseWeights w;
    const LGMConfig cfg;
    const double before = phase1_evaluate(f.data.images, f.data.labels, f.models, f.gmm, w, cfg, f.minority).record.total;
    LearningRates lr{1e-4, 1e-4, 1e-4, 1e-4, 1e-4};
    Optimizers opt = Optimizers::from(lr);
    phase1_step(f.data, f.models, f.gmm, w, cfg, f.minority, opt);
    const double after = phase1_evaluate(f.data.images, f.data.labels, f.models, f.gmm, w, cfg, f.minority).record.total;
    deltas.push_back(after - before);
  }
  std::sort(deltas.begin(), deltas.end());
  CHECK(deltas[1] < 0.0);
}

TEST_CASE("phase 2 routing, bookkeeping and determinism") {
  Fixture f = make_fixture(3);
  const ModelQuartet before = f.models;
  PhaseWeights w;
  w.phase2 = {0.6, 1.4};
  Optimizers opt = Optimizers::from(LearningRates{});
  Rng rng(5);
  const Labels batch{0, 1, 2, 0, 1};
  const auto r = phase2_step(f.gmm, batch, f.data, f.models, w, f.minority, opt, rng);
  CHECK(same(before, f.models, true, false, true, false));
  CHECK_FALSE(before.decoder.params.same_values(f.models.decoder.params));
  CHECK(std::abs(r.total - weighted_total(r, {{"rec", 0.6}, {"cls_img", 1.4}})) < 1e-10);

  Fixture g = make_fixture(3);
  Optimizers opt2 = Optimizers::from(LearningRates{});
  Rng rng2(5);
  const auto r2 = phase2_step(g.gmm, batch, g.data, g.models, w, g.minority, opt2, rng2);
  CHECK(r2.total == r.total);

  // with the classification term off the image classifier is still untouched by the decoder-only objective
  Fixture h = make_fixture(4);
  const ModelQuartet hb = h.models;
  PhaseWeights off;
  off.phase2 = {1.0, 0.0};
  Optimizers opt3 = Optimizers::from(LearningRates{});
  phase2_step(h.gmm, batch, h.data, h.models, off, h.minority, opt3, rng);
  CHECK(same(hb, h.models, true, false, true, true));

  LabeledImageSet missing = h.data.subset(h.data.members_of(0));
  CHECK_THROWS_AS(phase2_step(h.gmm, batch, missing, h.models, w, h.minority, opt3, rng), DataError);
}

TEST_CASE("phase 3 keeps the decoder and image classifier frozen") {
  Fixture f = make_fixture(6);
  const ModelQuartet before = f.models;
  PhaseWeights w;
  w.phase3 = {0.0, 1.5};
  Optimizers opt = Optimizers::from(LearningRates{});
  Rng rng(2);
  const auto r = phase3_step(f.gmm, {0, 1, 2, 1}, f.models, w, LGMConfig{}, opt, rng);
  CHECK(same(before, f.models, false, true, false, true));
  CHECK_FALSE(before.encoder.params.same_values(f.models.encoder.params));
  CHECK(r.total == 1.5 * r.component("cls_ltt"));
}

TEST_CASE("phase 3 encoder gradient through decode then encode") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Fixture f = make_fixture(40 + seed);
    Rng rng(seed);
    const Matrix z = random_matrix(rng, 2, 3);
    const Labels y{0, 2};
    PhaseWeights w;
    w.phase3 = {0.8, 1.2};
    const LGMConfig cfg{0.1, 0.2};
    const auto ev = phase3_evaluate(z, y, f.models, f.gmm, w, cfg);
    auto loss = [&] { return phase3_evaluate(z, y, f.models, f.gmm, w, cfg).record.total; };
    check_grads(f.models.encoder, *ev.grads.encoder, loss, 1e-3);
    check_grads(f.models.latent_classifier, *ev.grads.latent_classifier, loss, 1e-3);
    CHECK_FALSE(ev.grads.decoder.has_value());
  }
}

TEST_CASE("plan_batches covers every row and puts a minority row in each batch") {
  Rng rng(7);
  Labels y(103, 0);
  for (int i = 0; i < 5; ++i) y[static_cast<std::size_t>(i * 20)] = 1;
  const MinorityMask m{false, true};
  const auto batches = plan_batches(y, m, 16, rng);
  CHECK(batches.size() == 7);
  std::vector<int> seen(103, 0);
  for (const auto& b : batches) {
    bool has_min = false;
    for (std::size_t i : b) {
      ++seen[i];
      has_min = has_min || y[i] == 1;
    }
    CHECK(has_min);
  }
  for (int c : seen) CHECK(c >= 1);
}

TEST_CASE("run_epochs stop rule and divergence") {
  LossTrace trace;
  auto constant = [](int, int) {
    StepRecord r;
    r.total = 2.0;
    return r;
  };
  // the first epoch sets the baseline; `patience` flat epochs follow
  CHECK(run_epochs(EpochControl{100, 4, 1e-3}, 3, constant, trace) == 5);
  CHECK(trace.steps.size() == 15);

  LossTrace t2;
  auto falling = [](int epoch, int) {
    StepRecord r;
    r.total = 1.0 / (1.0 + epoch);
    return r;
  };
  CHECK(run_epochs(EpochControl{7, 2, 1e-3}, 2, falling, t2) == 7);

  LossTrace t3;
  auto bad = [](int epoch, int s) {
    StepRecord r;
    r.total = epoch == 1 && s == 1 ? NAN : 1.0;
    return r;
  };
  try {
    run_epochs(EpochControl{5, 2, 1e-3}, 3, bad, t3);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.trace().steps.size() == 5);
  }
}

TEST_CASE("run_phase bookkeeping") {
  Fixture f = make_fixture(8, 30);
  TrainingState st{f.models, f.gmm, Optimizers::from(LearningRates{})};
  PhaseContext ctx;
  ctx.train = &f.data;
  ctx.gmm_init = &f.gmm;
  ctx.minority = f.minority;
  ctx.train_cfg.batch_size = 8;
  ctx.train_cfg.max_epochs_phase1 = 0;
  Rng rng(1);
  const ModelQuartet before = st.models;
  CHECK(run_phase(PhaseId::One, ctx, st, rng).steps.empty());
  CHECK(same(before, st.models, true, true, true, true));

  ctx.train_cfg.max_epochs_phase1 = 3;
  ctx.train_cfg.patience = 10;
  const auto t = run_phase(PhaseId::One, ctx, st, rng);
  CHECK(t.steps.size() == 3 * 4);  // ceil(30 / 8) batches per epoch

  Fixture g = make_fixture(8, 30);
  TrainingState st2{g.models, g.gmm, Optimizers::from(LearningRates{})};
  Rng rng2(1);
  ctx.train_cfg.max_epochs_phase1 = 0;
  run_phase(PhaseId::One, ctx, st2, rng2);
  ctx.train_cfg.max_epochs_phase1 = 3;
  const auto t2 = run_phase(PhaseId::One, ctx, st2, rng2);
  REQUIRE(t2.steps.size() == t.steps.size());
  for (std::size_t i = 0; i < t.steps.size(); ++i) CHECK(t2.steps[i].total == t.steps[i].total);
}

TEST_CASE("loss trace CSV has one row per component plus the total") {
  LossTrace t;
  StepRecord r;
  r.phase = 2;
  r.components = {{"rec", 0.5}, {"cls_img", 0.25}};
  r.total = 0.75;
  t.steps.push_back(r);
  const std::string csv = t.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("iteration,phase,component,value\n", 0) == 0);
  CHECK(csv.find("0,2,total,0.75") != std::string::npos);
}
