#include "helpers.hpp"
#include "meda/gm_distribution.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace meda;
using testutil::random_matrix;

TEST_CASE("GMMParams rejects non-finite entries and floors variances") {
  Matrix m = Matrix::Zero(2, 2);
  Matrix lv = Matrix::Constant(2, 2, -100.0);
  GMMParams p(m, lv);
  CHECK(p.variances().minCoeff() >= kVarianceFloor * (1 - 1e-12));
  m(0, 0) = std::nan("");
  CHECK_THROWS_AS(GMMParams(m, Matrix::Zero(2, 2)), InputError);
  CHECK_THROWS_AS(GMMParams(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("sample: floor variances stay on the class mean") {
  Matrix means(2, 3);
  means << 1, 2, 3, -1, -2, -3;
  GMMParams p(means, Matrix::Constant(2, 3, std::log(kVarianceFloor)));
  const std::vector<int> counts{4, 5};
  const auto pop = sample(p, counts, 7);
  REQUIRE(pop.size() == 9);
  for (std::size_t i = 0; i < pop.size(); ++i)
    CHECK((pop.features.row(static_cast<Eigen::Index>(i)) - means.row(pop.labels[i])).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("sample: label bookkeeping and empty counts") {
  const GMMParams p = GMMParams::standard(3, 2);
  const std::vector<int> counts{3, 0, 2};
  const auto pop = sample(p, counts, 1);
  CHECK(pop.labels == Labels{0, 0, 0, 2, 2});
  const std::vector<int> zeros{0, 0, 0};
  CHECK_THROWS_AS(sample(p, zeros, 1), EmptyPopulation);
  const std::vector<int> negative{1, -1, 0};
  CHECK_THROWS_AS(sample(p, negative, 1), InputError);
}

TEST_CASE("sample: moments match the specified distribution") {
  Matrix means(1, 2);
  means << 1.0, -1.0;
  Matrix lv(1, 2);
  lv << std::log(4.0), std::log(9.0);
  const std::vector<int> counts{100000};
  const auto pop = sample(GMMParams(means, lv), counts, 11);
  const RowVector mu = pop.features.colwise().mean();
  const RowVector var = (pop.features.rowwise() - mu).array().square().colwise().mean();
  CHECK(std::abs(mu(0) - 1.0) < 0.05);
  CHECK(std::abs(mu(1) + 1.0) < 0.05);
  CHECK(std::abs(var(0) - 4.0) < 0.2);
  CHECK(std::abs(var(1) - 9.0) < 0.2);
}

TEST_CASE("sample then estimate recovers every class within O(1/sqrt(n))") {
  Rng rng(3);
  const GMMParams p = testutil::random_gmm(rng, 3, 4);
  const int n = 20000;
  const std::vector<int> counts{n, n, n};
  const auto pop = sample(p, counts, 5);
  for (int k = 0; k < 3; ++k) {
    const auto g = estimate_class_gaussian(pop, k);
    const Vector var = p.variances().row(k).transpose();
    const Vector sd = var.cwiseSqrt();
    CHECK(((g.mean - p.means().row(k).transpose()).cwiseQuotient(sd)).cwiseAbs().maxCoeff() < 5.0 / std::sqrt(n));
    CHECK((g.variance.cwiseQuotient(var).array() - 1.0).abs().maxCoeff() < 5.0 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("sample is bit-identical for equal seeds") {
  Rng rng(9);
  const GMMParams p = testutil::random_gmm(rng, 4, 3);
  const std::vector<int> counts{2, 3, 1, 5};
  const auto a = sample(p, counts, 42);
  const auto b = sample(p, counts, 42);
  CHECK(a.labels == b.labels);
  CHECK(a.features == b.features);
  const auto c = sample(p, counts, 43);
  CHECK_FALSE(a.features == c.features);
}

TEST_CASE("estimate_class_gaussian examples") {
  LatentPopulation pop;
  pop.features = Matrix(2, 2);
  pop.features << 0, 0, 2, 2;
  pop.labels = {1, 1};
  auto g = estimate_class_gaussian(pop, 1);
  CHECK(g.mean(0) == 1.0);
  CHECK(g.mean(1) == 1.0);
  CHECK(g.variance(0) == 1.0);
  CHECK(g.variance(1) == 1.0);
  CHECK_THROWS_AS(estimate_class_gaussian(pop, 0), EmptyClass);

  LatentPopulation single;
  single.features = Matrix::Constant(1, 3, 5.0);
  single.labels = {0};
  g = estimate_class_gaussian(single, 0);
  for (int j = 0; j < 3; ++j) CHECK(g.variance(j) == kVarianceFloor);
}

TEST_CASE("estimate_class_gaussian matches a loop oracle") {
  Rng rng(21);
  LatentPopulation pop;
  pop.features = random_matrix(rng, 50, 4, -3, 3);
  pop.labels = testutil::random_labels(rng, 50, 2);
  for (int k = 0; k < 2; ++k) {
    const auto g = estimate_class_gaussian(pop, k);
    for (int j = 0; j < 4; ++j) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < 50; ++i)
        if (pop.labels[i] == k) {
          sum += pop.features(i, j);
          ++count;
        }
      const double mean = sum / count;
      double ss = 0.0;
      for (int i = 0; i < 50; ++i)
        if (pop.labels[i] == k) ss += (pop.features(i, j) - mean) * (pop.features(i, j) - mean);
      CHECK(std::abs(g.mean(j) - mean) < 1e-12);
      CHECK(std::abs(g.variance(j) - std::max(ss / count, kVarianceFloor)) < 1e-12);
    }
  }
}

TEST_CASE("evolve_update endpoints, arithmetic and idempotence") {
  ClassGaussian q{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)};
  ClassGaussian d{Vector::Constant(1, 0.0), Vector::Constant(1, 4.0)};
  auto r = evolve_update(q, d, 1.0);
  CHECK(r.mean == q.mean);
  CHECK(r.variance == q.variance);
  r = evolve_update(q, d, 0.0);
  CHECK(r.mean == d.mean);
  CHECK(r.variance == d.variance);
  r = evolve_update(q, d, 0.7);
  CHECK(r.mean(0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(r.variance(0) == doctest::Approx(0.7 * 2.0 + 0.3 * 4.0).epsilon(1e-15));

  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ClassGaussian g{random_matrix(rng, 3, 1).col(0), random_matrix(rng, 3, 1, 0.1, 2.0).col(0)};
    const auto same = evolve_update(g, g, u(rng));
    CHECK((same.mean - g.mean).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((same.variance - g.variance).cwiseAbs().maxCoeff() < 1e-15);
  }
  ClassGaussian wide{Vector::Zero(2), Vector::Ones(2)};
  CHECK_THROWS_AS(evolve_update(q, wide, 0.5), ShapeError);
}

TEST_CASE("GMM file round trip and guards") {
  Rng rng(8);
  const GMMParams p = testutil::random_gmm(rng, 3, 5);
  const auto dir = std::filesystem::temp_directory_path() / "meda_gmm_test";
  std::filesystem::create_directories(dir);
  save_gmm(p, dir / "g.bin");
  CHECK(load_gmm(dir / "g.bin") == p);

  auto bytes = encode_gmm(p);
  CHECK(decode_gmm(bytes) == p);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_gmm(bad), PersistError);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_gmm(bytes), PersistError);
  std::filesystem::remove_all(dir);
}

namespace {
double sphere(const Vector& x) { return -x.squaredNorm(); }

BasicEDAConfig sphere_config(int iterations) {
  BasicEDAConfig c;
  c.population_size = 100;
  c.superior_rate = 0.3;
  c.blend = 0.7;
  c.max_iterations = iterations;
  c.init_bounds.assign(5, {-5.0, 5.0});
  return c;
}
}  // namespace

TEST_CASE("basic EDA: zero iterations returns the best initial individual") {
  const auto r = run_basic_eda(sphere, sphere_config(0), 3);
  REQUIRE(r.history.size() == 1);
  CHECK(r.best_fitness == r.history[0].best_fitness);
  CHECK(sphere(r.best_solution) == r.best_fitness);
}

TEST_CASE("basic EDA converges on the 5-d sphere and best fitness never drops") {
  std::vector<double> best;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = run_basic_eda(sphere, sphere_config(200), seed);
    for (std::size_t i = 1; i < r.history.size(); ++i)
      CHECK(r.history[i].best_fitness >= r.history[i - 1].best_fitness);
    best.push_back(r.best_fitness);
  }
  std::sort(best.begin(), best.end());
  CHECK(best[1] >= -1e-2);
}

TEST_CASE("basic EDA with full selection blends identical statistics") {
  auto cfg = sphere_config(5);
  cfg.superior_rate = 1.0;
  const auto r = run_basic_eda(sphere, cfg, 5);
  REQUIRE(r.history.size() == 6);
  for (std::size_t i = 0; i + 1 < r.history.size(); ++i) {
    const auto& g = r.history[i];
    CHECK(g.superior_stats.mean == g.population_stats.mean);
    CHECK((g.blended.mean - g.population_stats.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.blended.variance - g.population_stats.variance).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("basic EDA is deterministic and rejects non-finite fitness") {
  const auto a = run_basic_eda(sphere, sphere_config(10), 77);
  const auto b = run_basic_eda(sphere, sphere_config(10), 77);
  CHECK(a.best_solution == b.best_solution);
  CHECK(a.best_fitness == b.best_fitness);
  auto bad = [](const Vector& x) { return x(0) > 0 ? std::nan("") : 0.0; };
  try {
    run_basic_eda(bad, sphere_config(3), 1);
    FAIL("expected FitnessError");
  } catch (const FitnessError& e) {
    CHECK(e.offending()(0) > 0.0);
  }
}
