#include "meda/gm_distribution.hpp"

#include "meda/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meda {

namespace {

const double kLogVarianceFloor = std::log(kVarianceFloor);

bool all_finite(const Matrix& m) { return m.allFinite(); }

[[noreturn]] void persist_fail(const std::string& what) { throw PersistError(what); }

}  // namespace

Matrix one_hot(const Labels& labels, int num_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InputError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(num_classes) + ")");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

Labels argmax_rows(const Matrix& scores) {
  Labels out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

// --- GMMParams --------------------------------------------------------------

GMMParams::GMMParams(Matrix means, Matrix log_variances)
    : means_(std::move(means)), log_variances_(std::move(log_variances)) {
  if (means_.rows() != log_variances_.rows() || means_.cols() != log_variances_.cols())
    throw ShapeError("means and log-variances must share a K x h shape");
  if (means_.rows() < 1 || means_.cols() < 1) throw ShapeError("GMM needs K >= 1 and h >= 1");
  if (!all_finite(means_) || !all_finite(log_variances_)) throw InputError("non-finite GMM parameter");
  clamp();
}

GMMParams GMMParams::standard(int class_count, int dim) {
  return GMMParams(Matrix::Zero(class_count, dim), Matrix::Zero(class_count, dim));
}

void GMMParams::clamp() { log_variances_ = log_variances_.cwiseMax(kLogVarianceFloor); }

void GMMParams::validate() const {
  if (!all_finite(means_) || !all_finite(log_variances_)) throw InputError("non-finite GMM parameter");
  if ((log_variances_.array() < kLogVarianceFloor).any()) throw InputError("variance below floor");
}

// --- populations -------------------------------------------------------------

void LatentPopulation::validate(int class_count) const {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw ShapeError("feature rows and label count differ");
  for (int l : labels)
    if (l < 0 || l >= class_count) throw InputError("label " + std::to_string(l) + " is not a class index");
}

LatentPopulation LatentPopulation::subset(std::span<const std::size_t> indices) const {
  LatentPopulation out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

LatentPopulation sample(const GMMParams& params, std::span<const int> counts, Rng& rng) {
  if (static_cast<int>(counts.size()) != params.class_count())
    throw ShapeError("counts must have one entry per class");
  long total = 0;
  for (int c : counts) {
    if (c < 0) throw InputError("negative sample count");
    total += c;
  }
  if (total == 0) throw EmptyPopulation("all per-class counts are zero");

  const Matrix stddev = (params.log_variances().array() * 0.5).exp().matrix();
  LatentPopulation pop;
  pop.features.resize(total, params.dim());
  pop.labels.reserve(static_cast<std::size_t>(total));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Index row = 0;
  for (int k = 0; k < params.class_count(); ++k) {
    for (int c = 0; c < counts[static_cast<std::size_t>(k)]; ++c, ++row) {
      for (int j = 0; j < params.dim(); ++j)
        pop.features(row, j) = params.means()(k, j) + stddev(k, j) * normal(rng);
      pop.labels.push_back(k);
    }
  }
  return pop;
}

LatentPopulation sample(const GMMParams& params, std::span<const int> counts, std::uint64_t seed) {
  Rng rng(seed);
  return sample(params, counts, rng);
}

ClassGaussian estimate_class_gaussian(const LatentPopulation& pop, int class_k) {
  const Eigen::Index h = pop.features.cols();
  Vector sum = Vector::Zero(h);
  std::size_t count = 0;
  for (std::size_t i = 0; i < pop.labels.size(); ++i) {
    if (pop.labels[i] != class_k) continue;
    sum += pop.features.row(static_cast<Eigen::Index>(i)).transpose();
    ++count;
  }
  if (count == 0) throw EmptyClass("no members of class " + std::to_string(class_k));

  ClassGaussian g;
  g.mean = sum / static_cast<double>(count);
  Vector sq = Vector::Zero(h);
  for (std::size_t i = 0; i < pop.labels.size(); ++i) {
    if (pop.labels[i] != class_k) continue;
    sq += (pop.features.row(static_cast<Eigen::Index>(i)).transpose() - g.mean).array().square().matrix();
  }
  g.variance = (sq / static_cast<double>(count)).cwiseMax(kVarianceFloor);
  return g;
}

ClassGaussian evolve_update(const ClassGaussian& quali, const ClassGaussian& diver, double gamma) {
  if (quali.mean.size() != diver.mean.size() || quali.variance.size() != diver.variance.size() ||
      quali.mean.size() != quali.variance.size())
    throw ShapeError("class Gaussians differ in dimension");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("blend must lie in [0, 1]");
  if (gamma == 1.0) return {quali.mean, quali.variance.cwiseMax(kVarianceFloor)};
  if (gamma == 0.0) return {diver.mean, diver.variance.cwiseMax(kVarianceFloor)};
  ClassGaussian out;
  out.mean = gamma * quali.mean + (1.0 - gamma) * diver.mean;
  out.variance = (gamma * quali.variance + (1.0 - gamma) * diver.variance).cwiseMax(kVarianceFloor);
  return out;
}

// --- persistence ---------------------------------------------------------------

namespace {
constexpr std::string_view kGmmMagic = "MLGMM01";
constexpr std::uint32_t kGmmVersion = 1;
}  // namespace

std::vector<char> encode_gmm(const GMMParams& params) {
  io::ByteWriter w;
  w.put_bytes(kGmmMagic);
  w.put_u32(kGmmVersion);
  w.put_u64(static_cast<std::uint64_t>(params.class_count()));
  w.put_u64(static_cast<std::uint64_t>(params.dim()));
  for (Eigen::Index i = 0; i < params.means().size(); ++i) w.put_f64(params.means().data()[i]);
  for (Eigen::Index i = 0; i < params.log_variances().size(); ++i) w.put_f64(params.log_variances().data()[i]);
  return w.bytes();
}

GMMParams decode_gmm(std::span<const char> bytes) {
  io::ByteReader r(bytes, persist_fail);
  if (r.get_bytes(kGmmMagic.size(), "magic") != kGmmMagic) r.fail("bad GMM magic header");
  if (const auto v = r.get_u32("version"); v != kGmmVersion) r.fail("unsupported GMM version " + std::to_string(v));
  const auto k = r.get_u64("K");
  const auto h = r.get_u64("h");
  if (k == 0 || h == 0 || k > (1u << 20) || h > (1u << 20)) r.fail("implausible GMM shape");
  if (r.remaining() != 2 * k * h * 8) r.fail("GMM payload size does not match K and h");
  Matrix means(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(h));
  Matrix logvar(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(h));
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = r.get_f64("means");
  for (Eigen::Index i = 0; i < logvar.size(); ++i) logvar.data()[i] = r.get_f64("log_variances");
  try {
    return GMMParams(std::move(means), std::move(logvar));
  } catch (const Error& e) {
    throw PersistError(std::string("invalid GMM contents: ") + e.what());
  }
}

void save_gmm(const GMMParams& params, const std::filesystem::path& path) {
  io::write_file(path, encode_gmm(params));
}

GMMParams load_gmm(const std::filesystem::path& path) {
  std::vector<char> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const DataError& e) {
    throw PersistError(e.what());
  }
  return decode_gmm(bytes);
}

// --- basic EDA -----------------------------------------------------------------

void BasicEDAConfig::validate() const {
  if (population_size < 2) throw InputError("population_size must be >= 2");
  if (max_iterations < 0) throw InputError("max_iterations must be >= 0");
  if (!(superior_rate > 0.0 && superior_rate <= 1.0)) throw InputError("superior_rate must lie in (0, 1]");
  if (superior_rate * population_size < 1.0) throw InputError("superior_rate * population_size must be >= 1");
  if (!(blend >= 0.0 && blend <= 1.0)) throw InputError("blend must lie in [0, 1]");
  if (init_bounds.empty()) throw InputError("init_bounds must name at least one dimension");
  for (const auto& [lo, hi] : init_bounds)
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw InputError("bad init bound");
}

namespace {

ClassGaussian moments(const Matrix& rows, std::span<const std::size_t> which) {
  LatentPopulation pop;
  pop.features = rows;
  pop.labels.assign(static_cast<std::size_t>(rows.rows()), 1);
  for (std::size_t i : which) pop.labels[i] = 0;
  return estimate_class_gaussian(pop, 0);
}

}  // namespace

EDAResult run_basic_eda(const FitnessFn& fitness, const BasicEDAConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int n = cfg.population_size;
  const auto dim = static_cast<Eigen::Index>(cfg.init_bounds.size());
  const auto n_superior = static_cast<std::size_t>(std::ceil(cfg.superior_rate * n - 1e-9));

  Matrix pop(n, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    std::uniform_real_distribution<double> u(cfg.init_bounds[j].first, cfg.init_bounds[j].second);
    for (int i = 0; i < n; ++i) pop(i, j) = u(rng);
  }

  EDAResult result;
  result.best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<double> fit(static_cast<std::size_t>(n));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int iter = 0;; ++iter) {
    for (int i = 0; i < n; ++i) {
      Vector x = pop.row(i).transpose();
      const double f = fitness(x);
      if (!std::isfinite(f)) throw FitnessError("non-finite fitness", std::move(x));
      fit[static_cast<std::size_t>(i)] = f;
      if (f > result.best_fitness) {
        result.best_fitness = f;
        result.best_solution = pop.row(i).transpose();
      }
    }

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    const std::span<const std::size_t> superior(order.data(), n_superior);

    EDAGeneration gen;
    gen.mean_fitness = std::accumulate(fit.begin(), fit.end(), 0.0) / n;
    gen.best_fitness = result.best_fitness;

    if (iter == cfg.max_iterations) {
      result.history.push_back(std::move(gen));
      break;
    }

    std::vector<std::size_t> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    gen.population_stats = moments(pop, all);
    gen.superior_stats = moments(pop, superior);
    gen.blended = evolve_update(gen.superior_stats, gen.population_stats, cfg.blend);

    const Vector stddev = gen.blended.variance.array().sqrt();
    for (int i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < dim; ++j) pop(i, j) = gen.blended.mean(j) + stddev(j) * normal(rng);
    result.history.push_back(std::move(gen));
  }
  return result;
}

}  // namespace meda
