#include "meda/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meda {

namespace {

struct Deficit {
  int label;
  int missing;
};

std::vector<Deficit> deficits(const LabeledImageSet& train) {
  const int k = class_count_of(train);
  const auto hist = train.histogram(k);
  const int target = hist.empty() ? 0 : *std::max_element(hist.begin(), hist.end());
  std::vector<Deficit> out;
  for (int c = 0; c < k; ++c)
    if (hist[static_cast<std::size_t>(c)] > 0 && hist[static_cast<std::size_t>(c)] < target)
      out.push_back({c, target - hist[static_cast<std::size_t>(c)]});
  return out;
}

LabeledImageSet empty_like(const LabeledImageSet& s) {
  LabeledImageSet out;
  out.height = s.height;
  out.width = s.width;
  out.channels = s.channels;
  out.images.resize(0, s.images.cols());
  return out;
}

void push_row(LabeledImageSet& dst, const RowVector& row, int label) {
  dst.images.conservativeResize(dst.images.rows() + 1, Eigen::NoChange);
  dst.images.row(dst.images.rows() - 1) = row;
  dst.labels.push_back(label);
}

void ros_class(const LabeledImageSet& train, const std::vector<std::size_t>& members, int label, int missing, Rng& rng,
               LabeledImageSet& synth) {
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  for (int m = 0; m < missing; ++m) push_row(synth, train.images.row(static_cast<Eigen::Index>(members[pick(rng)])), label);
}

// Interpolates from `base` toward one of its listed neighbours.
RowVector smote_point(const Matrix& rows, std::size_t base, const std::vector<std::size_t>& neighbors, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, neighbors.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t nn = neighbors[pick(rng)];
  const double u = unit(rng);
  const auto b = rows.row(static_cast<Eigen::Index>(base));
  return b + u * (rows.row(static_cast<Eigen::Index>(nn)) - b);
}

SamplerResult finish(const LabeledImageSet& train, LabeledImageSet synth, std::vector<std::string> notes) {
  SamplerResult r;
  r.set = train;
  r.set.append(synth);
  r.notes = std::move(notes);
  return r;
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const Matrix& rows, std::size_t query,
                                           const std::vector<std::size_t>& candidates, int k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(candidates.size());
  const auto q = rows.row(static_cast<Eigen::Index>(query));
  for (std::size_t c : candidates) {
    if (c == query) continue;
    d.emplace_back((rows.row(static_cast<Eigen::Index>(c)) - q).squaredNorm(), c);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(d[i].second);
  return out;
}

std::vector<int> apportion(const std::vector<double>& weights, int total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out(weights.size(), 0);
  if (weights.empty() || total <= 0 || !(sum > 0.0)) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    out[i] = static_cast<int>(std::floor(exact));
    assigned += out[i];
    rem.emplace_back(exact - out[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[rem[j % rem.size()].second];
  return out;
}

SamplerResult ros(const LabeledImageSet& train, std::uint64_t seed) {
  Rng rng(seed);
  LabeledImageSet synth = empty_like(train);
  for (const auto& d : deficits(train)) ros_class(train, train.members_of(d.label), d.label, d.missing, rng, synth);
  return finish(train, std::move(synth), {});
}

SamplerResult smote(const LabeledImageSet& train, const SamplerConfig& cfg) {
  if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
  Rng rng(cfg.seed);
  LabeledImageSet synth = empty_like(train);
  std::vector<std::string> notes;
  for (const auto& d : deficits(train)) {
    const auto members = train.members_of(d.label);
    if (static_cast<int>(members.size()) <= cfg.k_neighbors) {
      notes.push_back("smote: class " + std::to_string(d.label) + " has " + std::to_string(members.size()) +
                      " members (<= k); used random over-sampling");
      ros_class(train, members, d.label, d.missing, rng, synth);
      continue;
    }
    std::vector<std::vector<std::size_t>> knn;
    for (std::size_t m : members) knn.push_back(nearest_neighbors(train.images, m, members, cfg.k_neighbors));
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (int s = 0; s < d.missing; ++s) {
      const std::size_t b = pick(rng);
      push_row(synth, smote_point(train.images, members[b], knn[b], rng), d.label);
    }
  }
  return finish(train, std::move(synth), std::move(notes));
}

std::vector<double> adasyn_difficulty(const LabeledImageSet& train, int label, int k) {
  std::vector<std::size_t> everyone(train.size());
  std::iota(everyone.begin(), everyone.end(), 0);
  std::vector<double> r;
  for (std::size_t m : train.members_of(label)) {
    const auto nn = nearest_neighbors(train.images, m, everyone, k);
    int other = 0;
    for (std::size_t j : nn) other += train.labels[j] != label;
    r.push_back(nn.empty() ? 0.0 : static_cast<double>(other) / static_cast<double>(k));
  }
  return r;
}

std::vector<int> adasyn_budgets(const LabeledImageSet& train, int label, int k, int budget, bool* uniform_fallback) {
  auto r = adasyn_difficulty(train, label, k);
  const bool all_zero = std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; });
  if (uniform_fallback) *uniform_fallback = all_zero;
  if (all_zero) std::fill(r.begin(), r.end(), 1.0);
  return apportion(r, budget);
}

SamplerResult adasyn(const LabeledImageSet& train, const SamplerConfig& cfg) {
  if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
  Rng rng(cfg.seed);
  LabeledImageSet synth = empty_like(train);
  std::vector<std::string> notes;
  for (const auto& d : deficits(train)) {
    const auto members = train.members_of(d.label);
    if (static_cast<int>(members.size()) <= cfg.k_neighbors) {
      notes.push_back("adasyn: class " + std::to_string(d.label) + " has " + std::to_string(members.size()) +
                      " members (<= k); used random over-sampling");
      ros_class(train, members, d.label, d.missing, rng, synth);
      continue;
    }
    bool uniform = false;
    const auto budgets = adasyn_budgets(train, d.label, cfg.k_neighbors, d.missing, &uniform);
    if (uniform)
      notes.push_back("adasyn: class " + std::to_string(d.label) +
                      " has no other-class neighbours; budget apportioned uniformly");
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (budgets[i] == 0) continue;
      const auto knn = nearest_neighbors(train.images, members[i], members, cfg.k_neighbors);
      for (int s = 0; s < budgets[i]; ++s) push_row(synth, smote_point(train.images, members[i], knn, rng), d.label);
    }
  }
  return finish(train, std::move(synth), std::move(notes));
}

}  // namespace meda
