#include "helpers.hpp"
#include "meda/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace meda;

namespace {

double pair_count_auc(const Matrix& s, const Labels& y, int k) {
  long long twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == k ? pos : neg) += 1;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == k && y[j] != k) {
        const double a = s(static_cast<Eigen::Index>(i), k);
        const double b = s(static_cast<Eigen::Index>(j), k);
        twice += a > b ? 2 : (a == b ? 1 : 0);
      }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Binary fixture with class 1 as the positive class: TP=40 FN=10 FP=5 TN=45.
void binary_fixture(Matrix& scores, Labels& labels) {
  scores = Matrix::Zero(100, 2);
  labels.clear();
  int row = 0;
  auto add = [&](int truth, int pred, int count) {
    for (int i = 0; i < count; ++i, ++row) {
      scores(row, pred) = 1.0;
      labels.push_back(truth);
    }
  };
  add(1, 1, 40);
  add(1, 0, 10);
  add(0, 1, 5);
  add(0, 0, 45);
}

}  // namespace

TEST_CASE("evaluate on perfect separated predictions") {
  Matrix s(4, 2);
  s << 0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6;
  const auto r = evaluate(s, {0, 1, 0, 1});
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_precision == 1.0);
  CHECK(r.macro_recall == 1.0);
  CHECK(r.macro_specificity == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.g_mean == 1.0);
  CHECK(r.auc == 1.0);
}

TEST_CASE("evaluate matches hand computation on the binary fixture") {
  Matrix s;
  Labels y;
  binary_fixture(s, y);
  const auto r = evaluate(s, y);
  CHECK(r.confusion[1][1] == 40);
  CHECK(r.confusion[1][0] == 10);
  CHECK(r.confusion[0][1] == 5);
  CHECK(r.confusion[0][0] == 45);
  CHECK(r.recall[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.precision[1] == doctest::Approx(40.0 / 45.0).epsilon(1e-15));
  CHECK(r.specificity[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.f1[1] == doctest::Approx(2 * (8.0 / 9) * 0.8 / (8.0 / 9 + 0.8)).epsilon(1e-15));
  CHECK(r.f1[1] == doctest::Approx(0.8421).epsilon(1e-4));
  // class 0 is the mirror image: recall 45/50, precision 45/55, specificity 40/50
  CHECK(r.recall[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.precision[0] == doctest::Approx(45.0 / 55.0).epsilon(1e-15));
  CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.macro_recall == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.macro_specificity == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.g_mean == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.macro_precision == doctest::Approx((40.0 / 45 + 45.0 / 55) / 2).epsilon(1e-15));

  const auto pc = evaluate(s, y, GMeanMode::PerClassRecall);
  CHECK(pc.g_mean == doctest::Approx(std::sqrt(0.8 * 0.9)).epsilon(1e-15));
}

TEST_CASE("evaluate with a single predicted class") {
  Matrix s = Matrix::Zero(10, 2);
  s.col(0).setOnes();
  const auto r = evaluate(s, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(r.accuracy == 0.5);
  CHECK(r.recall[0] == 1.0);
  CHECK(r.recall[1] == 0.0);
  CHECK(r.macro_recall == 0.5);
  CHECK(r.precision[1] == 0.0);  // 0/0 defined as 0
  CHECK_THROWS_AS(evaluate(s, {0, 0, 0, 0, 0, 1, 1, 1, 1, 2}), InputError);
}

TEST_CASE("auc_ovr examples") {
  Matrix s(4, 2);
  s << 0.1, 0.9, 0.2, 0.8, 0.8, 0.2, 0.9, 0.1;
  CHECK(auc_ovr(s, {1, 1, 0, 0}, 1) == 1.0);
  CHECK(auc_ovr(Matrix::Constant(4, 2, 0.3), {1, 1, 0, 0}, 1) == 0.5);
  CHECK_THROWS_AS(auc_ovr(s, {1, 1, 1, 1}, 1), UndefinedAUC);

  // six points, one tie across classes
  Matrix t(6, 1);
  t << 0.9, 0.7, 0.5, 0.5, 0.3, 0.1;
  const Labels y{0, 1, 0, 1, 0, 1};
  CHECK(auc_ovr(t, y, 0) == pair_count_auc(t, y, 0));
  CHECK(auc_ovr(t, y, 0) == (2.0 * 5 + 1) / 18.0);
}

TEST_CASE("auc_ovr equals pair counting on random score sets") {
  Rng rng(1);
  std::uniform_int_distribution<int> size(2, 50);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    Matrix s(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) s(i, j) = trial % 2 ? coarse(rng) / 6.0 : testutil::random_matrix(rng, 1, 1)(0, 0);
    const Labels y = testutil::random_labels(rng, static_cast<std::size_t>(n), 3);
    for (int k = 0; k < 3; ++k) {
      const auto c = std::count(y.begin(), y.end(), k);
      if (c == 0 || c == n) continue;
      CHECK(auc_ovr(s, y, k) == pair_count_auc(s, y, k));
    }
  }
}

TEST_CASE("metrics are invariant under increasing score transforms") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = testutil::random_matrix(rng, 30, 3, 0.01, 1.0);
    const Labels y = testutil::random_labels(rng, 30, 3);
    const Matrix t = (s.array().log() * 3.0 + 1.0).matrix();
    const auto a = evaluate(s, y);
    const auto b = evaluate(t, y);
    CHECK(a.confusion == b.confusion);
    CHECK(a.auc == b.auc);
    CHECK(a.macro_f1 == b.macro_f1);
  }
}

TEST_CASE("permuting the label alphabet permutes per-class metrics") {
  Rng rng(3);
  const Matrix s = testutil::random_matrix(rng, 40, 3);
  const Labels y = testutil::random_labels(rng, 40, 3);
  const int perm[3] = {2, 0, 1};
  Matrix sp(40, 3);
  Labels yp(40);
  for (int i = 0; i < 40; ++i) {
    for (int k = 0; k < 3; ++k) sp(i, perm[k]) = s(i, k);
    yp[i] = perm[y[i]];
  }
  const auto a = evaluate(s, y);
  const auto b = evaluate(sp, yp);
  for (int k = 0; k < 3; ++k) {
    CHECK(a.recall[k] == b.recall[perm[k]]);
    CHECK(a.precision[k] == b.precision[perm[k]]);
  }
  CHECK(a.macro_recall == doctest::Approx(b.macro_recall).epsilon(1e-15));
  CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-15));
  CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-15));
}

TEST_CASE("undefined class AUC is excluded with a note") {
  Matrix s(4, 3);
  s << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0;
  const auto r = evaluate(s, {0, 1, 0, 1});
  CHECK(std::isnan(r.class_auc[2]));
  CHECK(r.auc == 1.0);
  CHECK_FALSE(r.notes.empty());
  CHECK(report_csv_header() == "accuracy,precision,recall,specificity,f1,g_mean,auc");
}
