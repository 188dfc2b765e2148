#include "meda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace meda {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double auc_ovr(const Matrix& scores, const Labels& labels, int class_k) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) throw ShapeError("score rows differ from labels");
  if (class_k < 0 || class_k >= scores.cols()) throw InputError("class index outside score columns");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores(a, class_k) > scores(b, class_k); });
  long pos = 0;
  for (int l : labels) pos += l == class_k;
  const long neg = static_cast<long>(n) - pos;
  if (pos == 0 || neg == 0) throw UndefinedAUC("class " + std::to_string(class_k) + " lacks positives or negatives");

  // Trapezoids between successive distinct thresholds, kept in integer counts so
  // the area is exactly (2 * concordant + ties) / (2 P N).
  long tp = 0, fp = 0;
  long long twice_area = 0;
  std::size_t i = 0;
  while (i < n) {
    const double s = scores(order[i], class_k);
    long dtp = 0, dfp = 0;
    for (; i < n && scores(order[i], class_k) == s; ++i) (labels[order[i]] == class_k ? dtp : dfp) += 1;
    twice_area += static_cast<long long>(dfp) * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

EvalReport evaluate(const Matrix& scores, const Labels& labels, GMeanMode mode) {
  const auto n = labels.size();
  if (n == 0) throw InputError("evaluation needs at least one sample");
  if (static_cast<std::size_t>(scores.rows()) != n) throw ShapeError("score rows differ from labels");
  if (!scores.allFinite()) throw InputError("non-finite score");
  const int k = static_cast<int>(scores.cols());
  for (int l : labels)
    if (l < 0 || l >= k) throw InputError("label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");

  EvalReport r;
  r.confusion.assign(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  const Labels pred = argmax_rows(scores);
  for (std::size_t i = 0; i < n; ++i) ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])];

  long trace = 0;
  for (int c = 0; c < k; ++c) trace += r.confusion[c][c];
  r.accuracy = static_cast<double>(trace) / static_cast<double>(n);

  for (int c = 0; c < k; ++c) {
    long tp = r.confusion[c][c], fn = 0, fp = 0;
    for (int j = 0; j < k; ++j) {
      if (j == c) continue;
      fn += r.confusion[c][j];
      fp += r.confusion[j][c];
    }
    const long tn = static_cast<long>(n) - tp - fn - fp;
    const double p = safe_div(tp, tp + fp);
    const double rec = safe_div(tp, tp + fn);
    r.precision.push_back(p);
    r.recall.push_back(rec);
    r.specificity.push_back(safe_div(tn, tn + fp));
    r.f1.push_back(safe_div(2.0 * p * rec, p + rec));
  }
  r.macro_precision = mean_of(r.precision);
  r.macro_recall = mean_of(r.recall);
  r.macro_specificity = mean_of(r.specificity);
  r.macro_f1 = mean_of(r.f1);
  if (mode == GMeanMode::RecallSpecificity) {
    r.g_mean = std::sqrt(r.macro_recall * r.macro_specificity);
  } else {
    double log_sum = 0.0;
    bool zero = false;
    for (double v : r.recall) {
      if (v == 0.0) zero = true;
      else log_sum += std::log(v);
    }
    r.g_mean = zero ? 0.0 : std::exp(log_sum / k);
  }

  std::vector<double> defined;
  for (int c = 0; c < k; ++c) {
    try {
      const double a = auc_ovr(scores, labels, c);
      r.class_auc.push_back(a);
      defined.push_back(a);
    } catch (const UndefinedAUC&) {
      r.class_auc.push_back(std::nan(""));
      r.notes.push_back("AUC undefined for class " + std::to_string(c) + "; excluded from the macro mean");
    }
  }
  if (defined.empty()) {
    r.auc = 0.5;
    r.notes.push_back("no class has both positives and negatives; AUC reported as 0.5");
  } else {
    r.auc = mean_of(defined);
  }
  return r;
}

std::string report_csv_header() { return "accuracy,precision,recall,specificity,f1,g_mean,auc"; }

std::string report_csv_values(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f", r.accuracy, r.macro_precision,
                r.macro_recall, r.macro_specificity, r.macro_f1, r.g_mean, r.auc);
  return buf;
}

}  // namespace meda
