#pragma once

#include "meda/common.hpp"
#include "meda/errors.hpp"

#include <string>
#include <vector>

namespace meda {

enum class GMeanMode {
  RecallSpecificity,  // sqrt(macro recall * macro specificity)
  PerClassRecall,     // geometric mean of the per-class recalls
};

struct EvalReport {
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_specificity = 0.0;
  double macro_f1 = 0.0;
  double g_mean = 0.0;
  double auc = 0.0;
  std::vector<double> precision, recall, specificity, f1, class_auc;  // class_auc is NaN when undefined
  std::vector<std::string> notes;
};

/// Mann-Whitney form of the one-vs-rest ROC area for class k:
/// P(score_pos > score_neg) + 1/2 P(equal). Throws UndefinedAUC when class k has
/// no positives or no negatives.
double auc_ovr(const Matrix& scores, const Labels& labels, int class_k);

EvalReport evaluate(const Matrix& scores, const Labels& labels, GMeanMode mode = GMeanMode::RecallSpecificity);

/// "accuracy,precision,recall,specificity,f1,g_mean,auc"
std::string report_csv_header();
std::string report_csv_values(const EvalReport& r);

}  // namespace meda
