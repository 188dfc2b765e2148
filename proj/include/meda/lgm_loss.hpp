#pragma once

#include "meda/common.hpp"
#include "meda/gm_distribution.hpp"

namespace meda {

struct LGMConfig {
  double alpha = 0.1;       // margin on the true-class distance
  double lambda_lkd = 0.1;  // weight of the likelihood regulariser

  void validate() const;
};

struct LossBundle {
  double total = 0.0;
  double cls = 0.0;
  double lkd = 0.0;
  Matrix grad_features;
  Matrix grad_means;
  Matrix grad_log_variances;
};

/// Squared Mahalanobis distances D[i][k] = 1/2 sum_j (f_ij - mu_kj)^2 / var_kj, n x K.
///
/// Evaluated in batched form: (F.F) P^T - 2 F (M.P)^T + row-broadcast of
/// sum_j M_kj^2 P_kj, with P the elementwise precisions.
Matrix mahalanobis_distances(const Matrix& features, const GMMParams& params);

/// logq[k] = -1/2 sum_j log var_kj, i.e. log |Lambda_k|^{-1/2}.
Vector log_q(const GMMParams& params);

/// logit = -D .* (1 + alpha * onehot) + broadcast(logq).
Matrix lgm_logits(const Matrix& distances, const Matrix& one_hot_labels, double alpha, const Vector& logq);

/// Batch-mean softmax cross entropy with max subtraction.
double classification_loss(const Matrix& logits, const Labels& labels);

/// Batch mean of D[i][z_i] - logq[z_i].
double likelihood_regularization(const Matrix& distances, const Vector& logq, const Matrix& one_hot_labels);

/// Full L-GM loss (cls + lambda * lkd) with analytic gradients, batch-mean reduction.
LossBundle lgm_loss_and_grads(const Matrix& features, const Labels& labels, const GMMParams& params,
                              const LGMConfig& cfg);

/// Same loss with explicit per-sample weights replacing the 1/n batch mean.
/// Used to fold minority/majority weighting into a single pass.
LossBundle lgm_loss_and_grads_weighted(const Matrix& features, const Labels& labels, const GMMParams& params,
                                       const LGMConfig& cfg, const Vector& sample_weights);

/// Weighted softmax cross entropy; returns the loss and writes d loss / d logits.
double weighted_cross_entropy(const Matrix& logits, const Labels& labels, const Vector& sample_weights,
                              Matrix* grad_logits);

}  // namespace meda
