#include "meda/lgm_loss.hpp"

#include <cmath>

namespace meda {

void LGMConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be finite and >= 0");
  if (!(lambda_lkd >= 0.0) || !std::isfinite(lambda_lkd)) throw InputError("lambda must be finite and >= 0");
}

namespace {

void check_labels(const Labels& labels, Eigen::Index n, int k) {
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("label count differs from batch size");
  for (int l : labels)
    if (l < 0 || l >= k) throw InputError("label " + std::to_string(l) + " outside class range");
}

void check_one_hot(const Matrix& y) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      const double v = y(i, k);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw InputError("labels are not one-hot");
      }
    }
    if (ones != 1) throw InputError("labels are not one-hot");
  }
}

Vector uniform_weights(Eigen::Index n) { return Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0); }

}  // namespace

Matrix mahalanobis_distances(const Matrix& features, const GMMParams& params) {
  if (features.cols() != params.dim()) throw ShapeError("feature width differs from GMM dimension");
  if (!features.allFinite()) throw InputError("non-finite feature value");
  const Matrix precision = (-params.log_variances().array()).exp().matrix();  // K x h
  const Matrix& means = params.means();
  const Matrix mp = means.cwiseProduct(precision);                           // K x h
  const RowVector g = means.cwiseProduct(mp).rowwise().sum().transpose();    // 1 x K
  Matrix d = features.cwiseProduct(features) * precision.transpose();
  d.noalias() -= 2.0 * features * mp.transpose();
  d.rowwise() += g;
  d *= 0.5;
  // Cancellation in the expanded form can leave tiny negatives.
  return d.cwiseMax(0.0);
}

Vector log_q(const GMMParams& params) { return -0.5 * params.log_variances().rowwise().sum(); }

Matrix lgm_logits(const Matrix& distances, const Matrix& one_hot_labels, double alpha, const Vector& logq) {
  if (distances.rows() != one_hot_labels.rows() || distances.cols() != one_hot_labels.cols() ||
      distances.cols() != logq.size())
    throw ShapeError("distance, label and logq shapes disagree");
  check_one_hot(one_hot_labels);
  Matrix scale = Matrix::Ones(distances.rows(), distances.cols()) + alpha * one_hot_labels;
  Matrix logits = -distances.cwiseProduct(scale);
  logits.rowwise() += logq.transpose();
  return logits;
}

double weighted_cross_entropy(const Matrix& logits, const Labels& labels, const Vector& sample_weights,
                              Matrix* grad_logits) {
  check_labels(labels, logits.rows(), static_cast<int>(logits.cols()));
  if (sample_weights.size() != logits.rows()) throw ShapeError("weight count differs from batch size");
  if (grad_logits) grad_logits->setZero(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const RowVector e = (logits.row(i).array() - m).exp().matrix();
    const double s = e.sum();
    const int z = labels[static_cast<std::size_t>(i)];
    loss += sample_weights(i) * (std::log(s) - (logits(i, z) - m));
    if (grad_logits) {
      grad_logits->row(i) = sample_weights(i) * e / s;
      (*grad_logits)(i, z) -= sample_weights(i);
    }
  }
  return loss;
}

double classification_loss(const Matrix& logits, const Labels& labels) {
  return weighted_cross_entropy(logits, labels, uniform_weights(logits.rows()), nullptr);
}

double likelihood_regularization(const Matrix& distances, const Vector& logq, const Matrix& one_hot_labels) {
  if (distances.rows() != one_hot_labels.rows() || distances.cols() != one_hot_labels.cols() ||
      distances.cols() != logq.size())
    throw ShapeError("distance, label and logq shapes disagree");
  if (distances.rows() == 0) return 0.0;
  Matrix q = Matrix::Zero(distances.rows(), distances.cols());
  q.rowwise() += logq.transpose();
  return (distances - q).cwiseProduct(one_hot_labels).sum() / static_cast<double>(distances.rows());
}

LossBundle lgm_loss_and_grads(const Matrix& features, const Labels& labels, const GMMParams& params,
                              const LGMConfig& cfg) {
  return lgm_loss_and_grads_weighted(features, labels, params, cfg, uniform_weights(features.rows()));
}

LossBundle lgm_loss_and_grads_weighted(const Matrix& features, const Labels& labels, const GMMParams& params,
                                       const LGMConfig& cfg, const Vector& w) {
  cfg.validate();
  const int k = params.class_count();
  check_labels(labels, features.rows(), k);
  if (w.size() != features.rows()) throw ShapeError("weight count differs from batch size");

  const Matrix y = one_hot(labels, k);
  const Matrix dist = mahalanobis_distances(features, params);
  const Vector logq = log_q(params);
  const Matrix logits = lgm_logits(dist, y, cfg.alpha, logq);

  LossBundle out;
  Matrix g_logits;
  out.cls = weighted_cross_entropy(logits, labels, w, &g_logits);
  Matrix q = Matrix::Zero(dist.rows(), dist.cols());
  q.rowwise() += logq.transpose();
  const Vector per_sample_lkd = (dist - q).cwiseProduct(y).rowwise().sum();
  out.lkd = w.dot(per_sample_lkd);
  out.total = out.cls + cfg.lambda_lkd * out.lkd;

  // d total / d D and d total / d logq.
  const Matrix wy = w.asDiagonal() * y;
  const Matrix scale = Matrix::Ones(dist.rows(), dist.cols()) + cfg.alpha * y;
  const Matrix a = -g_logits.cwiseProduct(scale) + cfg.lambda_lkd * wy;
  const Vector b = g_logits.colwise().sum().transpose() - cfg.lambda_lkd * wy.colwise().sum().transpose();

  const Matrix precision = (-params.log_variances().array()).exp().matrix();
  const Matrix& means = params.means();
  const Matrix mp = means.cwiseProduct(precision);
  const Vector a_colsum = a.colwise().sum().transpose();   // K
  const Matrix at_f = a.transpose() * features;              // K x h
  const Matrix at_ff = a.transpose() * features.cwiseProduct(features);

  // dD_ik/df_ij = (f_ij - mu_kj) p_kj
  out.grad_features = features.cwiseProduct(a * precision) - a * mp;
  // dD_ik/dmu_kj = -(f_ij - mu_kj) p_kj
  out.grad_means = -precision.cwiseProduct(at_f - a_colsum.asDiagonal() * means);
  // dD_ik/dlogvar_kj = -1/2 (f_ij - mu_kj)^2 p_kj ; dlogq_k/dlogvar_kj = -1/2
  const Matrix sq = at_ff - 2.0 * means.cwiseProduct(at_f) + a_colsum.asDiagonal() * means.cwiseProduct(means);
  out.grad_log_variances = -0.5 * precision.cwiseProduct(sq);
  out.grad_log_variances.colwise() -= 0.5 * b;
  return out;
}

}  // namespace meda
