#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

namespace meda {

// Samples are rows throughout the library, so batches are row-major.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Rng = std::mt19937_64;
using Labels = std::vector<int>;

// Floor applied to every diagonal variance held by a Gaussian.
inline constexpr double kVarianceFloor = 1e-8;

/// One-hot encoding of integer labels into an n x K matrix.
Matrix one_hot(const Labels& labels, int num_classes);

/// Index of the largest entry of each row; ties resolve to the lowest index.
Labels argmax_rows(const Matrix& scores);

}  // namespace meda
