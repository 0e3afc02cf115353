#pragma once

#include <Eigen/Dense>
#include <span>

namespace cb {

inline constexpr double kMinProbability = 1e-15;

/// Weighted cross-entropy: -(sum_i w[y_i] ln p[i, y_i]) / (sum_i w[y_i]).
/// `proba` is n x 3, labels hold class indices, p is clamped to >= 1e-15.
double eval_core(const Eigen::MatrixXd& proba, std::span<const double> labels,
                 std::span<const double> class_weights);

/// Mean absolute error.
double eval_extended(std::span<const double> preds, std::span<const double> labels);

/// Row-wise softmax of raw scores.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores);

}  // namespace cb
