#include "cityboost/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cityboost/error.hpp"

namespace cb {

double eval_core(const Eigen::MatrixXd& proba, std::span<const double> labels,
                 std::span<const double> class_weights) {
    if (static_cast<std::size_t>(proba.rows()) != labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "eval_core: prediction and label counts differ");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<Eigen::Index>(labels[i]);
        const double w = class_weights[static_cast<std::size_t>(y)];
        num += w * std::log(std::max(proba(static_cast<Eigen::Index>(i), y), kMinProbability));
        den += w;
    }
    return den > 0.0 ? -num / den : 0.0;
}

double eval_extended(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "eval_extended: prediction and label counts differ");
    }
    if (preds.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(preds[i] - labels[i]);
    return sum / static_cast<double>(preds.size());
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd p(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double top = scores.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
            p(i, c) = std::exp(scores(i, c) - top);
            z += p(i, c);
        }
        p.row(i) /= z;
    }
    return p;
}

}  // namespace cb
