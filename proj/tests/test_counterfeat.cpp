#include <gtest/gtest.h>

#include <cmath>

#include "cityboost/counterfeat.hpp"
#include "cityboost/error.hpp"
#include "cityboost/rng.hpp"
#include "oracles.hpp"

using namespace cb;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-5, 5) * static_cast<double>(i + 1);
    return m;
}

SpatialWeightMatrix from_x(std::vector<double> xs, WeightMethod m, int k = 0) {
    std::vector<Point> pts;
    std::vector<Id> ids;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        pts.push_back({xs[i], 0.0});
        ids.push_back(static_cast<Id>(i));
    }
    return build_weight_matrix(pts, ids, m, k);
}

}  // namespace

TEST(Window, Examples) {
    const std::vector<double> a{5, 0, 3, 2, 7};
    auto w = window_features(a, 4, 4);
    EXPECT_EQ(w.last, 7);
    EXPECT_EQ(w.window_sum, 12);

    const std::vector<double> b{4};
    w = window_features(b, 0, 4);
    EXPECT_EQ(w.last, 4);
    EXPECT_EQ(w.window_sum, 4);

    const std::vector<double> c{5, NA, 3, NA};
    w = window_features(c, 3, 4);
    EXPECT_EQ(w.last, 3);
    EXPECT_EQ(w.window_sum, 8);

    const std::vector<double> d{NA, NA};
    w = window_features(d, 1, 4);
    EXPECT_EQ(w.last, 0);
    EXPECT_EQ(w.window_sum, 0);
}

TEST(Window, MatricesAgreeWithScalarVersion) {
    Rng rng(2);
    CounterMatrix v;
    v.values = random_matrix(rng, 3, 20);
    v.values(1, 5) = NA;
    const auto [last, sum] = window_matrices(v, 4);
    for (Eigen::Index i = 0; i < 3; ++i) {
        std::vector<double> row;
        for (Eigen::Index t = 0; t < 20; ++t) row.push_back(v.values(i, t));
        for (Eigen::Index t = 0; t < 20; ++t) {
            const auto w = window_features(row, static_cast<std::size_t>(t), 4);
            EXPECT_EQ(last(i, t), w.last);
            EXPECT_EQ(sum(i, t), w.window_sum);
        }
    }
}

TEST(Pca, RankOneExample) {
    Eigen::MatrixXd v(2, 3);
    v << 1, 2, 3, 2, 4, 6;
    const auto m = fit_pca(v, 2);
    EXPECT_NEAR(m.eigenvalues(0), 5.0, 1e-12);
    EXPECT_NEAR(m.eigenvalues(1), 0.0, 1e-12);
    EXPECT_NEAR(explained_variance(m, 1), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(m.components(0, 0)), 1.0 / std::sqrt(5.0), 1e-12);
    EXPECT_NEAR(std::abs(m.components(1, 0)), 2.0 / std::sqrt(5.0), 1e-12);
}

TEST(Pca, ConstantInputIsDegenerate) {
    try {
        fit_pca(Eigen::MatrixXd::Constant(3, 5, 2.0), 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateVariance);
    }
}

TEST(Pca, MatchesJacobiOracle) {
    Rng rng(17);
    const Eigen::MatrixXd x = random_matrix(rng, 5, 20);
    const auto m = fit_pca(x, 5);
    const auto want = oracle::jacobi_eigen(oracle::covariance(x));
    double total = 0.0;
    for (double ev : want.values) total += ev;
    for (int c = 0; c < 5; ++c) {
        EXPECT_NEAR(m.eigenvalues(c), want.values[static_cast<std::size_t>(c)], 1e-8);
        const double dot = m.components.col(c).dot(want.vectors.col(c));
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
    }
    EXPECT_NEAR(explained_variance(m, 2), (want.values[0] + want.values[1]) / total, 1e-9);
    EXPECT_NEAR(explained_variance(m, 5), 1.0, 1e-9);
}

TEST(Pca, ProjectionIdentities) {
    Rng rng(8);
    const Eigen::MatrixXd x = random_matrix(rng, 6, 30);
    const auto m = fit_pca(x, 3);
    EXPECT_LT(project_pca(m, m.mean).norm(), 1e-12);

    const Eigen::VectorXd s = project_pca(m, m.mean + m.components.col(0));
    EXPECT_NEAR(s(0), 1.0, 1e-12);
    EXPECT_NEAR(s(1), 0.0, 1e-12);
    EXPECT_NEAR(s(2), 0.0, 1e-12);

    Eigen::VectorXd snap(6);
    for (auto& v : snap) v = rng.uniform(-10, 10);
    const Eigen::VectorXd recon = m.mean + m.components * project_pca(m, snap);
    EXPECT_LT((m.components.transpose() * (snap - recon)).cwiseAbs().maxCoeff(), 1e-8);

    const Eigen::MatrixXd all = project_pca_all(m, x);
    EXPECT_LT((all.row(4).transpose() - project_pca(m, x.col(4))).norm(), 1e-12);

    EXPECT_THROW(project_pca(m, Eigen::VectorXd::Zero(2)), Error);
}

TEST(Pca, JsonRoundTrip) {
    Rng rng(1);
    const auto m = fit_pca(random_matrix(rng, 4, 10), 2);
    const auto back = pca_from_json(to_json(m));
    EXPECT_EQ(back.mean, m.mean);
    EXPECT_EQ(back.components, m.components);
    EXPECT_EQ(back.eigenvalues, m.eigenvalues);
}

TEST(Weights, TwoCountersSwap) {
    for (auto method : {WeightMethod::SoftmaxInverseDistance, WeightMethod::KnnUniform}) {
        const auto b = from_x({0, 5}, method, 1);
        EXPECT_EQ(b.weights, (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished());
    }
}

TEST(Weights, SoftmaxOfInverseDistance) {
    const auto b = from_x({0, 1, 3}, WeightMethod::SoftmaxInverseDistance);
    const double z = std::exp(1.0) + std::exp(1.0 / 3.0);
    EXPECT_NEAR(b.weights(0, 1), std::exp(1.0) / z, 1e-12);
    EXPECT_NEAR(b.weights(0, 2), std::exp(1.0 / 3.0) / z, 1e-12);
    EXPECT_NEAR(b.weights(0, 1), 0.6608, 1e-4);
    EXPECT_NEAR(b.weights(0, 2), 0.3392, 1e-4);
    EXPECT_EQ(b.weights(0, 0), 0.0);
}

TEST(Weights, NearestNeighbourOnly) {
    const auto b = from_x({0, 1, 3}, WeightMethod::KnnUniform, 1);
    EXPECT_EQ(b.weights(0, 1), 1.0);
    EXPECT_EQ(b.weights(1, 0), 1.0);
    EXPECT_EQ(b.weights(2, 1), 1.0);
    EXPECT_EQ(b.weights.sum(), 3.0);
}

TEST(Weights, RejectsBadInputs) {
    EXPECT_THROW(from_x({0}, WeightMethod::SoftmaxInverseDistance), Error);
    EXPECT_THROW(from_x({0, 1, 2}, WeightMethod::KnnUniform, 3), Error);
    EXPECT_THROW(from_x({0, 1, 2}, WeightMethod::KnnUniform, 0), Error);
}

TEST(Context, SwapExample) {
    SpatialWeightMatrix b;
    b.weights = (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished();
    const Eigen::MatrixXd v = (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished();
    EXPECT_EQ(spatial_context(v, b), (Eigen::MatrixXd(2, 2) << 3, 1, 4, 2).finished());
}

TEST(Context, UniformRowsAverageTheOthers) {
    SpatialWeightMatrix b;
    b.weights = Eigen::MatrixXd::Constant(4, 4, 1.0 / 3.0);
    b.weights.diagonal().setZero();
    Rng rng(6);
    const Eigen::MatrixXd v = random_matrix(rng, 4, 5);
    const auto w = spatial_context(v, b);
    for (Eigen::Index t = 0; t < 5; ++t)
        for (Eigen::Index i = 0; i < 4; ++i)
            EXPECT_NEAR(w(t, i), (v.col(t).sum() - v(i, t)) / 3.0, 1e-12);
}

TEST(Context, MatchesTripleLoopAndIsLinear) {
    Rng rng(12);
    SpatialWeightMatrix b;
    b.weights = Eigen::MatrixXd::Zero(4, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j)
            if (i != j) b.weights(i, j) = rng.uniform();
        b.weights.row(i) /= b.weights.row(i).sum();
    }
    const Eigen::MatrixXd v1 = random_matrix(rng, 4, 6);
    const Eigen::MatrixXd v2 = random_matrix(rng, 4, 6);
    EXPECT_LT((spatial_context(v1, b) - oracle::context(v1, b.weights)).cwiseAbs().maxCoeff(), 1e-9);
    const Eigen::MatrixXd lhs = spatial_context(2.0 * v1 + v2, b);
    const Eigen::MatrixXd rhs = 2.0 * spatial_context(v1, b) + spatial_context(v2, b);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_THROW(spatial_context(Eigen::MatrixXd::Zero(3, 2), b), Error);
}
