#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "cityboost/roadgraph.hpp"

namespace cb {

inline constexpr int kSlotsPerDay = 96;
inline constexpr int kSlotsPerWeek = 7 * kSlotsPerDay;

struct SlotTag {
    int week = 0;
    int slot = 0;  // 0 .. kSlotsPerWeek-1
    friend bool operator==(const SlotTag&, const SlotTag&) = default;
};

/// k x t vehicle counts; rows follow counter_ids, columns follow slots.
/// Missing readings are stored as NaN.
struct CounterMatrix {
    Eigen::MatrixXd values;
    std::vector<Id> counter_ids;
    std::vector<SlotTag> slots;

    Eigen::Index n_counters() const { return values.rows(); }
    Eigen::Index n_slots() const { return values.cols(); }
    bool observed(Eigen::Index counter, Eigen::Index t) const {
        return !std::isnan(values(counter, t));
    }

    /// Columns whose week is in `weeks`, in original order.
    CounterMatrix select_weeks(std::span<const int> weeks) const;
};

/// Fraction of missing readings per counter.
std::vector<double> missingness_rates(const CounterMatrix& v);

/// Copy of the values with missing readings replaced by 0.
Eigen::MatrixXd impute_zero(const CounterMatrix& v);

// ---------------------------------------------------------------------------
// Window features

struct WindowValues {
    double last = 0.0;
    double window_sum = 0.0;
};

/// last = value at t (most recent observed in the window if t is missing,
/// 0 if none); window_sum = sum over max(0, t-window+1)..t, missing as 0.
WindowValues window_features(std::span<const double> series, std::size_t t, int window);

/// Applies window_features to every (counter, slot). Returns {last, sum}, both k x t.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> window_matrices(const CounterMatrix& v, int window);

// ---------------------------------------------------------------------------
// PCA over the k x k covariance of counters

struct PCAModel {
    Eigen::VectorXd mean;         // k
    Eigen::MatrixXd components;   // k x c, orthonormal columns
    Eigen::VectorXd eigenvalues;  // c, descending
    double total_variance = 0.0;  // trace of the covariance

    Eigen::Index n_features() const { return mean.size(); }
    Eigen::Index n_components() const { return components.cols(); }
};

/// `samples` is k x t (rows = counters, columns = observations).
/// Throws DegenerateVariance when every row is constant, InvalidConfig for a bad c.
PCAModel fit_pca(const Eigen::MatrixXd& samples, int n_components);
PCAModel fit_pca(const CounterMatrix& v, int n_components);

/// components^T (snapshot - mean). Throws DimensionMismatch.
Eigen::VectorXd project_pca(const PCAModel& model, const Eigen::Ref<const Eigen::VectorXd>& snapshot);

/// Projects every column of a k x t matrix; returns t x c.
Eigen::MatrixXd project_pca_all(const PCAModel& model, const Eigen::MatrixXd& snapshots);

/// Share of total variance captured by the first m components.
double explained_variance(const PCAModel& model, int m);

nlohmann::json to_json(const PCAModel& model);
PCAModel pca_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Spatial weighting

enum class WeightMethod { SoftmaxInverseDistance, KnnUniform };

const char* weight_method_name(WeightMethod m);

struct SpatialWeightMatrix {
    Eigen::MatrixXd weights;  // k x k, row-stochastic, zero diagonal
    WeightMethod method = WeightMethod::SoftmaxInverseDistance;
    int knn_k = 0;
};

inline constexpr double kMinCounterDistance = 1e-6;

/// Rows follow graph.counters() order.
SpatialWeightMatrix build_weight_matrix(const RoadGraph& graph, WeightMethod method, int knn_k = 0);
SpatialWeightMatrix build_weight_matrix(std::span<const Point> positions, std::span<const Id> ids,
                                        WeightMethod method, int knn_k = 0);

/// w(t, i) = sum_j v(j, t) * b(i, j); `v` is k x t, result is t x k.
Eigen::MatrixXd spatial_context(const Eigen::MatrixXd& v, const SpatialWeightMatrix& b);

}  // namespace cb
