#pragma once

// Histogram gradient-boosted decision trees with leaf-wise growth.
//
//   score_i = h0_i + sum_m tree_m(x_i)
//
// h0 is supplied per row at both train and predict time; it is never stored
// in the model. Tree leaf values already include the learning-rate shrinkage.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "cityboost/feature_table.hpp"
#include "cityboost/kernels.hpp"

namespace cb::gbdt {

// ---------------------------------------------------------------------------
// Binning

struct FeatureBins {
    std::vector<double> upper_bounds;  // strictly increasing; last is +inf
    bool has_missing = false;          // NaN goes to a dedicated bin 0 when set

    int n_bins() const { return static_cast<int>(upper_bounds.size()) + (has_missing ? 1 : 0); }
    int first_value_bin() const { return has_missing ? 1 : 0; }
    std::uint8_t bin_of(double x) const;
    /// Raw-value threshold equivalent to "bin <= b".
    double threshold_of(int bin) const { return upper_bounds[static_cast<std::size_t>(bin - first_value_bin())]; }
};

struct BinnedDataset {
    std::vector<FeatureBins> features;
    std::vector<std::vector<std::uint8_t>> bins;  // [feature][row]
    std::vector<std::size_t> offsets;             // histogram offsets, size n_features + 1
    std::size_t n_rows = 0;

    std::size_t n_features() const { return features.size(); }
    std::size_t total_bins() const { return offsets.empty() ? 0 : offsets.back(); }
    kernels::BinColumns columns() const { return {bins, offsets}; }
};

inline constexpr int kMaxBins = 255;

/// Quantile cut points per feature; at most max_bins value bins (<= 255).
BinnedDataset bin_features(const FeatureTable& table, int max_bins = kMaxBins);

// ---------------------------------------------------------------------------
// Parameters and objectives

struct TrainParams {
    int num_leaves = 31;
    int num_iters = 100;
    double learning_rate = 0.1;
    int min_data_in_leaf = 20;
    double lambda_l2 = 1.0;
    int early_stopping_rounds = 50;  // 0 disables
    int max_bins = kMaxBins;
    std::uint64_t seed = 0;
    double min_sum_hessian = 1e-3;
    double min_gain_to_split = 0.0;
    double feature_fraction = 1.0;
    double bagging_fraction = 1.0;

    /// Throws InvalidConfig.
    void validate() const;
};

enum class ObjectiveKind { WeightedSoftmaxCE, MAE };

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::WeightedSoftmaxCE;
    std::array<double, 3> class_weights{0.1, 0.3, 0.6};  // green, yellow, red

    int n_outputs() const { return kind == ObjectiveKind::WeightedSoftmaxCE ? 3 : 1; }
    /// Throws InvalidConfig unless weights are finite, positive and red >= yellow >= green.
    void validate() const;
};

const char* objective_name(ObjectiveKind k);

struct GradHess3 {
    std::array<double, 3> g{};
    std::array<double, 3> h{};
};

/// p = softmax(logits), w = weights[label]: g_c = w (p_c - [c = label]), h_c = w p_c (1 - p_c).
GradHess3 grad_hess_wce(std::span<const double, 3> logits, int label, std::span<const double, 3> weights);

struct GradHess1 {
    double g = 0.0;
    double h = 0.0;
};

/// g = sign(pred - label) (sign(0) = 0), h = 1.
GradHess1 grad_hess_mae(double pred, double label);

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    int bin = 0;       // go left when bin <= this
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double gain = 0.0;
    std::int64_t count = 0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int n_leaves() const;
    /// Leaf node index reached by a raw feature row (NaN goes left).
    int leaf_of(std::span<const double> row) const;
    double predict(std::span<const double> row) const { return nodes[static_cast<std::size_t>(leaf_of(row))].value; }
    /// Same routing using binned data.
    int leaf_of_binned(const BinnedDataset& data, std::size_t row) const;

    friend bool operator==(const Tree&, const Tree&) = default;
};

struct GrownTree {
    Tree tree;
    std::vector<int> row_leaf;  // leaf node per dataset row, -1 for rows not grown on
};

/// Best-first growth: keep splitting the leaf with the largest gain
///   G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)
/// until num_leaves or no positive-gain split satisfies min_data_in_leaf.
/// Leaf values are -G/(H+l), unshrunk. `rows` and `features` restrict the
/// growth (empty = all).
GrownTree grow_tree(const BinnedDataset& data, std::span<const double> g, std::span<const double> h,
                    const TrainParams& params, std::span<const std::uint32_t> rows = {},
                    std::span<const int> features = {});

// ---------------------------------------------------------------------------
// Ensembles

struct TreeEnsemble {
    ObjectiveConfig objective;
    TrainParams params;
    std::vector<std::string> feature_names;
    std::vector<std::vector<Tree>> iterations;  // [iteration][output]

    int n_outputs() const { return objective.n_outputs(); }
    std::size_t n_iterations() const { return iterations.size(); }
};

struct LogRow {
    int iter = 0;
    double train_metric = 0.0;
    double valid_metric = 0.0;  // NaN without validation data
};

struct TrainResult {
    TreeEnsemble model;
    std::vector<LogRow> log;  // row 0 is the h0-only ensemble
    int best_iteration = 0;
};

/// Empty init matrices mean all-zero h0. Throws SchemaMismatch, EmptyData,
/// DimensionMismatch, InvalidConfig.
TrainResult train(const FeatureTable& train_rows, const FeatureTable& valid_rows,
                  const Eigen::MatrixXd& init_train, const Eigen::MatrixXd& init_valid,
                  const ObjectiveConfig& objective, const TrainParams& params);

/// Raw scores h0 + sum of tree outputs, n x n_outputs. Throws SchemaMismatch.
Eigen::MatrixXd predict(const TreeEnsemble& model, const FeatureTable& rows, const Eigen::MatrixXd& init);
Eigen::MatrixXd predict_proba(const TreeEnsemble& model, const FeatureTable& rows, const Eigen::MatrixXd& init);

/// Metric for raw scores: weighted CE (core) or MAE.
double evaluate_scores(const ObjectiveConfig& objective, const Eigen::MatrixXd& scores,
                       std::span<const double> labels);

/// Total split gain per feature.
std::vector<double> feature_importance(const TreeEnsemble& model);

nlohmann::json to_json(const TreeEnsemble& model);
TreeEnsemble model_from_json(const nlohmann::json& j);

inline constexpr int kModelFormatVersion = 1;

void save_model(const TreeEnsemble& model, const std::filesystem::path& path);
TreeEnsemble load_model(const std::filesystem::path& path);
void write_log(std::span<const LogRow> log, const std::filesystem::path& path);

}  // namespace cb::gbdt
