#pragma once

// Orchestration: week split, train-only artifact fitting, table assembly,
// ablation arms and the stepwise tuner.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cityboost/counterfeat.hpp"
#include "cityboost/encodings.hpp"
#include "cityboost/feature_table.hpp"
#include "cityboost/gbdt.hpp"
#include "cityboost/syncity.hpp"

namespace cb {

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    std::vector<int> train_weeks;
    std::vector<int> valid_weeks;
};

/// Validation takes the weeks at sorted positions 1, 5, 9, ...; the rest train.
/// Throws TooFewWeeks below `min_weeks` (5 by default).
SplitSpec interleaved_split(std::vector<int> weeks, std::size_t min_weeks = 5);

// ---------------------------------------------------------------------------
// Configuration

struct FeatureToggles {
    bool pca = true;
    bool init_score = true;
    bool target_encoding = true;
    friend bool operator==(const FeatureToggles&, const FeatureToggles&) = default;
};

struct PipelineConfig {
    Task task = Task::Core;
    int window = 4;  // one hour of 15-minute slots
    int pcs_last = 8;
    int pcs_sum = 5;
    int core_regimes = 2;
    int extended_regimes = 4;
    std::int64_t core_min_count = 5;
    std::int64_t extended_min_count = 10;
    double alpha = 1.0;
    std::vector<double> eta_levels{0.1, 0.5, 0.9};
    std::int64_t speed_min_count = 5;
    int knn_small = 3;
    int knn_large = 8;
    /// Smallest week count for which the interleaved rule applies unchanged.
    std::size_t min_split_weeks = 5;
};

const char* task_name(Task t);
Task parse_task(const std::string& s);  // throws Usage

// ---------------------------------------------------------------------------
// Fitted artifacts (train weeks only)

struct Artifacts {
    Task task = Task::Core;
    SplitSpec split;
    PCAModel pca_last;
    PCAModel pca_sum;
    TrafficRegime regime;
    std::optional<EncodingTable> class_encoding;  // core
    std::optional<SpeedStats> speed_stats;        // core
    std::optional<EncodingTable> eta_encoding;    // extended
    SpatialWeightMatrix softmax_weights;
    SpatialWeightMatrix knn_small_weights;
    SpatialWeightMatrix knn_large_weights;
};

/// Every statistic here sees only slots whose week is in split.train_weeks.
/// Observers (if set) are told about each label/value set handed to a fitter.
struct FitObserver {
    std::function<void(int t)> label_slot_used;
};

Artifacts fit_artifacts(const SynthWorld& world, const SplitSpec& split, const PipelineConfig& config,
                        const FitObserver* observer = nullptr);

nlohmann::json to_json(const Artifacts& a);

// ---------------------------------------------------------------------------
// Assembly

/// Column names in order. With the default configuration core has 44
/// columns and extended 31.
std::vector<std::string> schema_for(const Artifacts& artifacts);
/// Columns removed by switching an ablation toggle off.
std::vector<std::string> pca_columns(const Artifacts& artifacts);
std::vector<std::string> encoding_columns(const Artifacts& artifacts);

/// One row per labeled (edge, t) with t >= 1 and week(t) in `weeks`; features use
/// counter slot t - 1. Throws MissingArtifact, SlotOutOfRange.
FeatureTable assemble_core(const SynthWorld& world, const Artifacts& artifacts, std::span<const int> weeks);

/// One row per (supersegment, t) with t >= 1, week(t) in `weeks` and a finite ETA.
FeatureTable assemble_extended(const SynthWorld& world, const Artifacts& artifacts, std::span<const int> weeks);

FeatureTable assemble(const SynthWorld& world, const Artifacts& artifacts, std::span<const int> weeks);

/// h0 for each row of an assembled table (n x 3 logits or n x 1 median ETA).
Eigen::MatrixXd init_scores(const SynthWorld& world, const Artifacts& artifacts, const FeatureTable& table,
                            std::span<const double> class_weights = {});

/// Drops the columns of disabled toggles.
FeatureTable apply_toggles(const FeatureTable& table, const Artifacts& artifacts, const FeatureToggles& toggles);

struct PreparedData {
    Artifacts artifacts;
    FeatureTable train;
    FeatureTable valid;
    Eigen::MatrixXd init_train;
    Eigen::MatrixXd init_valid;
};

/// Split (relaxing the week minimum with a warning when the world is short),
/// fit artifacts, assemble both tables with every column, and build h0.
PreparedData prepare(const SynthWorld& world, const PipelineConfig& config,
                     std::span<const double> class_weights = {});

SplitSpec split_for_world(const SynthWorld& world, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Tuning

struct TuneCandidate {
    std::string param;
    std::vector<double> values;
};

struct TuneTrial {
    std::string param;
    double value = 0.0;
    double metric = 0.0;
};

struct TuneResult {
    gbdt::TrainParams params;
    double metric = 0.0;
    std::vector<TuneTrial> trace;
};

/// Sets a TrainParams field by name. Throws InvalidConfig for unknown names.
void set_param(gbdt::TrainParams& p, const std::string& name, double value);
double get_param(const gbdt::TrainParams& p, const std::string& name);

/// Coordinate descent over `space` in order; ties keep the earlier candidate.
/// `evaluate` returns the validation metric for a parameter set (lower is better).
TuneResult stepwise_tune(const gbdt::TrainParams& base, std::span<const TuneCandidate> space,
                         const std::function<double(const gbdt::TrainParams&)>& evaluate);

/// Default sweep; each list starts with the untuned value.
std::vector<TuneCandidate> default_tune_space(const gbdt::TrainParams& base);

// ---------------------------------------------------------------------------
// Ablation

struct AblationArm {
    std::string name;
    FeatureToggles toggles;
    bool tuned = false;
};

/// Parses "pca+init_score+target_encoding+tuned" style names; "none" is the empty arm.
AblationArm parse_arm(const std::string& spec);
std::string arm_name(const FeatureToggles& t, bool tuned);
/// The four-step ladder of the results table.
std::vector<AblationArm> ladder_arms(Task task);

struct AblationRow {
    std::string arm;
    std::size_t n_features = 0;
    int best_iteration = 0;
    double valid_metric_iter0 = 0.0;
    double valid_metric = 0.0;
};

struct AblationReport {
    Task task = Task::Core;
    std::array<double, 3> class_weights{};
    std::vector<AblationRow> rows;
};

/// Trains one model per arm on the same prepared data.
AblationReport ablate(const PreparedData& data, std::span<const AblationArm> arms,
                      const gbdt::ObjectiveConfig& objective, const gbdt::TrainParams& params);

gbdt::ObjectiveConfig objective_for(Task task, const std::array<double, 3>& class_weights);

/// Trains on the prepared data with the arm's toggles applied.
gbdt::TrainResult train_arm(const PreparedData& data, const FeatureToggles& toggles,
                            const gbdt::ObjectiveConfig& objective, const gbdt::TrainParams& params);

void write_ablation(const AblationReport& report, const std::filesystem::path& path);
void write_tune_trace(const TuneResult& result, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run config: flat key=value lines, '#' comments.

using KeyValues = std::map<std::string, std::string>;

/// Throws MissingFile, InvalidConfig (malformed line or duplicate key).
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);

/// Applies known training keys (num_leaves, learning_rate, ...) from `kv`.
void apply_params(gbdt::TrainParams& p, const KeyValues& kv);
KeyValues params_to_key_values(const gbdt::TrainParams& p);
std::array<double, 3> parse_class_weights(const std::string& s);  // "g,y,r"

// ---------------------------------------------------------------------------
// Predictions and scatter export

/// entity_id,t,pred_0[,pred_1,pred_2]
void write_predictions(const FeatureTable& table, const Eigen::MatrixXd& preds, const std::filesystem::path& path);
Eigen::MatrixXd read_predictions(const std::filesystem::path& path, std::vector<RowKey>* keys = nullptr);

struct ScatterPoint {
    int t = 0;
    double pc1 = 0.0;
    double pc2 = 0.0;
    bool weekend = false;
    bool peak = false;
};

/// Weekday slots inside the morning (6-10h) or evening (15-20h) rush.
bool is_peak_slot(int slot_of_week);

/// First two PC scores of the last-value snapshots, PCA fitted on the train weeks.
std::vector<ScatterPoint> pca_scatter(const SynthWorld& world, const PipelineConfig& config);
void write_scatter(std::span<const ScatterPoint> points, const std::filesystem::path& path);

/// Mean silhouette of a two-group labelling in 2-D.
double silhouette(std::span<const ScatterPoint> points);

}  // namespace cb
