#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <utility>
#include <vector>

#include "cityboost/counterfeat.hpp"
#include "cityboost/roadgraph.hpp"

namespace cb {

// ---------------------------------------------------------------------------
// Traffic regime: citywide volume bucketed at training-set quantiles.

struct TrafficRegime {
    int n_clusters = 2;
    std::vector<double> thresholds;  // n_clusters - 1 cutpoints, sorted
    int window = 4;                  // slots summed per counter

    /// Bucket index; a value equal to a cutpoint goes to the lower bucket.
    int classify(double citywide_volume) const;

    friend bool operator==(const TrafficRegime&, const TrafficRegime&) = default;
};

/// s(t) = sum over counters of the past-window sum at t (missing as 0).
std::vector<double> citywide_volume(const CounterMatrix& v, int window = 4);

/// Throws InvalidConfig (n_clusters outside {2,3,4}), EmptyData (< 2 slots),
/// DegenerateVolume (all values equal).
TrafficRegime fit_regime(std::span<const double> citywide, int n_clusters, int window = 4);
TrafficRegime fit_regime(const CounterMatrix& v, int n_clusters, int window = 4);

nlohmann::json to_json(const TrafficRegime& r);
TrafficRegime regime_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Target encodings with a count guard and a fallback chain
//   (entity, regime) -> entity over all regimes -> citywide

enum class EncodingKind { ClassDistribution, Quantiles };

struct EncodingEntry {
    std::vector<double> values;  // class probabilities, or one value per quantile level
    std::int64_t count = 0;
    friend bool operator==(const EncodingEntry&, const EncodingEntry&) = default;
};

enum class ServedLevel : int { Entry = 0, Entity = 1, Global = 2 };

struct ResolvedEncoding {
    const EncodingEntry* entry = nullptr;
    ServedLevel level = ServedLevel::Global;
};

class EncodingTable {
public:
    EncodingKind kind = EncodingKind::ClassDistribution;
    TrafficRegime regime;
    std::int64_t min_count = 5;
    double alpha = 1.0;                  // class smoothing
    std::vector<double> quantile_levels; // Quantiles kind only

    std::map<std::pair<Id, int>, EncodingEntry> entries;
    std::map<Id, EncodingEntry> entity_fallback;
    EncodingEntry global;

    /// Total over every (entity, regime) with regime in range; throws UnknownRegime otherwise.
    ResolvedEncoding lookup(Id entity, int regime) const;

    /// ln of the resolved class probabilities.
    std::vector<double> logits(Id entity, int regime) const;

    /// Index of the 0.5 level (Quantiles kind).
    std::size_t median_index() const;

    friend bool operator==(const EncodingTable&, const EncodingTable&) = default;
};

nlohmann::json to_json(const EncodingTable& table);
EncodingTable encoding_from_json(const nlohmann::json& j);

struct ClassObservation {
    Id entity = 0;
    int regime = 0;
    int cls = 0;
};

struct ValueObservation {
    Id entity = 0;
    int regime = 0;
    double value = 0.0;
};

/// p_c = (n_c + alpha) / (n + 3 alpha) per (entity, regime), per entity and citywide.
/// Throws EmptyLabels, InvalidConfig.
EncodingTable fit_class_encoding(std::span<const ClassObservation> labels, const TrafficRegime& regime,
                                 std::int64_t min_count, double alpha = 1.0);

/// Interpolated quantiles per (entity, regime), per entity and citywide. `levels`
/// must lie in (0, 1) and include 0.5. Throws EmptyLabels, InvalidConfig.
EncodingTable fit_eta_encoding(std::span<const ValueObservation> etas, const TrafficRegime& regime,
                               std::int64_t min_count, std::span<const double> levels);

// ---------------------------------------------------------------------------
// Per-edge speed statistics

struct EdgeSpeedStats {
    double median = 0.0;
    double freeflow = 0.0;  // 85th percentile
    std::int64_t n_obs = 0;
    bool fallback = false;  // inherited citywide values
    friend bool operator==(const EdgeSpeedStats&, const EdgeSpeedStats&) = default;
};

inline constexpr double kFreeflowQuantile = 0.85;

struct SpeedStats {
    std::int64_t min_count = 1;
    std::map<Id, EdgeSpeedStats> edges;
    EdgeSpeedStats citywide;

    /// Unknown edges get the citywide values.
    const EdgeSpeedStats& lookup(Id edge) const;
};

struct SpeedObservation {
    Id edge = 0;
    double speed = 0.0;
};

/// Throws EmptyLabels.
SpeedStats fit_speed_stats(std::span<const SpeedObservation> speeds, std::int64_t min_count);

nlohmann::json to_json(const SpeedStats& s);
SpeedStats speed_stats_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Init scores (h0)

enum class Task { Core, Extended };

struct EncodedRow {
    Id entity = 0;
    int regime = 0;
};

/// Core: one row of 3 logits per input row (class weights are validated but do
/// not enter h0). Extended: one column holding the conditional median.
Eigen::MatrixXd build_init_scores(Task task, const EncodingTable& table,
                                  std::span<const EncodedRow> rows,
                                  std::span<const double> class_weights = {});

}  // namespace cb
