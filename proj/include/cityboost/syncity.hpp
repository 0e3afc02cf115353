#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cityboost/counterfeat.hpp"
#include "cityboost/roadgraph.hpp"

namespace cb {

enum CongestionClass : int { kGreen = 0, kYellow = 1, kRed = 2 };
inline constexpr int kNumClasses = 3;

/// Speed / free-flow ratio cutoffs: green >= 0.66, yellow >= 0.33, red below.
int congestion_class(double speed_ratio);

struct SynthConfig {
    std::uint64_t seed = 7;
    int n_counters = 50;
    int n_nodes = 300;
    int n_edges = 500;
    int n_supersegments = 20;
    int n_weeks = 4;
    int first_week = 1;
    double peak_amplitude = 1.0;
    double noise_sd = 15.0;         // vehicles per slot
    double speed_noise_sd = 0.05;   // log-scale multiplicative noise on edge speed
    double label_fraction = 0.05;   // share of (edge, t) pairs carrying a congestion label
    double extent = 10000.0;        // side of the square city, meters

    /// Throws InvalidConfig.
    void validate() const;
};

struct LabelRecord {
    Id edge = 0;
    int t = 0;
    int cls = 0;
    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

// Everything the pipeline consumes for one city. Counter slot t is the
// observation preceding label slot t+1.
struct SynthWorld {
    RoadGraph graph;
    CounterMatrix volumes;                    // k x T, rows follow graph.counters()
    Eigen::MatrixXd edge_speeds;              // E x T km/h, rows follow graph.edges(); NaN = unobserved
    std::vector<LabelRecord> congestion_labels;  // sorted by (edge, t)
    Eigen::MatrixXd etas;                     // S x T seconds, rows follow graph.supersegments()

    int n_slots() const { return static_cast<int>(volumes.n_slots()); }
    std::vector<int> weeks() const;
    int week_of(int t) const { return volumes.slots.at(static_cast<std::size_t>(t)).week; }
};

/// Deterministic in `config` (bit-identical output for identical configs).
SynthWorld generate(const SynthConfig& config);

/// Writes nodes/edges/supersegments/counters CSVs plus volumes.csv, labels_cc.csv,
/// speeds.csv, eta.csv and slots.csv into `dir`.
void save_world(const SynthWorld& world, const std::filesystem::path& dir);
SynthWorld load_world(const std::filesystem::path& dir);

struct SegmentHop {
    Eigen::Index edge_row = 0;  // index into graph.edges()
    double length = 0.0;        // meters
};

/// Member segments of a supersegment. Throws DanglingReference when a
/// consecutive node pair is not joined by an edge.
std::vector<SegmentHop> supersegment_hops(const Supersegment& ss, const RoadGraph& graph);

/// Sum of member-segment travel times (seconds) at slot t, speeds in km/h.
double supersegment_eta(std::span<const SegmentHop> hops, const Eigen::MatrixXd& edge_speeds, int t);

}  // namespace cb
