#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

namespace cb {

using Id = std::int64_t;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);

struct Node {
    Id id = 0;
    Point position;
    friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
    Id id = 0;
    Id start_node = 0;
    Id end_node = 0;
    int road_class = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

struct Supersegment {
    Id id = 0;
    std::vector<Id> nodes;
    friend bool operator==(const Supersegment&, const Supersegment&) = default;
};

struct Counter {
    Id id = 0;
    Point position;
    friend bool operator==(const Counter&, const Counter&) = default;
};

// Static city description. Every collection is kept sorted by id; lookups
// go through per-collection id -> index maps. Immutable once built.
class RoadGraph {
public:
    RoadGraph() = default;

    /// Validates ids, finiteness and referential integrity, then sorts.
    /// Throws SchemaError / DanglingReference / DegenerateSupersegment.
    RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges,
              std::vector<Supersegment> supersegments, std::vector<Counter> counters);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Supersegment>& supersegments() const { return supersegments_; }
    const std::vector<Counter>& counters() const { return counters_; }

    const Node& node(Id id) const;
    const Edge& edge(Id id) const;
    const Supersegment& supersegment(Id id) const;
    const Counter& counter(Id id) const;

    bool has_node(Id id) const { return node_index_.contains(id); }

    /// Position of counter `id` in counters(), which is also its row in counter matrices.
    std::size_t counter_index(Id id) const;

    friend bool operator==(const RoadGraph& a, const RoadGraph& b) {
        return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ &&
               a.supersegments_ == b.supersegments_ && a.counters_ == b.counters_;
    }

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<Supersegment> supersegments_;
    std::vector<Counter> counters_;
    std::unordered_map<Id, std::size_t> node_index_;
    std::unordered_map<Id, std::size_t> edge_index_;
    std::unordered_map<Id, std::size_t> supersegment_index_;
    std::unordered_map<Id, std::size_t> counter_index_;
};

struct GraphFiles {
    std::filesystem::path nodes;
    std::filesystem::path edges;
    std::filesystem::path supersegments;
    std::filesystem::path counters;

    /// nodes.csv, edges.csv, supersegments.csv, counters.csv inside `dir`.
    static GraphFiles in_directory(const std::filesystem::path& dir);
};

RoadGraph load_graph(const GraphFiles& files);
void save_graph(const RoadGraph& graph, const GraphFiles& files);

/// An edge is represented by its start node.
Point edge_representative_point(const Edge& edge, const RoadGraph& graph);

struct SupersegmentGeometry {
    Point medoid;
    Point start;
    Point end;
    double length = 0.0;
};

/// Medoid minimizes the summed distance to the other member positions
/// (ties: lowest node id). Length sums consecutive hops.
SupersegmentGeometry supersegment_geometry(const Supersegment& ss, const RoadGraph& graph);

/// Closest counter by Euclidean distance, ties to the lowest id. Throws NoCounters.
Id nearest_counter(const Point& p, const RoadGraph& graph);

}  // namespace cb
