#include "cityboost/roadgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"

namespace cb {

namespace {

template <typename T>
void sort_and_index(std::vector<T>& items, std::unordered_map<Id, std::size_t>& index,
                    const char* what) {
    std::sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
    index.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].id < 0) {
            throw Error(ErrorKind::SchemaError, std::string(what) + " id must be >= 0");
        }
        if (!index.emplace(items[i].id, i).second) {
            throw Error(ErrorKind::SchemaError,
                        std::string("duplicate ") + what + " id " + std::to_string(items[i].id));
        }
    }
}

template <typename T>
const T& lookup(const std::vector<T>& items, const std::unordered_map<Id, std::size_t>& index,
                Id id, const char* what) {
    const auto it = index.find(id);
    if (it == index.end()) {
        throw Error(ErrorKind::DanglingReference,
                    std::string("unknown ") + what + " id " + std::to_string(id));
    }
    return items[it->second];
}

void require_finite(const Point& p, const char* what, Id id) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw Error(ErrorKind::SchemaError,
                    std::string(what) + " " + std::to_string(id) + " has a non-finite position");
    }
}

}  // namespace

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

RoadGraph::RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges,
                     std::vector<Supersegment> supersegments, std::vector<Counter> counters)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      supersegments_(std::move(supersegments)),
      counters_(std::move(counters)) {
    sort_and_index(nodes_, node_index_, "node");
    sort_and_index(edges_, edge_index_, "edge");
    sort_and_index(supersegments_, supersegment_index_, "supersegment");
    sort_and_index(counters_, counter_index_, "counter");

    for (const auto& n : nodes_) require_finite(n.position, "node", n.id);
    for (const auto& c : counters_) require_finite(c.position, "counter", c.id);

    for (const auto& e : edges_) {
        if (!has_node(e.start_node) || !has_node(e.end_node)) {
            throw Error(ErrorKind::DanglingReference,
                        "edge " + std::to_string(e.id) + " references an unknown node");
        }
        if (e.start_node == e.end_node) {
            throw Error(ErrorKind::SchemaError,
                        "edge " + std::to_string(e.id) + " is a self loop");
        }
    }
    for (const auto& ss : supersegments_) {
        if (ss.nodes.size() < 2) {
            throw Error(ErrorKind::DegenerateSupersegment,
                        "supersegment " + std::to_string(ss.id) + " has fewer than 2 nodes");
        }
        for (std::size_t i = 0; i < ss.nodes.size(); ++i) {
            if (!has_node(ss.nodes[i])) {
                throw Error(ErrorKind::DanglingReference,
                            "supersegment " + std::to_string(ss.id) + " references unknown node " +
                                std::to_string(ss.nodes[i]));
            }
            if (i > 0 && ss.nodes[i] == ss.nodes[i - 1]) {
                throw Error(ErrorKind::SchemaError, "supersegment " + std::to_string(ss.id) +
                                                        " repeats a node consecutively");
            }
        }
    }
}

const Node& RoadGraph::node(Id id) const { return lookup(nodes_, node_index_, id, "node"); }
const Edge& RoadGraph::edge(Id id) const { return lookup(edges_, edge_index_, id, "edge"); }
const Supersegment& RoadGraph::supersegment(Id id) const {
    return lookup(supersegments_, supersegment_index_, id, "supersegment");
}
const Counter& RoadGraph::counter(Id id) const {
    return lookup(counters_, counter_index_, id, "counter");
}

std::size_t RoadGraph::counter_index(Id id) const {
    const auto it = counter_index_.find(id);
    if (it == counter_index_.end()) {
        throw Error(ErrorKind::DanglingReference, "unknown counter id " + std::to_string(id));
    }
    return it->second;
}

GraphFiles GraphFiles::in_directory(const std::filesystem::path& dir) {
    return {dir / "nodes.csv", dir / "edges.csv", dir / "supersegments.csv", dir / "counters.csv"};
}

RoadGraph load_graph(const GraphFiles& files) {
    std::vector<Node> nodes;
    {
        csv::Reader r(files.nodes, {"node_id", "x", "y"});
        while (r.next()) nodes.push_back({r.as_int(0), {r.as_double(1), r.as_double(2)}});
    }
    std::vector<Edge> edges;
    {
        csv::Reader r(files.edges, {"edge_id", "start_node", "end_node", "road_class"});
        while (r.next()) {
            const int road_class = r.field(3).empty() ? 0 : static_cast<int>(r.as_int(3));
            edges.push_back({r.as_int(0), r.as_int(1), r.as_int(2), road_class});
        }
    }
    std::vector<Supersegment> supersegments;
    {
        csv::Reader r(files.supersegments, {"ss_id", "node_seq"});
        while (r.next()) {
            Supersegment ss{r.as_int(0), {}};
            for (auto tok : csv::split(r.field(1), ';')) {
                Id v = 0;
                const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                    throw Error(ErrorKind::SchemaError,
                                files.supersegments.string() + ":" +
                                    std::to_string(r.line_number()) + ": bad node_seq entry '" +
                                    std::string(tok) + "'");
                }
                ss.nodes.push_back(v);
            }
            supersegments.push_back(std::move(ss));
        }
    }
    std::vector<Counter> counters;
    {
        csv::Reader r(files.counters, {"counter_id", "x", "y"});
        while (r.next()) counters.push_back({r.as_int(0), {r.as_double(1), r.as_double(2)}});
    }
    return RoadGraph(std::move(nodes), std::move(edges), std::move(supersegments),
                     std::move(counters));
}

void save_graph(const RoadGraph& graph, const GraphFiles& files) {
    using csv::format_double;
    {
        auto out = csv::open_output(files.nodes);
        out << "node_id,x,y\n";
        for (const auto& n : graph.nodes()) {
            out << n.id << ',' << format_double(n.position.x) << ','
                << format_double(n.position.y) << '\n';
        }
    }
    {
        auto out = csv::open_output(files.edges);
        out << "edge_id,start_node,end_node,road_class\n";
        for (const auto& e : graph.edges()) {
            out << e.id << ',' << e.start_node << ',' << e.end_node << ',' << e.road_class << '\n';
        }
    }
    {
        auto out = csv::open_output(files.supersegments);
        out << "ss_id,node_seq\n";
        for (const auto& ss : graph.supersegments()) {
            out << ss.id << ',';
            for (std::size_t i = 0; i < ss.nodes.size(); ++i) out << (i ? ";" : "") << ss.nodes[i];
            out << '\n';
        }
    }
    {
        auto out = csv::open_output(files.counters);
        out << "counter_id,x,y\n";
        for (const auto& c : graph.counters()) {
            out << c.id << ',' << format_double(c.position.x) << ','
                << format_double(c.position.y) << '\n';
        }
    }
}

Point edge_representative_point(const Edge& edge, const RoadGraph& graph) {
    return graph.node(edge.start_node).position;
}

SupersegmentGeometry supersegment_geometry(const Supersegment& ss, const RoadGraph& graph) {
    if (ss.nodes.size() < 2) {
        throw Error(ErrorKind::DegenerateSupersegment,
                    "supersegment " + std::to_string(ss.id) + " has fewer than 2 nodes");
    }
    std::vector<Point> pts;
    pts.reserve(ss.nodes.size());
    for (Id id : ss.nodes) pts.push_back(graph.node(id).position);

    SupersegmentGeometry geo;
    geo.start = pts.front();
    geo.end = pts.back();
    for (std::size_t i = 1; i < pts.size(); ++i) geo.length += distance(pts[i - 1], pts[i]);

    // Distances are summed in sorted order so that congruent members of a
    // symmetric layout produce bit-identical totals and the id tie-break applies.
    double best_sum = std::numeric_limits<double>::infinity();
    Id best_id = 0;
    std::vector<double> d(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = 0; j < pts.size(); ++j) d[j] = distance(pts[i], pts[j]);
        std::sort(d.begin(), d.end());
        double sum = 0.0;
        for (double v : d) sum += v;
        if (sum < best_sum || (sum == best_sum && ss.nodes[i] < best_id)) {
            best_sum = sum;
            best_id = ss.nodes[i];
            geo.medoid = pts[i];
        }
    }
    return geo;
}

Id nearest_counter(const Point& p, const RoadGraph& graph) {
    const auto& counters = graph.counters();
    if (counters.empty()) throw Error(ErrorKind::NoCounters, "graph has no counters");
    // counters() is sorted by id, so strict < keeps the lowest id on ties.
    Id best = counters.front().id;
    double best_d = distance(p, counters.front().position);
    for (std::size_t i = 1; i < counters.size(); ++i) {
        const double d = distance(p, counters[i].position);
        if (d < best_d) {
            best_d = d;
            best = counters[i].id;
        }
    }
    return best;
}

}  // namespace cb
