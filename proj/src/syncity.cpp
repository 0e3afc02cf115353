#include "cityboost/syncity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"
#include "cityboost/rng.hpp"

namespace cb {

namespace {

enum Stream : std::uint64_t {
    kLayout = 1,
    kCounterParams = 2,
    kVolumeNoise = 3,
    kDayFactor = 4,
    kEdgeParams = 5,
    kSpeedNoise = 6,
    kLabelMask = 7,
    kSupersegments = 8,
};

double diurnal(double hour) { return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 3.0) / 24.0)); }

double bump(double hour, double from, double to) {
    if (hour < from || hour > to) return 0.0;
    return std::sin(std::numbers::pi * (hour - from) / (to - from));
}

// Share of the morning peak at a location: the east side fills up in the
// morning, the west side in the evening.
double morning_share(const Point& p, double extent) {
    return 1.0 / (1.0 + std::exp(-(p.x - 0.5 * extent) / (extent / 6.0)));
}

// Relative load above base (>= 0) for a site with the given peak mix.
double seasonal_shape(int t, double morning, double evening) {
    const int day = (t / kSlotsPerDay) % 7;
    const double hour = static_cast<double>(t % kSlotsPerDay) / 4.0;
    if (day < 5) {
        return 0.6 * diurnal(hour) + 1.2 * morning * bump(hour, 6.0, 10.0) +
               1.2 * evening * bump(hour, 15.0, 20.0);
    }
    return 0.5 * diurnal(hour - 2.0) +
           0.2 * (morning * bump(hour, 8.0, 12.0) + evening * bump(hour, 16.0, 21.0));
}

struct SiteProfile {
    double base = 0.0;
    double morning = 0.0;
    double evening = 0.0;
};

}  // namespace

int congestion_class(double speed_ratio) {
    if (speed_ratio >= 0.66) return kGreen;
    if (speed_ratio >= 0.33) return kYellow;
    return kRed;
}

void SynthConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
    if (n_counters < 1) bad("n_counters must be >= 1");
    if (n_nodes < 2) bad("n_nodes must be >= 2");
    if (n_edges < 1) bad("n_edges must be >= 1");
    if (static_cast<long long>(n_edges) >
        static_cast<long long>(n_nodes) * static_cast<long long>(n_nodes - 1)) {
        bad("n_edges exceeds the number of ordered node pairs");
    }
    if (n_supersegments < 1) bad("n_supersegments must be >= 1");
    if (n_weeks < 1) bad("n_weeks must be >= 1");
    if (!(peak_amplitude >= 0.0)) bad("peak_amplitude must be >= 0");
    if (!(noise_sd >= 0.0)) bad("noise_sd must be >= 0");
    if (!(speed_noise_sd >= 0.0)) bad("speed_noise_sd must be >= 0");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) bad("label_fraction must be in (0, 1]");
    if (!(extent > 0.0)) bad("extent must be > 0");
}

std::vector<int> SynthWorld::weeks() const {
    std::vector<int> out;
    for (const auto& s : volumes.slots) {
        if (out.empty() || out.back() != s.week) out.push_back(s.week);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<SegmentHop> supersegment_hops(const Supersegment& ss, const RoadGraph& graph) {
    std::map<std::pair<Id, Id>, Eigen::Index> by_endpoints;
    const auto& edges = graph.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        by_endpoints.emplace(std::pair(edges[e].start_node, edges[e].end_node),
                             static_cast<Eigen::Index>(e));
    }
    std::vector<SegmentHop> hops;
    for (std::size_t i = 1; i < ss.nodes.size(); ++i) {
        const Id a = ss.nodes[i - 1];
        const Id b = ss.nodes[i];
        const auto it = by_endpoints.find({a, b});
        if (it == by_endpoints.end()) {
            throw Error(ErrorKind::DanglingReference, "supersegment " + std::to_string(ss.id) +
                                                          " hops between unconnected nodes");
        }
        hops.push_back({it->second, distance(graph.node(a).position, graph.node(b).position)});
    }
    return hops;
}

double supersegment_eta(std::span<const SegmentHop> hops, const Eigen::MatrixXd& edge_speeds, int t) {
    double eta = 0.0;
    for (const auto& hop : hops) eta += hop.length / (edge_speeds(hop.edge_row, t) / 3.6);
    return eta;
}

SynthWorld generate(const SynthConfig& config) {
    config.validate();
    const double extent = config.extent;
    const int n_slots = config.n_weeks * kSlotsPerWeek;

    // --- layout
    Rng layout = Rng::substream(config.seed, kLayout);
    std::vector<Node> nodes;
    for (int i = 0; i < config.n_nodes; ++i) {
        nodes.push_back({i, {layout.uniform(0.0, extent), layout.uniform(0.0, extent)}});
    }
    std::vector<Counter> counters;
    for (int i = 0; i < config.n_counters; ++i) {
        counters.push_back({i, {layout.uniform(0.0, extent), layout.uniform(0.0, extent)}});
    }

    // Directed edges: round r links every node (in shuffled order) to its
    // r-th nearest neighbour until the edge budget is spent.
    std::vector<std::vector<int>> neighbours(static_cast<std::size_t>(config.n_nodes));
    for (int i = 0; i < config.n_nodes; ++i) {
        auto& nb = neighbours[i];
        for (int j = 0; j < config.n_nodes; ++j) {
            if (j != i) nb.push_back(j);
        }
        std::stable_sort(nb.begin(), nb.end(), [&](int a, int b) {
            return distance(nodes[i].position, nodes[a].position) <
                   distance(nodes[i].position, nodes[b].position);
        });
    }
    std::vector<Edge> edges;
    std::set<std::pair<int, int>> used;
    for (int round = 0; static_cast<int>(edges.size()) < config.n_edges; ++round) {
        std::vector<int> order(static_cast<std::size_t>(config.n_nodes));
        for (int i = 0; i < config.n_nodes; ++i) order[i] = i;
        for (int i = config.n_nodes - 1; i > 0; --i) {
            std::swap(order[i], order[layout.below(static_cast<std::uint64_t>(i) + 1)]);
        }
        for (int i : order) {
            if (static_cast<int>(edges.size()) >= config.n_edges) break;
            if (round >= static_cast<int>(neighbours[i].size())) continue;
            const int j = neighbours[i][round];
            if (!used.emplace(i, j).second) continue;
            const double u = layout.uniform();
            const int road_class = u < 0.6 ? 0 : (u < 0.9 ? 1 : 2);
            edges.push_back({static_cast<Id>(edges.size()), i, j, road_class});
        }
    }

    // Supersegments: random walks that avoid immediate backtracking.
    Rng ss_rng = Rng::substream(config.seed, kSupersegments);
    std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(config.n_nodes));
    for (const auto& e : edges) out_edges[e.start_node].push_back(static_cast<int>(e.id));
    std::vector<int> starts;
    for (int i = 0; i < config.n_nodes; ++i) {
        if (!out_edges[i].empty()) starts.push_back(i);
    }
    std::vector<Supersegment> supersegments;
    for (int s = 0; s < config.n_supersegments; ++s) {
        Supersegment ss{s, {}};
        int at = starts[ss_rng.below(starts.size())];
        ss.nodes.push_back(at);
        const int hops = 4 + static_cast<int>(ss_rng.below(6));
        for (int h = 0; h < hops; ++h) {
            std::vector<int> options;
            for (int e : out_edges[at]) {
                const int next = static_cast<int>(edges[e].end_node);
                if (ss.nodes.size() < 2 || next != ss.nodes[ss.nodes.size() - 2]) options.push_back(next);
            }
            if (options.empty()) break;
            at = options[ss_rng.below(options.size())];
            ss.nodes.push_back(at);
        }
        supersegments.push_back(std::move(ss));
    }

    SynthWorld world;
    world.graph = RoadGraph(nodes, edges, supersegments, counters);

    // --- counter volumes
    Rng cparams = Rng::substream(config.seed, kCounterParams);
    std::vector<SiteProfile> counter_profile;
    for (const auto& c : counters) {
        const double m = morning_share(c.position, extent);
        SiteProfile p;
        p.base = cparams.uniform(80.0, 400.0);
        p.morning = m * cparams.uniform(0.8, 1.2);
        p.evening = (1.0 - m) * cparams.uniform(0.8, 1.2);
        counter_profile.push_back(p);
    }
    Rng day_rng = Rng::substream(config.seed, kDayFactor);
    std::vector<double> day_factor(static_cast<std::size_t>(n_slots / kSlotsPerDay));
    for (auto& f : day_factor) f = std::max(0.5, 1.0 + 0.1 * day_rng.normal());

    const int k = config.n_counters;
    Rng vnoise = Rng::substream(config.seed, kVolumeNoise);
    Eigen::MatrixXd noise(k, n_slots);
    for (int t = 0; t < n_slots; ++t) {
        for (int i = 0; i < k; ++i) noise(i, t) = vnoise.normal();
    }

    world.volumes.values.resize(k, n_slots);
    world.volumes.counter_ids.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) world.volumes.counter_ids[i] = i;
    for (int t = 0; t < n_slots; ++t) {
        world.volumes.slots.push_back({config.first_week + t / kSlotsPerWeek, t % kSlotsPerWeek});
        const double f = day_factor[static_cast<std::size_t>(t / kSlotsPerDay)];
        for (int i = 0; i < k; ++i) {
            const auto& p = counter_profile[i];
            const double level = p.base * (1.0 + config.peak_amplitude * f *
                                                     seasonal_shape(t, p.morning, p.evening));
            world.volumes.values(i, t) = std::round(std::max(0.0, level + config.noise_sd * noise(i, t)));
        }
    }

    // --- edge speeds and congestion
    Rng eparams = Rng::substream(config.seed, kEdgeParams);
    const int n_edges = config.n_edges;
    std::vector<double> freeflow(static_cast<std::size_t>(n_edges));
    std::vector<double> sensitivity(static_cast<std::size_t>(n_edges));
    std::vector<SiteProfile> edge_profile(static_cast<std::size_t>(n_edges));
    std::vector<int> edge_counter(static_cast<std::size_t>(n_edges));
    constexpr double kClassSpeed[] = {50.0, 70.0, 90.0};
    constexpr double kClassSensitivity[] = {1.0, 0.8, 0.6};
    for (int e = 0; e < n_edges; ++e) {
        const auto& edge = world.graph.edges()[e];
        const Point p = edge_representative_point(edge, world.graph);
        freeflow[e] = kClassSpeed[edge.road_class] * eparams.uniform(0.9, 1.1);
        sensitivity[e] = kClassSensitivity[edge.road_class] * std::exp(0.5 * eparams.normal());
        const double m = morning_share(p, extent);
        edge_profile[e].morning = m * eparams.uniform(0.8, 1.2);
        edge_profile[e].evening = (1.0 - m) * eparams.uniform(0.8, 1.2);
        edge_counter[e] = static_cast<int>(world.graph.counter_index(nearest_counter(p, world.graph)));
    }

    Rng snoise = Rng::substream(config.seed, kSpeedNoise);
    world.edge_speeds.resize(n_edges, n_slots);
    Eigen::MatrixXd ratio(n_edges, n_slots);
    for (int e = 0; e < n_edges; ++e) {
        const auto& prof = edge_profile[e];
        const int c = edge_counter[e];
        for (int t = 0; t < n_slots; ++t) {
            const double f = day_factor[static_cast<std::size_t>(t / kSlotsPerDay)];
            // Local deviation seen by the nearest counter feeds into the edge load.
            const double local = 0.5 * config.noise_sd * noise(c, t) / counter_profile[c].base;
            const double load = std::max(
                0.0, config.peak_amplitude * f * seasonal_shape(t, prof.morning, prof.evening) + local);
            const double r = 1.0 / (1.0 + sensitivity[e] * load * load);
            const double speed = freeflow[e] * r * std::exp(config.speed_noise_sd * snoise.normal());
            world.edge_speeds(e, t) = speed;
            ratio(e, t) = speed / freeflow[e];
        }
    }

    Rng mask = Rng::substream(config.seed, kLabelMask);
    for (int e = 0; e < n_edges; ++e) {
        for (int t = 0; t < n_slots; ++t) {
            if (mask.uniform() < config.label_fraction) {
                world.congestion_labels.push_back(
                    {world.graph.edges()[e].id, t, congestion_class(ratio(e, t))});
            }
        }
    }

    // --- supersegment ETAs
    const auto& sss = world.graph.supersegments();
    world.etas.resize(static_cast<Eigen::Index>(sss.size()), n_slots);
    for (std::size_t s = 0; s < sss.size(); ++s) {
        const auto hops = supersegment_hops(sss[s], world.graph);
        for (int t = 0; t < n_slots; ++t) {
            world.etas(static_cast<Eigen::Index>(s), t) = supersegment_eta(hops, world.edge_speeds, t);
        }
    }
    return world;
}

void save_world(const SynthWorld& world, const std::filesystem::path& dir) {
    using csv::format_double;
    save_graph(world.graph, GraphFiles::in_directory(dir));
    const int n_slots = world.n_slots();
    {
        auto out = csv::open_output(dir / "slots.csv");
        out << "t,week,slot\n";
        for (int t = 0; t < n_slots; ++t) {
            out << t << ',' << world.volumes.slots[t].week << ',' << world.volumes.slots[t].slot << '\n';
        }
    }
    {
        auto out = csv::open_output(dir / "volumes.csv");
        out << "counter_id,t,volume\n";
        for (Eigen::Index i = 0; i < world.volumes.n_counters(); ++i) {
            for (int t = 0; t < n_slots; ++t) {
                const double v = world.volumes.values(i, t);
                if (std::isnan(v)) continue;
                out << world.volumes.counter_ids[i] << ',' << t << ',' << format_double(v) << '\n';
            }
        }
    }
    {
        auto out = csv::open_output(dir / "labels_cc.csv");
        out << "edge_id,t,class\n";
        for (const auto& l : world.congestion_labels) out << l.edge << ',' << l.t << ',' << l.cls << '\n';
    }
    {
        auto out = csv::open_output(dir / "speeds.csv");
        out << "edge_id,t,speed\n";
        const auto& edges = world.graph.edges();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            for (int t = 0; t < n_slots; ++t) {
                const double v = world.edge_speeds(static_cast<Eigen::Index>(e), t);
                if (!std::isnan(v)) out << edges[e].id << ',' << t << ',' << format_double(v) << '\n';
            }
        }
    }
    {
        auto out = csv::open_output(dir / "eta.csv");
        out << "ss_id,t,eta\n";
        const auto& sss = world.graph.supersegments();
        for (std::size_t s = 0; s < sss.size(); ++s) {
            for (int t = 0; t < n_slots; ++t) {
                const double v = world.etas(static_cast<Eigen::Index>(s), t);
                if (!std::isnan(v)) out << sss[s].id << ',' << t << ',' << format_double(v) << '\n';
            }
        }
    }
}

SynthWorld load_world(const std::filesystem::path& dir) {
    SynthWorld world;
    world.graph = load_graph(GraphFiles::in_directory(dir));

    {
        csv::Reader r(dir / "slots.csv", {"t", "week", "slot"});
        while (r.next()) {
            const auto t = r.as_int(0);
            if (t != static_cast<std::int64_t>(world.volumes.slots.size())) {
                throw Error(ErrorKind::SchemaError, "slots.csv must list t = 0, 1, 2, ... in order");
            }
            world.volumes.slots.push_back({static_cast<int>(r.as_int(1)), static_cast<int>(r.as_int(2))});
        }
    }
    const auto n_slots = static_cast<Eigen::Index>(world.volumes.slots.size());
    auto check_slot = [&](std::int64_t t, const char* file) {
        if (t < 0 || t >= n_slots) {
            throw Error(ErrorKind::SlotOutOfRange,
                        std::string(file) + ": slot " + std::to_string(t) + " outside slots.csv");
        }
        return static_cast<Eigen::Index>(t);
    };

    const auto& counters = world.graph.counters();
    world.volumes.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(counters.size()), n_slots,
                                                     std::numeric_limits<double>::quiet_NaN());
    for (const auto& c : counters) world.volumes.counter_ids.push_back(c.id);
    {
        csv::Reader r(dir / "volumes.csv", {"counter_id", "t", "volume"});
        while (r.next()) {
            const auto row = static_cast<Eigen::Index>(world.graph.counter_index(r.as_int(0)));
            world.volumes.values(row, check_slot(r.as_int(1), "volumes.csv")) = r.as_double(2);
        }
    }

    std::map<Id, Eigen::Index> edge_row;
    for (std::size_t e = 0; e < world.graph.edges().size(); ++e) {
        edge_row[world.graph.edges()[e].id] = static_cast<Eigen::Index>(e);
    }
    auto edge_of = [&](Id id) {
        const auto it = edge_row.find(id);
        if (it == edge_row.end()) {
            throw Error(ErrorKind::DanglingReference, "unknown edge id " + std::to_string(id));
        }
        return it->second;
    };
    {
        csv::Reader r(dir / "labels_cc.csv", {"edge_id", "t", "class"});
        while (r.next()) {
            const Id e = r.as_int(0);
            edge_of(e);
            const auto t = check_slot(r.as_int(1), "labels_cc.csv");
            const auto cls = r.as_int(2);
            if (cls < 0 || cls >= kNumClasses) {
                throw Error(ErrorKind::SchemaError, "labels_cc.csv: class must be 0, 1 or 2");
            }
            world.congestion_labels.push_back({e, static_cast<int>(t), static_cast<int>(cls)});
        }
        std::sort(world.congestion_labels.begin(), world.congestion_labels.end(),
                  [](const LabelRecord& a, const LabelRecord& b) {
                      return std::pair(a.edge, a.t) < std::pair(b.edge, b.t);
                  });
    }
    world.edge_speeds = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(world.graph.edges().size()),
                                                  n_slots, std::numeric_limits<double>::quiet_NaN());
    {
        csv::Reader r(dir / "speeds.csv", {"edge_id", "t", "speed"});
        while (r.next()) {
            world.edge_speeds(edge_of(r.as_int(0)), check_slot(r.as_int(1), "speeds.csv")) = r.as_double(2);
        }
    }
    std::map<Id, Eigen::Index> ss_row;
    for (std::size_t s = 0; s < world.graph.supersegments().size(); ++s) {
        ss_row[world.graph.supersegments()[s].id] = static_cast<Eigen::Index>(s);
    }
    world.etas = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(ss_row.size()), n_slots,
                                           std::numeric_limits<double>::quiet_NaN());
    {
        csv::Reader r(dir / "eta.csv", {"ss_id", "t", "eta"});
        while (r.next()) {
            const auto it = ss_row.find(r.as_int(0));
            if (it == ss_row.end()) {
                throw Error(ErrorKind::DanglingReference,
                            "eta.csv: unknown supersegment " + std::to_string(r.as_int(0)));
            }
            world.etas(it->second, check_slot(r.as_int(1), "eta.csv")) = r.as_double(2);
        }
    }
    return world;
}

}  // namespace cb
