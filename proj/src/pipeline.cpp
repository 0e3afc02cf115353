#include "cityboost/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"
#include "cityboost/metrics.hpp"
#include "cityboost/stats.hpp"

namespace cb {

SplitSpec interleaved_split(std::vector<int> weeks, std::size_t min_weeks) {
    std::sort(weeks.begin(), weeks.end());
    weeks.erase(std::unique(weeks.begin(), weeks.end()), weeks.end());
    if (weeks.size() < min_weeks || weeks.size() < 2) {
        throw Error(ErrorKind::TooFewWeeks, "interleaved split needs at least " + std::to_string(std::max<std::size_t>(min_weeks, 2)) +
                                                " weeks, got " + std::to_string(weeks.size()));
    }
    SplitSpec s;
    for (std::size_t i = 0; i < weeks.size(); ++i) {
        (i % 4 == 1 ? s.valid_weeks : s.train_weeks).push_back(weeks[i]);
    }
    return s;
}

const char* task_name(Task t) { return t == Task::Core ? "core" : "extended"; }

Task parse_task(const std::string& s) {
    if (s == "core") return Task::Core;
    if (s == "extended") return Task::Extended;
    throw Error(ErrorKind::Usage, "task must be core or extended, got '" + s + "'");
}

namespace {

bool contains(std::span<const int> v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::vector<int> slots_in_weeks(const SynthWorld& w, std::span<const int> weeks) {
    std::vector<int> out;
    for (int t = 0; t < w.n_slots(); ++t) {
        if (contains(weeks, w.week_of(t))) out.push_back(t);
    }
    return out;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, std::span<const int> cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
    return out;
}

std::string level_name(double q) {
    return "eta_q" + std::to_string(static_cast<int>(std::lround(q * 100.0)));
}

// Per-slot quantities shared by every row of a table.
struct SlotContext {
    Eigen::MatrixXd last, sum;        // k x T
    Eigen::MatrixXd pc_last, pc_sum;  // T x c
    std::array<Eigen::MatrixXd, 6> ctx;  // T x k: softmax, knn small, knn large; each last then sum
    std::vector<double> city_last, city_sum, city_last_median, city_sum_median;
    std::vector<int> regime;
};

SlotContext slot_context(const SynthWorld& w, const Artifacts& a, bool all_contexts) {
    SlotContext c;
    std::tie(c.last, c.sum) = window_matrices(w.volumes, a.regime.window);
    c.pc_last = project_pca_all(a.pca_last, c.last);
    c.pc_sum = project_pca_all(a.pca_sum, c.sum);
    c.ctx[0] = spatial_context(c.last, a.softmax_weights);
    c.ctx[1] = spatial_context(c.sum, a.softmax_weights);
    if (all_contexts) {
        c.ctx[2] = spatial_context(c.last, a.knn_small_weights);
        c.ctx[3] = spatial_context(c.sum, a.knn_small_weights);
        c.ctx[4] = spatial_context(c.last, a.knn_large_weights);
        c.ctx[5] = spatial_context(c.sum, a.knn_large_weights);
    }
    const auto n = static_cast<std::size_t>(w.n_slots());
    c.city_last.resize(n);
    c.city_sum.resize(n);
    c.city_last_median.resize(n);
    c.city_sum_median.resize(n);
    c.regime.resize(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const auto t = static_cast<std::size_t>(i);
        const Eigen::VectorXd l = c.last.col(i);
        const Eigen::VectorXd s = c.sum.col(i);
        c.city_last[t] = l.sum();
        c.city_sum[t] = s.sum();
        c.city_last_median[t] = median(std::span<const double>(l.data(), static_cast<std::size_t>(l.size())));
        c.city_sum_median[t] = median(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
        c.regime[t] = a.regime.classify(c.city_sum[t]);
    }
    return c;
}

void check_slot(const SynthWorld& w, int t) {
    if (t < 1 || t >= w.n_slots()) {
        throw Error(ErrorKind::SlotOutOfRange, "label slot " + std::to_string(t) + " has no preceding counter slot in [0, " +
                                                   std::to_string(w.n_slots() - 1) + ")");
    }
}

const EncodingEntry& entity_level(const EncodingTable& table, Id entity) {
    const auto it = table.entity_fallback.find(entity);
    if (it != table.entity_fallback.end() && it->second.count >= table.min_count) return it->second;
    return table.global;
}

}  // namespace

SplitSpec split_for_world(const SynthWorld& world, const PipelineConfig& config) {
    const auto weeks = world.weeks();
    if (weeks.size() >= config.min_split_weeks) return interleaved_split(weeks, config.min_split_weeks);
    return interleaved_split(weeks, 2);
}

Artifacts fit_artifacts(const SynthWorld& world, const SplitSpec& split, const PipelineConfig& config,
                        const FitObserver* observer) {
    if (split.train_weeks.empty()) throw Error(ErrorKind::TooFewWeeks, "no training weeks");
    Artifacts a;
    a.task = config.task;
    a.split = split;
    const auto train_slots = slots_in_weeks(world, split.train_weeks);
    if (train_slots.size() < 2) throw Error(ErrorKind::EmptyData, "training weeks hold fewer than 2 slots");

    const auto [last, sum] = window_matrices(world.volumes, config.window);
    a.pca_last = fit_pca(select_columns(last, train_slots), config.pcs_last);
    a.pca_sum = fit_pca(select_columns(sum, train_slots), config.pcs_sum);

    std::vector<double> city(train_slots.size());
    for (std::size_t i = 0; i < train_slots.size(); ++i) city[i] = sum.col(train_slots[i]).sum();
    a.regime = fit_regime(city, config.task == Task::Core ? config.core_regimes : config.extended_regimes,
                          config.window);

    a.softmax_weights = build_weight_matrix(world.graph, WeightMethod::SoftmaxInverseDistance);
    a.knn_small_weights = build_weight_matrix(world.graph, WeightMethod::KnnUniform, config.knn_small);
    a.knn_large_weights = build_weight_matrix(world.graph, WeightMethod::KnnUniform, config.knn_large);

    auto regime_at = [&](int t) { return a.regime.classify(sum.col(t).sum()); };
    auto note = [&](int t) {
        if (observer && observer->label_slot_used) observer->label_slot_used(t);
    };

    if (config.task == Task::Core) {
        std::vector<ClassObservation> labels;
        for (const auto& r : world.congestion_labels) {
            if (r.t < 1 || !contains(split.train_weeks, world.week_of(r.t))) continue;
            note(r.t);
            labels.push_back({r.edge, regime_at(r.t - 1), r.cls});
        }
        a.class_encoding = fit_class_encoding(labels, a.regime, config.core_min_count, config.alpha);

        std::vector<SpeedObservation> speeds;
        const auto& edges = world.graph.edges();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            for (int t : train_slots) {
                const double s = world.edge_speeds(static_cast<Eigen::Index>(e), t);
                if (std::isnan(s)) continue;
                note(t);
                speeds.push_back({edges[e].id, s});
            }
        }
        a.speed_stats = fit_speed_stats(speeds, config.speed_min_count);
    } else {
        std::vector<ValueObservation> etas;
        const auto& sss = world.graph.supersegments();
        for (std::size_t s = 0; s < sss.size(); ++s) {
            for (int t : train_slots) {
                if (t < 1) continue;
                const double eta = world.etas(static_cast<Eigen::Index>(s), t);
                if (!std::isfinite(eta)) continue;
                note(t);
                etas.push_back({sss[s].id, regime_at(t - 1), eta});
            }
        }
        a.eta_encoding = fit_eta_encoding(etas, a.regime, config.extended_min_count, config.eta_levels);
    }
    return a;
}

nlohmann::json to_json(const Artifacts& a) {
    nlohmann::json j{{"task", task_name(a.task)},
                     {"split", {{"train_weeks", a.split.train_weeks}, {"valid_weeks", a.split.valid_weeks}}},
                     {"pca_last", to_json(a.pca_last)},
                     {"pca_sum", to_json(a.pca_sum)},
                     {"regime", to_json(a.regime)},
                     {"weights",
                      {{"softmax", weight_method_name(a.softmax_weights.method)},
                       {"knn_small", a.knn_small_weights.knn_k},
                       {"knn_large", a.knn_large_weights.knn_k}}}};
    if (a.class_encoding) j["class_encoding"] = to_json(*a.class_encoding);
    if (a.speed_stats) j["speed_stats"] = to_json(*a.speed_stats);
    if (a.eta_encoding) j["eta_encoding"] = to_json(*a.eta_encoding);
    return j;
}

// ---------------------------------------------------------------------------

std::vector<std::string> pca_columns(const Artifacts& a) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < a.pca_last.n_components(); ++i) names.push_back("pc_last_" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < a.pca_sum.n_components(); ++i) names.push_back("pc_sum_" + std::to_string(i + 1));
    return names;
}

std::vector<std::string> encoding_columns(const Artifacts& a) {
    if (a.task == Task::Core) {
        return {"enc_p_green",  "enc_p_yellow",  "enc_p_red",     "enc_all_p_green", "enc_all_p_yellow",
                "enc_all_p_red", "enc_log_count", "enc_level",     "speed_median",    "speed_freeflow"};
    }
    std::vector<std::string> names;
    if (a.eta_encoding) {
        for (double q : a.eta_encoding->quantile_levels) names.push_back(level_name(q));
    }
    names.push_back("eta_all_median");
    return names;
}

std::vector<std::string> schema_for(const Artifacts& a) {
    std::vector<std::string> names;
    auto add = [&](std::initializer_list<const char*> list) {
        for (const char* n : list) names.emplace_back(n);
    };
    const auto pcs = pca_columns(a);
    const auto enc = encoding_columns(a);
    if (a.task == Task::Core) {
        add({"nc_last", "nc_sum", "nc_distance", "nc_delta", "ctx_softmax_last", "ctx_softmax_sum",
             "ctx_knn_small_last", "ctx_knn_small_sum", "ctx_knn_large_last", "ctx_knn_large_sum"});
        names.insert(names.end(), pcs.begin(), pcs.end());
        add({"edge_start_x", "edge_start_y", "edge_end_x", "edge_end_y", "edge_length", "road_class", "regime",
             "city_last_total", "city_sum_total", "city_last_median", "city_sum_median"});
        names.insert(names.end(), enc.begin(), enc.end());
    } else {
        add({"ss_medoid_x", "ss_medoid_y", "ss_start_x", "ss_start_y", "ss_end_x", "ss_end_y", "ss_length"});
        names.insert(names.end(), pcs.begin(), pcs.end());
        add({"nc_last", "nc_sum", "regime"});
        names.insert(names.end(), enc.begin(), enc.end());
        add({"city_last_total", "city_sum_total", "ctx_softmax_last", "ctx_softmax_sum"});
    }
    return names;
}

FeatureTable assemble_core(const SynthWorld& world, const Artifacts& a, std::span<const int> weeks) {
    if (a.task != Task::Core || !a.class_encoding || !a.speed_stats) {
        throw Error(ErrorKind::MissingArtifact, "core assembly needs class encoding and speed statistics");
    }
    const auto& graph = world.graph;
    const auto& enc = *a.class_encoding;

    std::vector<const LabelRecord*> records;
    for (const auto& r : world.congestion_labels) {
        if (r.t == 0) continue;
        check_slot(world, r.t);
        if (contains(weeks, world.week_of(r.t))) records.push_back(&r);
    }

    // Per-edge static features.
    struct EdgeInfo {
        std::size_t counter = 0;
        double distance = 0.0;
        Point start, end;
        double length = 0.0;
        int road_class = 0;
    };
    std::map<Id, EdgeInfo> edge_info;
    for (const auto* r : records) {
        if (edge_info.contains(r->edge)) continue;
        const Edge& e = graph.edge(r->edge);
        EdgeInfo info;
        const Point rep = edge_representative_point(e, graph);
        const Id c = nearest_counter(rep, graph);
        info.counter = graph.counter_index(c);
        info.distance = distance(rep, graph.counter(c).position);
        info.start = graph.node(e.start_node).position;
        info.end = graph.node(e.end_node).position;
        info.length = distance(info.start, info.end);
        info.road_class = e.road_class;
        edge_info.emplace(r->edge, info);
    }

    const SlotContext ctx = slot_context(world, a, true);
    FeatureTable table;
    table.names = schema_for(a);
    const std::size_t n = records.size();
    table.columns.assign(table.names.size(), std::vector<double>(n));
    table.keys.resize(n);
    table.labels.resize(n);
    const auto n_last = static_cast<std::size_t>(a.pca_last.n_components());
    const auto n_sum = static_cast<std::size_t>(a.pca_sum.n_components());

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const auto row = static_cast<std::size_t>(i);
        const LabelRecord& r = *records[row];
        const int t = r.t - 1;
        const auto ts = static_cast<std::size_t>(t);
        const EdgeInfo& info = edge_info.at(r.edge);
        const auto ci = static_cast<Eigen::Index>(info.counter);
        std::size_t col = 0;
        auto put = [&](double v) { table.columns[col++][row] = v; };

        put(ctx.last(ci, t));
        put(ctx.sum(ci, t));
        put(info.distance);
        put(t > 0 ? ctx.last(ci, t) - ctx.last(ci, t - 1) : 0.0);
        for (const auto& m : ctx.ctx) put(m(t, ci));
        for (std::size_t p = 0; p < n_last; ++p) put(ctx.pc_last(t, static_cast<Eigen::Index>(p)));
        for (std::size_t p = 0; p < n_sum; ++p) put(ctx.pc_sum(t, static_cast<Eigen::Index>(p)));
        put(info.start.x);
        put(info.start.y);
        put(info.end.x);
        put(info.end.y);
        put(info.length);
        put(info.road_class);
        const int regime = ctx.regime[ts];
        put(regime);
        put(ctx.city_last[ts]);
        put(ctx.city_sum[ts]);
        put(ctx.city_last_median[ts]);
        put(ctx.city_sum_median[ts]);
        const ResolvedEncoding served = enc.lookup(r.edge, regime);
        for (double p : served.entry->values) put(p);
        for (double p : entity_level(enc, r.edge).values) put(p);
        put(std::log1p(static_cast<double>(served.entry->count)));
        put(static_cast<double>(static_cast<int>(served.level)));
        const EdgeSpeedStats& sp = a.speed_stats->lookup(r.edge);
        put(sp.median);
        put(sp.freeflow);

        table.keys[row] = {r.edge, world.week_of(r.t), world.volumes.slots[static_cast<std::size_t>(r.t)].slot, r.t};
        table.labels[row] = r.cls;
    }
    table.validate();
    return table;
}

FeatureTable assemble_extended(const SynthWorld& world, const Artifacts& a, std::span<const int> weeks) {
    if (a.task != Task::Extended || !a.eta_encoding) {
        throw Error(ErrorKind::MissingArtifact, "extended assembly needs the ETA encoding");
    }
    const auto& graph = world.graph;
    const auto& sss = graph.supersegments();
    const auto& enc = *a.eta_encoding;
    if (world.etas.rows() != static_cast<Eigen::Index>(sss.size()) || world.etas.cols() != world.n_slots()) {
        throw Error(ErrorKind::SlotOutOfRange, "ETA grid does not match the supersegment x slot layout");
    }

    struct SsInfo {
        SupersegmentGeometry geo;
        std::size_t counter = 0;
    };
    std::vector<SsInfo> info(sss.size());
    for (std::size_t s = 0; s < sss.size(); ++s) {
        info[s].geo = supersegment_geometry(sss[s], graph);
        info[s].counter = graph.counter_index(nearest_counter(info[s].geo.medoid, graph));
    }

    struct Item {
        std::size_t ss;
        int t;
    };
    std::vector<Item> items;
    for (std::size_t s = 0; s < sss.size(); ++s) {
        for (int t = 1; t < world.n_slots(); ++t) {
            if (!contains(weeks, world.week_of(t))) continue;
            if (!std::isfinite(world.etas(static_cast<Eigen::Index>(s), t))) continue;
            items.push_back({s, t});
        }
    }

    const SlotContext ctx = slot_context(world, a, false);
    FeatureTable table;
    table.names = schema_for(a);
    const std::size_t n = items.size();
    table.columns.assign(table.names.size(), std::vector<double>(n));
    table.keys.resize(n);
    table.labels.resize(n);
    const auto n_last = static_cast<std::size_t>(a.pca_last.n_components());
    const auto n_sum = static_cast<std::size_t>(a.pca_sum.n_components());
    const std::size_t mid = enc.median_index();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const auto row = static_cast<std::size_t>(i);
        const Item& item = items[row];
        const int t = item.t - 1;
        const auto ts = static_cast<std::size_t>(t);
        const SsInfo& si = info[item.ss];
        const auto ci = static_cast<Eigen::Index>(si.counter);
        const Id id = sss[item.ss].id;
        std::size_t col = 0;
        auto put = [&](double v) { table.columns[col++][row] = v; };

        put(si.geo.medoid.x);
        put(si.geo.medoid.y);
        put(si.geo.start.x);
        put(si.geo.start.y);
        put(si.geo.end.x);
        put(si.geo.end.y);
        put(si.geo.length);
        for (std::size_t p = 0; p < n_last; ++p) put(ctx.pc_last(t, static_cast<Eigen::Index>(p)));
        for (std::size_t p = 0; p < n_sum; ++p) put(ctx.pc_sum(t, static_cast<Eigen::Index>(p)));
        put(ctx.last(ci, t));
        put(ctx.sum(ci, t));
        const int regime = ctx.regime[ts];
        put(regime);
        for (double q : enc.lookup(id, regime).entry->values) put(q);
        put(entity_level(enc, id).values[mid]);
        put(ctx.city_last[ts]);
        put(ctx.city_sum[ts]);
        put(ctx.ctx[0](t, ci));
        put(ctx.ctx[1](t, ci));

        table.keys[row] = {id, world.week_of(item.t), world.volumes.slots[static_cast<std::size_t>(item.t)].slot, item.t};
        table.labels[row] = world.etas(static_cast<Eigen::Index>(item.ss), item.t);
    }
    table.validate();
    return table;
}

FeatureTable assemble(const SynthWorld& world, const Artifacts& artifacts, std::span<const int> weeks) {
    return artifacts.task == Task::Core ? assemble_core(world, artifacts, weeks)
                                        : assemble_extended(world, artifacts, weeks);
}

Eigen::MatrixXd init_scores(const SynthWorld& world, const Artifacts& a, const FeatureTable& table,
                            std::span<const double> class_weights) {
    const auto city = citywide_volume(world.volumes, a.regime.window);
    std::vector<EncodedRow> rows;
    rows.reserve(table.n_rows());
    for (const auto& k : table.keys) {
        if (k.t < 1 || k.t >= world.n_slots()) throw Error(ErrorKind::SlotOutOfRange, "row slot out of range");
        rows.push_back({k.entity, a.regime.classify(city[static_cast<std::size_t>(k.t - 1)])});
    }
    if (a.task == Task::Core) {
        if (!a.class_encoding) throw Error(ErrorKind::MissingArtifact, "core init needs the class encoding");
        return build_init_scores(Task::Core, *a.class_encoding, rows, class_weights);
    }
    if (!a.eta_encoding) throw Error(ErrorKind::MissingArtifact, "extended init needs the ETA encoding");
    return build_init_scores(Task::Extended, *a.eta_encoding, rows);
}

FeatureTable apply_toggles(const FeatureTable& table, const Artifacts& a, const FeatureToggles& toggles) {
    std::vector<std::string> drop;
    if (!toggles.pca) {
        const auto p = pca_columns(a);
        drop.insert(drop.end(), p.begin(), p.end());
    }
    if (!toggles.target_encoding) {
        const auto e = encoding_columns(a);
        drop.insert(drop.end(), e.begin(), e.end());
    }
    return drop.empty() ? table : table.without_columns(drop);
}

PreparedData prepare(const SynthWorld& world, const PipelineConfig& config, std::span<const double> class_weights) {
    PreparedData d;
    d.artifacts = fit_artifacts(world, split_for_world(world, config), config);
    d.train = assemble(world, d.artifacts, d.artifacts.split.train_weeks);
    d.valid = assemble(world, d.artifacts, d.artifacts.split.valid_weeks);
    d.init_train = init_scores(world, d.artifacts, d.train, class_weights);
    d.init_valid = init_scores(world, d.artifacts, d.valid, class_weights);
    return d;
}

// ---------------------------------------------------------------------------
// Tuning

namespace {

int as_int_param(const std::string& name, double v) {
    if (v != std::floor(v) || !std::isfinite(v)) {
        throw Error(ErrorKind::InvalidConfig, name + " must be an integer");
    }
    return static_cast<int>(v);
}

}  // namespace

void set_param(gbdt::TrainParams& p, const std::string& name, double v) {
    if (name == "num_leaves") p.num_leaves = as_int_param(name, v);
    else if (name == "num_iters") p.num_iters = as_int_param(name, v);
    else if (name == "learning_rate") p.learning_rate = v;
    else if (name == "min_data_in_leaf") p.min_data_in_leaf = as_int_param(name, v);
    else if (name == "lambda_l2") p.lambda_l2 = v;
    else if (name == "early_stopping_rounds") p.early_stopping_rounds = as_int_param(name, v);
    else if (name == "max_bins") p.max_bins = as_int_param(name, v);
    else if (name == "seed") {
        if (v < 0 || v != std::floor(v)) throw Error(ErrorKind::InvalidConfig, "seed must be a non-negative integer");
        p.seed = static_cast<std::uint64_t>(v);
    } else if (name == "min_sum_hessian") p.min_sum_hessian = v;
    else if (name == "min_gain_to_split") p.min_gain_to_split = v;
    else if (name == "feature_fraction") p.feature_fraction = v;
    else if (name == "bagging_fraction") p.bagging_fraction = v;
    else throw Error(ErrorKind::InvalidConfig, "unknown training parameter '" + name + "'");
}

double get_param(const gbdt::TrainParams& p, const std::string& name) {
    if (name == "num_leaves") return p.num_leaves;
    if (name == "num_iters") return p.num_iters;
    if (name == "learning_rate") return p.learning_rate;
    if (name == "min_data_in_leaf") return p.min_data_in_leaf;
    if (name == "lambda_l2") return p.lambda_l2;
    if (name == "early_stopping_rounds") return p.early_stopping_rounds;
    if (name == "max_bins") return p.max_bins;
    if (name == "seed") return static_cast<double>(p.seed);
    if (name == "min_sum_hessian") return p.min_sum_hessian;
    if (name == "min_gain_to_split") return p.min_gain_to_split;
    if (name == "feature_fraction") return p.feature_fraction;
    if (name == "bagging_fraction") return p.bagging_fraction;
    throw Error(ErrorKind::InvalidConfig, "unknown training parameter '" + name + "'");
}

TuneResult stepwise_tune(const gbdt::TrainParams& base, std::span<const TuneCandidate> space,
                         const std::function<double(const gbdt::TrainParams&)>& evaluate) {
    TuneResult result;
    result.params = base;
    result.metric = std::numeric_limits<double>::quiet_NaN();
    for (const auto& cand : space) {
        if (cand.values.empty()) {
            throw Error(ErrorKind::InvalidConfig, "parameter '" + cand.param + "' has no candidates");
        }
        double best = std::numeric_limits<double>::infinity();
        double best_value = cand.values.front();
        for (double v : cand.values) {
            gbdt::TrainParams p = result.params;
            set_param(p, cand.param, v);
            const double m = evaluate(p);
            result.trace.push_back({cand.param, v, m});
            if (m < best) {
                best = m;
                best_value = v;
            }
        }
        set_param(result.params, cand.param, best_value);
        result.metric = best;
    }
    return result;
}

std::vector<TuneCandidate> default_tune_space(const gbdt::TrainParams& base) {
    return {{"num_leaves", {static_cast<double>(base.num_leaves), static_cast<double>(2 * base.num_leaves)}},
            {"min_data_in_leaf", {static_cast<double>(base.min_data_in_leaf), 50.0}},
            {"lambda_l2", {base.lambda_l2, 10.0}}};
}

// ---------------------------------------------------------------------------
// Ablation

AblationArm parse_arm(const std::string& spec) {
    AblationArm arm;
    arm.toggles = {false, false, false};
    if (spec != "none") {
        for (auto part : csv::split(spec, '+')) {
            if (part == "pca") arm.toggles.pca = true;
            else if (part == "init_score") arm.toggles.init_score = true;
            else if (part == "target_encoding") arm.toggles.target_encoding = true;
            else if (part == "tuned") arm.tuned = true;
            else throw Error(ErrorKind::Usage, "unknown ablation component '" + std::string(part) + "'");
        }
    }
    arm.name = arm_name(arm.toggles, arm.tuned);
    return arm;
}

std::string arm_name(const FeatureToggles& t, bool tuned) {
    std::vector<std::string> parts;
    if (t.pca) parts.emplace_back("pca");
    if (t.init_score) parts.emplace_back("init_score");
    if (t.target_encoding) parts.emplace_back("target_encoding");
    if (tuned) parts.emplace_back("tuned");
    if (parts.empty()) return "none";
    std::string s = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) s += "+" + parts[i];
    return s;
}

std::vector<AblationArm> ladder_arms(Task task) {
    const std::vector<std::string> specs =
        task == Task::Core ? std::vector<std::string>{"pca", "pca+init_score", "pca+init_score+target_encoding",
                                                      "pca+init_score+target_encoding+tuned"}
                           : std::vector<std::string>{"init_score", "pca+init_score", "pca+init_score+target_encoding",
                                                      "pca+init_score+target_encoding+tuned"};
    std::vector<AblationArm> arms;
    for (const auto& s : specs) arms.push_back(parse_arm(s));
    return arms;
}

gbdt::ObjectiveConfig objective_for(Task task, const std::array<double, 3>& class_weights) {
    gbdt::ObjectiveConfig o;
    o.kind = task == Task::Core ? gbdt::ObjectiveKind::WeightedSoftmaxCE : gbdt::ObjectiveKind::MAE;
    o.class_weights = class_weights;
    return o;
}

gbdt::TrainResult train_arm(const PreparedData& data, const FeatureToggles& toggles,
                            const gbdt::ObjectiveConfig& objective, const gbdt::TrainParams& params) {
    const FeatureTable train = apply_toggles(data.train, data.artifacts, toggles);
    const FeatureTable valid = apply_toggles(data.valid, data.artifacts, toggles);
    const Eigen::MatrixXd empty;
    return gbdt::train(train, valid, toggles.init_score ? data.init_train : empty,
                       toggles.init_score ? data.init_valid : empty, objective, params);
}

namespace {

double final_valid_metric(const gbdt::TrainResult& r) {
    return r.log[static_cast<std::size_t>(r.best_iteration)].valid_metric;
}

}  // namespace

AblationReport ablate(const PreparedData& data, std::span<const AblationArm> arms,
                      const gbdt::ObjectiveConfig& objective, const gbdt::TrainParams& params) {
    AblationReport report;
    report.task = data.artifacts.task;
    report.class_weights = objective.class_weights;
    for (const auto& arm : arms) {
        gbdt::TrainParams p = params;
        if (arm.tuned) {
            const auto space = default_tune_space(params);
            p = stepwise_tune(params, space, [&](const gbdt::TrainParams& candidate) {
                    return final_valid_metric(train_arm(data, arm.toggles, objective, candidate));
                }).params;
        }
        const auto result = train_arm(data, arm.toggles, objective, p);
        AblationRow row;
        row.arm = arm.name;
        row.n_features = result.model.feature_names.size();
        row.best_iteration = result.best_iteration;
        row.valid_metric_iter0 = result.log.front().valid_metric;
        row.valid_metric = final_valid_metric(result);
        report.rows.push_back(row);
    }
    return report;
}

namespace {

std::string fixed6(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string weights_header(const std::array<double, 3>& w) {
    return "# class_weights green=" + csv::format_double(w[0]) + " yellow=" + csv::format_double(w[1]) +
           " red=" + csv::format_double(w[2]);
}

}  // namespace

void write_ablation(const AblationReport& report, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    if (report.task == Task::Core) out << weights_header(report.class_weights) << '\n';
    out << "arm,n_features,best_iteration,valid_metric_iter0,valid_metric\n";
    for (const auto& r : report.rows) {
        out << r.arm << ',' << r.n_features << ',' << r.best_iteration << ',' << fixed6(r.valid_metric_iter0) << ','
            << fixed6(r.valid_metric) << '\n';
    }
}

void write_tune_trace(const TuneResult& result, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    out << "run,param,value,valid_metric\n";
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const auto& t = result.trace[i];
        out << i + 1 << ',' << t.param << ',' << csv::format_double(t.value) << ',' << fixed6(t.metric) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Run config

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open config " + path.string());
    KeyValues kv;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const std::string s = trim(line.substr(0, line.find('#')));
        if (s.empty()) continue;
        const auto eq = s.find('=');
        const std::string where = path.string() + ":" + std::to_string(no) + ": ";
        if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, where + "expected key=value");
        const std::string key = trim(std::string_view(s).substr(0, eq));
        if (key.empty()) throw Error(ErrorKind::InvalidConfig, where + "empty key");
        if (!kv.emplace(key, trim(std::string_view(s).substr(eq + 1))).second) {
            throw Error(ErrorKind::InvalidConfig, where + "duplicate key '" + key + "'");
        }
    }
    return kv;
}

void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

void apply_params(gbdt::TrainParams& p, const KeyValues& kv) {
    static const std::set<std::string> known = {
        "num_leaves", "num_iters",       "learning_rate",     "min_data_in_leaf", "lambda_l2",
        "early_stopping_rounds", "max_bins", "min_sum_hessian", "min_gain_to_split", "feature_fraction",
        "bagging_fraction",      "seed"};
    for (const auto& [k, v] : kv) {
        if (!known.contains(k)) continue;
        double x = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
            throw Error(ErrorKind::InvalidConfig, "parameter " + k + " has non-numeric value '" + v + "'");
        }
        set_param(p, k, x);
    }
}

KeyValues params_to_key_values(const gbdt::TrainParams& p) {
    KeyValues kv;
    for (const char* name : {"num_leaves", "num_iters", "learning_rate", "min_data_in_leaf", "lambda_l2",
                             "early_stopping_rounds", "max_bins", "min_sum_hessian", "min_gain_to_split",
                             "feature_fraction", "bagging_fraction"}) {
        kv[name] = csv::format_double(get_param(p, name));
    }
    kv["seed"] = std::to_string(p.seed);
    return kv;
}

std::array<double, 3> parse_class_weights(const std::string& s) {
    const auto parts = csv::split(s, ',');
    if (parts.size() != 3) throw Error(ErrorKind::InvalidConfig, "class weights must be three numbers g,y,r");
    std::array<double, 3> w{};
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string p = trim(parts[i]);
        const auto res = std::from_chars(p.data(), p.data() + p.size(), w[i]);
        if (res.ec != std::errc() || res.ptr != p.data() + p.size()) {
            throw Error(ErrorKind::InvalidConfig, "class weight '" + p + "' is not a number");
        }
    }
    return w;
}

// ---------------------------------------------------------------------------

void write_predictions(const FeatureTable& table, const Eigen::MatrixXd& preds, const std::filesystem::path& path) {
    if (static_cast<std::size_t>(preds.rows()) != table.n_rows()) {
        throw Error(ErrorKind::DimensionMismatch, "prediction rows differ from table rows");
    }
    auto out = csv::open_output(path);
    out << "entity_id,t";
    for (Eigen::Index c = 0; c < preds.cols(); ++c) out << ",pred_" << c;
    out << '\n';
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        out << table.keys[r].entity << ',' << table.keys[r].t;
        for (Eigen::Index c = 0; c < preds.cols(); ++c) {
            out << ',' << csv::format_double(preds(static_cast<Eigen::Index>(r), c));
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_predictions(const std::filesystem::path& path, std::vector<RowKey>* keys) {
    csv::Reader r(path);
    const auto& h = r.header();
    if (h.size() < 3 || h[0] != "entity_id" || h[1] != "t") {
        throw Error(ErrorKind::SchemaError, path.string() + ": header must be entity_id,t,pred_0[,...]");
    }
    const std::size_t k = h.size() - 2;
    std::vector<double> flat;
    std::size_t n = 0;
    while (r.next()) {
        if (keys) keys->push_back({r.as_int(0), 0, 0, static_cast<int>(r.as_int(1))});
        for (std::size_t c = 0; c < k; ++c) flat.push_back(r.as_double(2 + c));
        ++n;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = flat[i * k + c];
    }
    return m;
}

bool is_peak_slot(int slot_of_week) {
    const int day = slot_of_week / kSlotsPerDay;
    const double hour = static_cast<double>(slot_of_week % kSlotsPerDay) / 4.0;
    return day < 5 && ((hour >= 6.0 && hour < 10.0) || (hour >= 15.0 && hour < 20.0));
}

std::vector<ScatterPoint> pca_scatter(const SynthWorld& world, const PipelineConfig& config) {
    const SplitSpec split = split_for_world(world, config);
    const auto train_slots = slots_in_weeks(world, split.train_weeks);
    const auto last = window_matrices(world.volumes, config.window).first;
    const PCAModel pca = fit_pca(select_columns(last, train_slots), 2);
    const Eigen::MatrixXd scores = project_pca_all(pca, last);
    std::vector<ScatterPoint> points(static_cast<std::size_t>(world.n_slots()));
    for (int t = 0; t < world.n_slots(); ++t) {
        const int slot = world.volumes.slots[static_cast<std::size_t>(t)].slot;
        points[static_cast<std::size_t>(t)] = {t, scores(t, 0), scores(t, 1), slot / kSlotsPerDay >= 5,
                                               is_peak_slot(slot)};
    }
    return points;
}

void write_scatter(std::span<const ScatterPoint> points, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    out << "t,pc1,pc2,weekpart,daypart\n";
    for (const auto& p : points) {
        out << p.t << ',' << csv::format_double(p.pc1) << ',' << csv::format_double(p.pc2) << ','
            << (p.weekend ? "weekend" : "weekday") << ',' << (p.peak ? "peak" : "offpeak") << '\n';
    }
}

double silhouette(std::span<const ScatterPoint> points) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    std::vector<double> s(points.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        double same = 0.0;
        double other = 0.0;
        std::size_t n_same = 0;
        std::size_t n_other = 0;
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto& q = points[static_cast<std::size_t>(j)];
            const double d = std::hypot(p.pc1 - q.pc1, p.pc2 - q.pc2);
            if (q.peak == p.peak) {
                same += d;
                ++n_same;
            } else {
                other += d;
                ++n_other;
            }
        }
        if (n_same == 0 || n_other == 0) continue;
        const double a = same / static_cast<double>(n_same);
        const double b = other / static_cast<double>(n_other);
        const double m = std::max(a, b);
        s[static_cast<std::size_t>(i)] = m > 0.0 ? (b - a) / m : 0.0;
    }
    double total = 0.0;
    for (double v : s) total += v;
    return points.empty() ? 0.0 : total / static_cast<double>(points.size());
}

}  // namespace cb
