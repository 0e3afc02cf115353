#include "cityboost/encodings.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cityboost/error.hpp"
#include "cityboost/stats.hpp"
#include "cityboost/syncity.hpp"

namespace cb {

int TrafficRegime::classify(double citywide_volume) const {
    int bucket = 0;
    for (double t : thresholds) {
        if (citywide_volume > t) ++bucket;
    }
    return bucket;
}

std::vector<double> citywide_volume(const CounterMatrix& v, int window) {
    const auto sums = window_matrices(v, window).second;
    std::vector<double> out(static_cast<std::size_t>(v.n_slots()));
    for (Eigen::Index t = 0; t < v.n_slots(); ++t) out[t] = sums.col(t).sum();
    return out;
}

TrafficRegime fit_regime(std::span<const double> citywide, int n_clusters, int window) {
    if (n_clusters < 2 || n_clusters > 4) {
        throw Error(ErrorKind::InvalidConfig, "n_clusters must be 2, 3 or 4");
    }
    if (citywide.size() < 2) throw Error(ErrorKind::EmptyData, "regime fit needs at least 2 slots");
    std::vector<double> sorted(citywide.begin(), citywide.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
        throw Error(ErrorKind::DegenerateVolume, "citywide volume is constant over training slots");
    }
    TrafficRegime r;
    r.n_clusters = n_clusters;
    r.window = window;
    for (int j = 1; j < n_clusters; ++j) {
        r.thresholds.push_back(quantile_sorted(sorted, static_cast<double>(j) / n_clusters));
    }
    return r;
}

TrafficRegime fit_regime(const CounterMatrix& v, int n_clusters, int window) {
    return fit_regime(citywide_volume(v, window), n_clusters, window);
}

nlohmann::json to_json(const TrafficRegime& r) {
    return {{"n_clusters", r.n_clusters}, {"thresholds", r.thresholds}, {"window", r.window}};
}

TrafficRegime regime_from_json(const nlohmann::json& j) {
    TrafficRegime r;
    r.n_clusters = j.at("n_clusters").get<int>();
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    r.window = j.value("window", 4);
    if (static_cast<int>(r.thresholds.size()) != r.n_clusters - 1 ||
        !std::is_sorted(r.thresholds.begin(), r.thresholds.end())) {
        throw Error(ErrorKind::SchemaError, "regime thresholds must be n_clusters-1 sorted values");
    }
    return r;
}

ResolvedEncoding EncodingTable::lookup(Id entity, int regime_label) const {
    if (regime_label < 0 || regime_label >= regime.n_clusters) {
        throw Error(ErrorKind::UnknownRegime, "regime " + std::to_string(regime_label) +
                                                  " outside 0.." + std::to_string(regime.n_clusters - 1));
    }
    if (const auto it = entries.find({entity, regime_label});
        it != entries.end() && it->second.count >= min_count) {
        return {&it->second, ServedLevel::Entry};
    }
    if (const auto it = entity_fallback.find(entity);
        it != entity_fallback.end() && it->second.count >= min_count) {
        return {&it->second, ServedLevel::Entity};
    }
    return {&global, ServedLevel::Global};
}

std::vector<double> EncodingTable::logits(Id entity, int regime_label) const {
    if (kind != EncodingKind::ClassDistribution) {
        throw Error(ErrorKind::SchemaMismatch, "logits requested from a quantile encoding");
    }
    const auto& p = lookup(entity, regime_label).entry->values;
    std::vector<double> out(p.size());
    std::transform(p.begin(), p.end(), out.begin(), [](double v) { return std::log(v); });
    return out;
}

std::size_t EncodingTable::median_index() const {
    const auto it = std::find(quantile_levels.begin(), quantile_levels.end(), 0.5);
    if (it == quantile_levels.end()) {
        throw Error(ErrorKind::SchemaMismatch, "encoding has no median level");
    }
    return static_cast<std::size_t>(it - quantile_levels.begin());
}

namespace {

const char* kind_tag(EncodingKind k) {
    return k == EncodingKind::ClassDistribution ? "class" : "quantile";
}

nlohmann::json entry_json(const EncodingEntry& e) {
    return {{"count", e.count}, {"values", e.values}};
}

EncodingEntry entry_from(const nlohmann::json& j) {
    return {j.at("values").get<std::vector<double>>(), j.at("count").get<std::int64_t>()};
}

std::vector<double> smoothed(const std::array<std::int64_t, kNumClasses>& counts, double alpha) {
    std::int64_t n = 0;
    for (auto c : counts) n += c;
    std::vector<double> p(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
        p[c] = (static_cast<double>(counts[c]) + alpha) / (static_cast<double>(n) + kNumClasses * alpha);
    }
    return p;
}

}  // namespace

nlohmann::json to_json(const EncodingTable& t) {
    nlohmann::json j;
    j["kind"] = kind_tag(t.kind);
    j["min_count"] = t.min_count;
    if (t.kind == EncodingKind::ClassDistribution) {
        j["alpha"] = t.alpha;
    } else {
        j["quantiles"] = t.quantile_levels;
    }
    j["regime"] = to_json(t.regime);
    auto entries = nlohmann::json::array();
    for (const auto& [key, e] : t.entries) {
        auto row = entry_json(e);
        row["entity"] = key.first;
        row["regime"] = key.second;
        entries.push_back(std::move(row));
    }
    j["entries"] = std::move(entries);
    auto entity = nlohmann::json::array();
    for (const auto& [id, e] : t.entity_fallback) {
        auto row = entry_json(e);
        row["entity"] = id;
        entity.push_back(std::move(row));
    }
    j["fallback"] = {{"entity", std::move(entity)}, {"global", entry_json(t.global)}};
    return j;
}

EncodingTable encoding_from_json(const nlohmann::json& j) {
    try {
        EncodingTable t;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "class") {
            t.kind = EncodingKind::ClassDistribution;
            t.alpha = j.at("alpha").get<double>();
        } else if (kind == "quantile") {
            t.kind = EncodingKind::Quantiles;
            t.quantile_levels = j.at("quantiles").get<std::vector<double>>();
        } else {
            throw Error(ErrorKind::SchemaError, "unknown encoding kind '" + kind + "'");
        }
        t.min_count = j.at("min_count").get<std::int64_t>();
        t.regime = regime_from_json(j.at("regime"));
        for (const auto& row : j.at("entries")) {
            t.entries[{row.at("entity").get<Id>(), row.at("regime").get<int>()}] = entry_from(row);
        }
        for (const auto& row : j.at("fallback").at("entity")) {
            t.entity_fallback[row.at("entity").get<Id>()] = entry_from(row);
        }
        t.global = entry_from(j.at("fallback").at("global"));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("encoding table: ") + e.what());
    }
}

EncodingTable fit_class_encoding(std::span<const ClassObservation> labels, const TrafficRegime& regime,
                                 std::int64_t min_count, double alpha) {
    if (labels.empty()) throw Error(ErrorKind::EmptyLabels, "no class labels to encode");
    if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "alpha must be > 0");
    using Counts = std::array<std::int64_t, kNumClasses>;
    std::map<std::pair<Id, int>, Counts> by_key;
    std::map<Id, Counts> by_entity;
    Counts total{};
    for (const auto& l : labels) {
        if (l.cls < 0 || l.cls >= kNumClasses) {
            throw Error(ErrorKind::SchemaError, "class label outside 0..2");
        }
        if (l.regime < 0 || l.regime >= regime.n_clusters) {
            throw Error(ErrorKind::UnknownRegime, "label carries regime " + std::to_string(l.regime));
        }
        ++by_key[{l.entity, l.regime}][l.cls];
        ++by_entity[l.entity][l.cls];
        ++total[l.cls];
    }
    auto make = [&](const Counts& c) {
        return EncodingEntry{smoothed(c, alpha), c[0] + c[1] + c[2]};
    };
    EncodingTable t;
    t.kind = EncodingKind::ClassDistribution;
    t.regime = regime;
    t.min_count = min_count;
    t.alpha = alpha;
    for (const auto& [k, c] : by_key) t.entries[k] = make(c);
    for (const auto& [k, c] : by_entity) t.entity_fallback[k] = make(c);
    t.global = make(total);
    return t;
}

EncodingTable fit_eta_encoding(std::span<const ValueObservation> etas, const TrafficRegime& regime,
                               std::int64_t min_count, std::span<const double> levels) {
    if (etas.empty()) throw Error(ErrorKind::EmptyLabels, "no ETA labels to encode");
    for (double q : levels) {
        if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidConfig, "quantile levels must lie in (0, 1)");
    }
    if (std::find(levels.begin(), levels.end(), 0.5) == levels.end()) {
        throw Error(ErrorKind::InvalidConfig, "quantile levels must include 0.5");
    }
    std::map<std::pair<Id, int>, std::vector<double>> by_key;
    std::map<Id, std::vector<double>> by_entity;
    std::vector<double> all;
    all.reserve(etas.size());
    for (const auto& e : etas) {
        if (e.regime < 0 || e.regime >= regime.n_clusters) {
            throw Error(ErrorKind::UnknownRegime, "ETA carries regime " + std::to_string(e.regime));
        }
        by_key[{e.entity, e.regime}].push_back(e.value);
        by_entity[e.entity].push_back(e.value);
        all.push_back(e.value);
    }
    auto make = [&](const std::vector<double>& v) {
        return EncodingEntry{quantiles(v, levels), static_cast<std::int64_t>(v.size())};
    };
    EncodingTable t;
    t.kind = EncodingKind::Quantiles;
    t.regime = regime;
    t.min_count = min_count;
    t.quantile_levels.assign(levels.begin(), levels.end());
    for (const auto& [k, v] : by_key) t.entries[k] = make(v);
    for (const auto& [k, v] : by_entity) t.entity_fallback[k] = make(v);
    t.global = make(all);
    return t;
}

const EdgeSpeedStats& SpeedStats::lookup(Id edge) const {
    const auto it = edges.find(edge);
    return it == edges.end() ? citywide : it->second;
}

SpeedStats fit_speed_stats(std::span<const SpeedObservation> speeds, std::int64_t min_count) {
    if (speeds.empty()) throw Error(ErrorKind::EmptyLabels, "no speed observations");
    std::map<Id, std::vector<double>> by_edge;
    std::vector<double> all;
    all.reserve(speeds.size());
    for (const auto& s : speeds) {
        by_edge[s.edge].push_back(s.speed);
        all.push_back(s.speed);
    }
    const double levels[] = {0.5, kFreeflowQuantile};
    SpeedStats out;
    out.min_count = min_count;
    const auto city = quantiles(all, levels);
    out.citywide = {city[0], city[1], static_cast<std::int64_t>(all.size()), false};
    for (const auto& [edge, v] : by_edge) {
        const auto n = static_cast<std::int64_t>(v.size());
        if (n >= min_count) {
            const auto q = quantiles(v, levels);
            out.edges[edge] = {q[0], q[1], n, false};
        } else {
            out.edges[edge] = {city[0], city[1], n, true};
        }
    }
    return out;
}

nlohmann::json to_json(const SpeedStats& s) {
    auto edges = nlohmann::json::array();
    for (const auto& [id, e] : s.edges) {
        edges.push_back({{"edge", id}, {"median", e.median}, {"freeflow", e.freeflow},
                         {"n_obs", e.n_obs}, {"fallback", e.fallback}});
    }
    return {{"min_count", s.min_count},
            {"edges", std::move(edges)},
            {"citywide",
             {{"median", s.citywide.median}, {"freeflow", s.citywide.freeflow}, {"n_obs", s.citywide.n_obs}}}};
}

SpeedStats speed_stats_from_json(const nlohmann::json& j) {
    try {
        SpeedStats s;
        s.min_count = j.at("min_count").get<std::int64_t>();
        for (const auto& e : j.at("edges")) {
            s.edges[e.at("edge").get<Id>()] = {e.at("median").get<double>(), e.at("freeflow").get<double>(),
                                               e.at("n_obs").get<std::int64_t>(), e.at("fallback").get<bool>()};
        }
        const auto& c = j.at("citywide");
        s.citywide = {c.at("median").get<double>(), c.at("freeflow").get<double>(),
                      c.at("n_obs").get<std::int64_t>(), false};
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("speed stats: ") + e.what());
    }
}

Eigen::MatrixXd build_init_scores(Task task, const EncodingTable& table, std::span<const EncodedRow> rows,
                                  std::span<const double> class_weights) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (task == Task::Core) {
        if (table.kind != EncodingKind::ClassDistribution) {
            throw Error(ErrorKind::SchemaMismatch, "core init scores need a class encoding");
        }
        if (class_weights.size() != kNumClasses ||
            std::any_of(class_weights.begin(), class_weights.end(), [](double w) { return !(w > 0.0); })) {
            throw Error(ErrorKind::InvalidConfig, "core init scores need 3 positive class weights");
        }
        Eigen::MatrixXd h0(n, kNumClasses);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto l = table.logits(rows[i].entity, rows[i].regime);
            for (int c = 0; c < kNumClasses; ++c) h0(i, c) = l[c];
        }
        return h0;
    }
    if (table.kind != EncodingKind::Quantiles) {
        throw Error(ErrorKind::SchemaMismatch, "extended init scores need a quantile encoding");
    }
    const std::size_t mid = table.median_index();
    Eigen::MatrixXd h0(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        h0(i, 0) = table.lookup(rows[i].entity, rows[i].regime).entry->values[mid];
    }
    return h0;
}

}  // namespace cb
