#include "cityboost/feature_table.hpp"

#include <algorithm>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"

namespace cb {

std::optional<std::size_t> FeatureTable::column_index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
}

const std::vector<double>& FeatureTable::column(const std::string& name) const {
    const auto idx = column_index(name);
    if (!idx) throw Error(ErrorKind::SchemaMismatch, "no column named '" + name + "'");
    return columns[*idx];
}

FeatureTable FeatureTable::without_columns(std::span<const std::string> drop) const {
    FeatureTable out;
    out.keys = keys;
    out.labels = labels;
    for (std::size_t f = 0; f < names.size(); ++f) {
        if (std::find(drop.begin(), drop.end(), names[f]) != drop.end()) continue;
        out.names.push_back(names[f]);
        out.columns.push_back(columns[f]);
    }
    return out;
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
    FeatureTable out;
    out.names = names;
    out.columns.resize(columns.size());
    for (std::size_t f = 0; f < columns.size(); ++f) {
        out.columns[f].reserve(rows.size());
        for (auto r : rows) out.columns[f].push_back(columns[f][r]);
    }
    for (auto r : rows) {
        out.keys.push_back(keys[r]);
        if (has_labels()) out.labels.push_back(labels[r]);
    }
    return out;
}

void FeatureTable::validate() const {
    if (columns.size() != names.size()) {
        throw Error(ErrorKind::SchemaError, "feature table has mismatched names/columns");
    }
    for (const auto& c : columns) {
        if (c.size() != keys.size()) throw Error(ErrorKind::SchemaError, "ragged feature column");
    }
    if (!labels.empty() && labels.size() != keys.size()) {
        throw Error(ErrorKind::SchemaError, "label column length differs from row count");
    }
}

void require_same_schema(const FeatureTable& expected, const FeatureTable& actual, const char* what) {
    if (expected.names != actual.names) {
        throw Error(ErrorKind::SchemaMismatch,
                    std::string(what) + ": feature columns differ (" +
                        std::to_string(expected.names.size()) + " expected, " +
                        std::to_string(actual.names.size()) + " given)");
    }
}

void write_table(const FeatureTable& table, const std::filesystem::path& path) {
    table.validate();
    auto out = csv::open_output(path);
    out << "entity_id,week,slot,t";
    for (const auto& n : table.names) out << ',' << n;
    if (table.has_labels()) out << ",label";
    out << '\n';
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        const auto& k = table.keys[r];
        out << k.entity << ',' << k.week << ',' << k.slot << ',' << k.t;
        for (const auto& c : table.columns) out << ',' << csv::format_double(c[r]);
        if (table.has_labels()) out << ',' << csv::format_double(table.labels[r]);
        out << '\n';
    }
}

FeatureTable read_table(const std::filesystem::path& path) {
    csv::Reader r(path);
    const auto& header = r.header();
    const std::vector<std::string> key_cols = {"entity_id", "week", "slot", "t"};
    if (header.size() < key_cols.size() || !std::equal(key_cols.begin(), key_cols.end(), header.begin())) {
        throw Error(ErrorKind::SchemaError, path.string() + ": header must start with entity_id,week,slot,t");
    }
    FeatureTable table;
    const bool labeled = header.back() == "label";
    const std::size_t n_feat = header.size() - key_cols.size() - (labeled ? 1 : 0);
    table.names.assign(header.begin() + 4, header.begin() + 4 + static_cast<std::ptrdiff_t>(n_feat));
    table.columns.resize(n_feat);
    while (r.next()) {
        table.keys.push_back({r.as_int(0), static_cast<int>(r.as_int(1)), static_cast<int>(r.as_int(2)),
                              static_cast<int>(r.as_int(3))});
        for (std::size_t f = 0; f < n_feat; ++f) table.columns[f].push_back(r.as_double(4 + f));
        if (labeled) table.labels.push_back(r.as_double(4 + n_feat));
    }
    return table;
}

void write_init(const FeatureTable& table, const Eigen::MatrixXd& init, const std::filesystem::path& path) {
    if (static_cast<std::size_t>(init.rows()) != table.n_rows()) {
        throw Error(ErrorKind::DimensionMismatch, "init score rows differ from table rows");
    }
    auto out = csv::open_output(path);
    out << "entity_id,t";
    for (Eigen::Index c = 0; c < init.cols(); ++c) out << ",init_" << c;
    out << '\n';
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        out << table.keys[r].entity << ',' << table.keys[r].t;
        for (Eigen::Index c = 0; c < init.cols(); ++c) {
            out << ',' << csv::format_double(init(static_cast<Eigen::Index>(r), c));
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_init(const std::filesystem::path& path) {
    csv::Reader r(path);
    if (r.header().size() < 3 || r.header()[0] != "entity_id" || r.header()[1] != "t") {
        throw Error(ErrorKind::SchemaError, path.string() + ": header must be entity_id,t,init_0[,...]");
    }
    const std::size_t k = r.header().size() - 2;
    std::vector<double> flat;
    std::size_t n = 0;
    while (r.next()) {
        for (std::size_t c = 0; c < k; ++c) flat.push_back(r.as_double(2 + c));
        ++n;
    }
    Eigen::MatrixXd init(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            init(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = flat[i * k + c];
        }
    }
    return init;
}

}  // namespace cb
