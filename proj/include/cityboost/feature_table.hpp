#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cityboost/roadgraph.hpp"

namespace cb {

struct RowKey {
    Id entity = 0;
    int week = 0;
    int slot = 0;  // slot within the week
    int t = 0;     // global label slot
    friend bool operator==(const RowKey&, const RowKey&) = default;
};

// Column-major numeric table with a stable column order. Labels are
// congestion classes (stored as 0/1/2) or ETAs; empty when unlabeled.
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<RowKey> keys;
    std::vector<double> labels;

    std::size_t n_rows() const { return keys.size(); }
    std::size_t n_features() const { return names.size(); }
    bool has_labels() const { return !labels.empty(); }

    std::optional<std::size_t> column_index(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const;

    /// Drops every column whose name is listed.
    FeatureTable without_columns(std::span<const std::string> drop) const;
    FeatureTable select_rows(std::span<const std::size_t> rows) const;

    /// Throws SchemaError when column lengths disagree.
    void validate() const;
};

/// Throws SchemaMismatch when names differ (order included).
void require_same_schema(const FeatureTable& expected, const FeatureTable& actual, const char* what);

/// CSV: entity_id,week,slot,t,<features...>[,label]
void write_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_table(const std::filesystem::path& path);

/// CSV: entity_id,t,init_0[,init_1,...] aligned with a table's rows.
void write_init(const FeatureTable& table, const Eigen::MatrixXd& init, const std::filesystem::path& path);
Eigen::MatrixXd read_init(const std::filesystem::path& path);

}  // namespace cb
