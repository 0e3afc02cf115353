#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace cb::csv {

// Minimal reader for the flat comma-separated files this project exchanges:
// a header row followed by data rows, no quoting.
class Reader {
public:
    /// Throws MissingFile when the path cannot be opened, SchemaError when the
    /// header does not match `expected_header` (skipped if empty).
    Reader(const std::filesystem::path& path, std::vector<std::string> expected_header = {});

    const std::vector<std::string>& header() const { return header_; }

    /// Advances to the next non-empty row. Returns false at end of file.
    bool next();

    std::size_t line_number() const { return line_no_; }
    std::size_t size() const { return fields_.size(); }
    std::string_view field(std::size_t i) const { return fields_.at(i); }

    std::int64_t as_int(std::size_t i) const;
    double as_double(std::size_t i) const;  // "NA" and "" read as NaN

private:
    [[noreturn]] void fail(const std::string& what) const;

    std::filesystem::path path_;
    std::ifstream in_;
    std::string line_;
    std::vector<std::string> header_;
    std::vector<std::string_view> fields_;
    std::size_t line_no_ = 0;
};

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

/// Opens `path` for writing (creating parent directories).
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace cb::csv
