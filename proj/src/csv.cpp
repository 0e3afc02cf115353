#include "cityboost/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "cityboost/error.hpp"

namespace cb::csv {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

Reader::Reader(const std::filesystem::path& path, std::vector<std::string> expected_header)
    : path_(path), in_(path) {
    if (!in_) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
    if (!std::getline(in_, line_)) fail("missing header row");
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    for (auto f : split(line_)) header_.emplace_back(f);
    if (!expected_header.empty() && header_ != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        fail("header mismatch, expected '" + want + "'");
    }
}

bool Reader::next() {
    while (std::getline(in_, line_)) {
        ++line_no_;
        if (!line_.empty() && line_.back() == '\r') line_.pop_back();
        if (line_.empty()) continue;
        fields_ = split(line_);
        if (fields_.size() != header_.size()) {
            fail("expected " + std::to_string(header_.size()) + " columns, got " +
                 std::to_string(fields_.size()));
        }
        return true;
    }
    return false;
}

std::int64_t Reader::as_int(std::size_t i) const {
    const auto f = field(i);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail("column '" + header_.at(i) + "': not an integer: '" + std::string(f) + "'");
    }
    return v;
}

double Reader::as_double(std::size_t i) const {
    const auto f = field(i);
    if (f.empty() || f == "NA" || f == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail("column '" + header_.at(i) + "': not a number: '" + std::string(f) + "'");
    }
    return v;
}

void Reader::fail(const std::string& what) const {
    throw Error(ErrorKind::SchemaError,
                path_.string() + ":" + std::to_string(line_no_) + ": " + what);
}

std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    return out;
}

}  // namespace cb::csv
