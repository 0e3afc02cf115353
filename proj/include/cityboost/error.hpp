#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cb {

enum class ErrorKind {
    // usage
    Usage,
    InvalidConfig,
    // data
    MissingFile,
    SchemaError,
    DanglingReference,
    DegenerateSupersegment,
    NoCounters,
    DegenerateVariance,
    DimensionMismatch,
    TooFewCounters,
    InvalidK,
    DegenerateVolume,
    EmptyLabels,
    UnknownRegime,
    SchemaMismatch,
    EmptyData,
    TooFewWeeks,
    MissingArtifact,
    SlotOutOfRange,
    // anything else
    Internal,
};

std::string_view kind_name(ErrorKind kind);

/// Top-level category used by the CLI exit-code mapping.
enum class ErrorCategory { Usage, Data, Internal };

ErrorCategory category_of(ErrorKind kind);
std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// "DataError/SchemaMismatch" style tag.
    std::string tag() const;

private:
    ErrorKind kind_;
};

}  // namespace cb
