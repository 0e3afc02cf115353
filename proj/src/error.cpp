#include "cityboost/error.hpp"

namespace cb {

std::string_view kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return "Usage";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::MissingFile: return "MissingFile";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::DanglingReference: return "DanglingReference";
        case ErrorKind::DegenerateSupersegment: return "DegenerateSupersegment";
        case ErrorKind::NoCounters: return "NoCounters";
        case ErrorKind::DegenerateVariance: return "DegenerateVariance";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::TooFewCounters: return "TooFewCounters";
        case ErrorKind::InvalidK: return "InvalidK";
        case ErrorKind::DegenerateVolume: return "DegenerateVolume";
        case ErrorKind::EmptyLabels: return "EmptyLabels";
        case ErrorKind::UnknownRegime: return "UnknownRegime";
        case ErrorKind::SchemaMismatch: return "SchemaMismatch";
        case ErrorKind::EmptyData: return "EmptyData";
        case ErrorKind::TooFewWeeks: return "TooFewWeeks";
        case ErrorKind::MissingArtifact: return "MissingArtifact";
        case ErrorKind::SlotOutOfRange: return "SlotOutOfRange";
        case ErrorKind::Internal: return "Internal";
    }
    return "Internal";
}

ErrorCategory category_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage:
        case ErrorKind::InvalidConfig:
            return ErrorCategory::Usage;
        case ErrorKind::Internal:
            return ErrorCategory::Internal;
        default:
            return ErrorCategory::Data;
    }
}

std::string_view category_name(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Usage: return "UsageError";
        case ErrorCategory::Data: return "DataError";
        case ErrorCategory::Internal: return "InternalError";
    }
    return "InternalError";
}

std::string Error::tag() const {
    std::string out(category_name(category_of(kind_)));
    out += '/';
    out += kind_name(kind_);
    return out;
}

}  // namespace cb
