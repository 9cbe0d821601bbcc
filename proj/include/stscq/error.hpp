#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stscq {

enum class ErrorCode {
    EmptyCorpus,
    DimensionTooLarge,
    NonDivisibleImage,
    ShapeMismatch,
    DimensionMismatch,
    TooFewSamples,
    IndexOutOfRange,
    UntrainedRouter,
    EmptyBatch,
    LengthMismatch,
    DivergenceDetected,
    StageOrderError,
    RangeViolation,
    BadMagic,
    BadVersion,
    HeaderMismatch,
    NonZeroPadding,
    Truncated,
    TrailingBytes,
    BadFormat,
    BadSpec,
    IoError,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::NonDivisibleImage: return "NonDivisibleImage";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::UntrainedRouter: return "UntrainedRouter";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::StageOrderError: return "StageOrderError";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::NonZeroPadding: return "NonZeroPadding";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what)
{
    if (!condition)
        throw Error(code, what);
}

} // namespace stscq
