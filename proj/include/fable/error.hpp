#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fable {

enum class ErrorCode {
    NonFinite,
    TooFewRows,
    RankOutOfRange,
    ConvergenceFailure,
    DimensionMismatch,
    NonPositiveDiag,
    NotCentered,
    AllZeroSpectrum,
    ZeroResidual,
    ZeroResidualVariance,
    NonPositiveDeltaSq,
    DegenerateDenominator,
    BracketFailure,
    InvalidArgument,
    InvalidSampleCount,
    SinkFailure,
    GammaTooSmall,
    IndexOutOfRange,
    TooFewSamples,
    InvalidAlpha,
    IndexSetMismatch,
    OverlappingIndexSets,
    EmptyTarget,
    ParseError,
    ShapeError,
    MagicMismatch,
    IoError,
    NegativeCount,
    UnknownSubcommand,
};

std::string_view to_string(ErrorCode code);

/// All library failures are reported as `fable::Error`; `code()` is stable
/// and is what the CLI prints in its error record.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Non-fatal diagnostics (degenerate columns, clamped variances, ...).
/// The default handler writes to stderr; tests install a capturing handler.
using WarningHandler = std::function<void(std::string_view)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace fable
