#include "fable/error.hpp"

#include <iostream>
#include <mutex>

namespace fable {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::RankOutOfRange: return "RankOutOfRange";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveDiag: return "NonPositiveDiag";
    case ErrorCode::NotCentered: return "NotCentered";
    case ErrorCode::AllZeroSpectrum: return "AllZeroSpectrum";
    case ErrorCode::ZeroResidual: return "ZeroResidual";
    case ErrorCode::ZeroResidualVariance: return "ZeroResidualVariance";
    case ErrorCode::NonPositiveDeltaSq: return "NonPositiveDeltaSq";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidSampleCount: return "InvalidSampleCount";
    case ErrorCode::SinkFailure: return "SinkFailure";
    case ErrorCode::GammaTooSmall: return "GammaTooSmall";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::IndexSetMismatch: return "IndexSetMismatch";
    case ErrorCode::OverlappingIndexSets: return "OverlappingIndexSets";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    }
    return "Unknown";
}

namespace {

std::mutex& handler_mutex() {
    static std::mutex m;
    return m;
}

WarningHandler& handler_slot() {
    static WarningHandler h = [](std::string_view msg) {
        std::cerr << "fable: warning: " << msg << '\n';
    };
    return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(handler_mutex());
    auto previous = std::move(handler_slot());
    handler_slot() = std::move(handler);
    return previous;
}

void warn(std::string_view message) {
    std::lock_guard lock(handler_mutex());
    if (handler_slot()) handler_slot()(message);
}

}  // namespace fable
