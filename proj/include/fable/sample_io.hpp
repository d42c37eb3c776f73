#pragma once

#include "fable/sampler.hpp"

#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

namespace fable {

/// Streaming sample export, one record per draw t.
///
/// text:   a line "t,k,p", then p lines of k comma-separated loadings (row j
///         of lambda_c), then one line of p comma-separated sigma^2 values.
/// binary: the 9-byte magic "FABLESMP1" once, then per record u64 t, u64 k,
///         u64 p, p*k float64 (row-major) and p float64, all little-endian.
enum class SampleFormat { text, binary };

inline constexpr std::string_view kSampleMagic = "FABLESMP1";

class SampleWriter {
public:
    SampleWriter(std::ostream& out, SampleFormat format);

    void write(const CovarianceSample& sample);

private:
    std::ostream& out_;
    SampleFormat format_;
};

/// Reads every record to end of stream. Throws MagicMismatch, ParseError,
/// ShapeError.
std::vector<CovarianceSample> read_samples(std::istream& in, SampleFormat format);

SampleFormat parse_sample_format(std::string_view text);

}  // namespace fable
