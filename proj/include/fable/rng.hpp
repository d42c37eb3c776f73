#pragma once

#include <cstdint>
#include <limits>

namespace fable {

/// Separates the uses of a master seed so that, e.g., sample t = 3 and
/// replicate r = 3 never share a substream.
enum class StreamDomain : std::uint64_t {
    Sampler = 1,
    Truth = 2,
    DataFactors = 3,
    DataNoise = 4,
    Tracked = 5,
    Sketch = 6,
    PowerStart = 7,
    Reservoir = 8,
    Split = 9,
    Replicate = 10,
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Derives a child seed from (seed, a, b). Used to key replicates and
/// configurations off a single master seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = detail::mix64(seed + detail::kGolden);
    s = detail::mix64(s ^ (a + 0x6a09e667f3bcc909ULL));
    s = detail::mix64(s ^ (b + 0xbb67ae8584caa73bULL));
    return s;
}

/// SplitMix64 generator positioned at a keyed substream. A substream is a
/// pure function of (seed, domain, a, b), so draws do not depend on which
/// thread consumes them or in what order substreams are visited.
/// Satisfies UniformRandomBitGenerator for use with <random> distributions.
class StreamRng {
public:
    using result_type = std::uint64_t;

    constexpr StreamRng(std::uint64_t seed, StreamDomain domain, std::uint64_t a, std::uint64_t b = 0)
        : state_(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(domain)), a, b)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() {
        state_ += detail::kGolden;
        return detail::mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Master seed for a Monte Carlo run; substreams are keyed per
/// (sample index, variable index).
struct RngSpec {
    std::uint64_t seed = 0;

    StreamRng stream(std::uint64_t t, std::uint64_t j) const {
        return StreamRng(seed, StreamDomain::Sampler, t, j);
    }
};

}  // namespace fable
