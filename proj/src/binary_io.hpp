#pragma once

// Little-endian scalar I/O shared by the binary matrix and sample formats.

#include "fable/error.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace fable::detail {

inline std::uint64_t to_little(std::uint64_t x) {
    if constexpr (std::endian::native == std::endian::little) {
        return x;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
}

inline void write_u64(std::ostream& out, std::uint64_t x) {
    const std::uint64_t le = to_little(x);
    out.write(reinterpret_cast<const char*>(&le), sizeof le);
}

inline void write_f64(std::ostream& out, double x) { write_u64(out, std::bit_cast<std::uint64_t>(x)); }

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    std::uint64_t le = 0;
    in.read(reinterpret_cast<char*>(&le), sizeof le);
    if (in.gcount() != sizeof le) throw Error(ErrorCode::ShapeError, std::string("truncated input reading ") + what);
    return to_little(le);
}

inline double read_f64(std::istream& in, const char* what) { return std::bit_cast<double>(read_u64(in, what)); }

}  // namespace fable::detail
