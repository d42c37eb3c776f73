#include "fable/sample_io.hpp"

#include "binary_io.hpp"
#include "fable/error.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace fable {

namespace {

void append_double(std::string& line, double x) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
    line.append(buf, static_cast<std::size_t>(len));
}

std::vector<double> parse_csv_line(const std::string& line, std::size_t expected, std::size_t line_no) {
    std::vector<double> values;
    values.reserve(expected);
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t end = line.find(',', pos);
        if (end == std::string::npos) end = line.size();
        const std::string field = line.substr(pos, end - pos);
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(field, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != field.size()) {
            throw Error(ErrorCode::ParseError, "sample line " + std::to_string(line_no) + ", field " +
                                                   std::to_string(values.size() + 1) + ": not a number");
        }
        values.push_back(x);
        pos = end + 1;
    }
    if (values.size() != expected) {
        throw Error(ErrorCode::ShapeError, "sample line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(expected) + " values, found " +
                                               std::to_string(values.size()));
    }
    return values;
}

std::vector<CovarianceSample> read_text(std::istream& in) {
    std::vector<CovarianceSample> out;
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&](bool allow_eof) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        if (!allow_eof) throw Error(ErrorCode::ShapeError, "sample stream truncated after line " + std::to_string(line_no));
        return false;
    };
    while (next_line(true)) {
        const auto header = parse_csv_line(line, 3, line_no);
        for (double h : header) {
            if (h < 0 || h != std::floor(h)) {
                throw Error(ErrorCode::ParseError, "sample line " + std::to_string(line_no) + ": bad record header");
            }
        }
        CovarianceSample s;
        s.index = static_cast<std::uint64_t>(header[0]);
        const auto k = static_cast<Index>(header[1]);
        const auto p = static_cast<Index>(header[2]);
        s.lambda_c.resize(p, k);
        s.sigma_c_sq.resize(p);
        for (Index j = 0; j < p; ++j) {
            next_line(false);
            const auto row = parse_csv_line(line, static_cast<std::size_t>(k), line_no);
            for (Index l = 0; l < k; ++l) s.lambda_c(j, l) = row[static_cast<std::size_t>(l)];
        }
        next_line(false);
        const auto sig = parse_csv_line(line, static_cast<std::size_t>(p), line_no);
        for (Index j = 0; j < p; ++j) s.sigma_c_sq(j) = sig[static_cast<std::size_t>(j)];
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<CovarianceSample> read_binary(std::istream& in) {
    std::string magic(kSampleMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kSampleMagic) {
        throw Error(ErrorCode::MagicMismatch, "not a FABLESMP1 sample stream");
    }
    std::vector<CovarianceSample> out;
    while (in.peek() != std::char_traits<char>::eof()) {
        CovarianceSample s;
        s.index = detail::read_u64(in, "record header");
        const auto k = static_cast<Index>(detail::read_u64(in, "record header"));
        const auto p = static_cast<Index>(detail::read_u64(in, "record header"));
        s.lambda_c.resize(p, k);
        s.sigma_c_sq.resize(p);
        for (Index j = 0; j < p; ++j)
            for (Index l = 0; l < k; ++l) s.lambda_c(j, l) = detail::read_f64(in, "loadings");
        for (Index j = 0; j < p; ++j) s.sigma_c_sq(j) = detail::read_f64(in, "variances");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

SampleWriter::SampleWriter(std::ostream& out, SampleFormat format) : out_(out), format_(format) {
    if (format_ == SampleFormat::binary) out_.write(kSampleMagic.data(), static_cast<std::streamsize>(kSampleMagic.size()));
}

void SampleWriter::write(const CovarianceSample& s) {
    const Index p = s.lambda_c.rows();
    const Index k = s.lambda_c.cols();
    if (format_ == SampleFormat::binary) {
        detail::write_u64(out_, s.index);
        detail::write_u64(out_, static_cast<std::uint64_t>(k));
        detail::write_u64(out_, static_cast<std::uint64_t>(p));
        for (Index j = 0; j < p; ++j)
            for (Index l = 0; l < k; ++l) detail::write_f64(out_, s.lambda_c(j, l));
        for (Index j = 0; j < p; ++j) detail::write_f64(out_, s.sigma_c_sq(j));
    } else {
        std::string line = std::to_string(s.index) + "," + std::to_string(k) + "," + std::to_string(p) + "\n";
        for (Index j = 0; j < p; ++j) {
            for (Index l = 0; l < k; ++l) {
                if (l > 0) line += ',';
                append_double(line, s.lambda_c(j, l));
            }
            line += '\n';
        }
        for (Index j = 0; j < p; ++j) {
            if (j > 0) line += ',';
            append_double(line, s.sigma_c_sq(j));
        }
        line += '\n';
        out_ << line;
    }
    if (!out_) throw Error(ErrorCode::IoError, "failed writing sample " + std::to_string(s.index));
}

std::vector<CovarianceSample> read_samples(std::istream& in, SampleFormat format) {
    return format == SampleFormat::binary ? read_binary(in) : read_text(in);
}

SampleFormat parse_sample_format(std::string_view text) {
    if (text == "text" || text == "csv") return SampleFormat::text;
    if (text == "binary" || text == "bin") return SampleFormat::binary;
    throw Error(ErrorCode::InvalidArgument, "unknown sample format '" + std::string(text) + "'");
}

}  // namespace fable
