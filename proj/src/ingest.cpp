#include "fable/ingest.hpp"

#include "binary_io.hpp"
#include "fable/error.hpp"
#include "fable/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

namespace fable {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t end = line.find(delim, pos);
        out.push_back(trim(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos)));
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return out;
}

std::string unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return x;
}

bool all_numeric(const std::vector<std::string_view>& fields, std::size_t from) {
    for (std::size_t i = from; i < fields.size(); ++i)
        if (!parse_number(fields[i])) return false;
    return true;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
    return in;
}

}  // namespace

LoadedMatrix read_delimited(std::istream& in) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (!trim(line).empty()) lines.emplace_back(no, line);
    }
    if (lines.empty()) throw Error(ErrorCode::ParseError, "no data rows");
    const char delim = lines.front().second.find('\t') != std::string::npos ? '\t' : ',';

    LoadedMatrix out;
    std::size_t first_data = 0;
    auto head = split(lines.front().second, delim);
    // A header is any first line that is not numeric past its first cell;
    // the first cell may be a corner label above a label column.
    if (!all_numeric(head, 1) || (head.size() == 1 && !parse_number(head[0]))) {
        first_data = 1;
        if (lines.size() < 2) throw Error(ErrorCode::ParseError, "header row but no data rows");
    }
    const auto probe = split(lines[first_data].second, delim);
    const bool label_column = !parse_number(probe[0]) && probe.size() > 1;
    const std::size_t offset = label_column ? 1 : 0;
    const std::size_t width = probe.size();
    const std::size_t p = width - offset;
    if (p == 0) throw Error(ErrorCode::ParseError, "line " + std::to_string(lines[first_data].first) + ": no numeric columns");

    if (first_data == 1) {
        const std::size_t skip = head.size() == width ? offset : 0;
        if (head.size() - skip != p) {
            throw Error(ErrorCode::ShapeError, "header on line " + std::to_string(lines.front().first) + " has " +
                                                   std::to_string(head.size()) + " fields, data rows have " +
                                                   std::to_string(width));
        }
        for (std::size_t c = skip; c < head.size(); ++c) out.column_labels.push_back(unquote(head[c]));
    }

    const std::size_t n = lines.size() - first_data;
    out.values.resize(static_cast<Index>(n), static_cast<Index>(p));
    for (std::size_t r = 0; r < n; ++r) {
        const auto& [no, text] = lines[first_data + r];
        const auto fields = split(text, delim);
        if (fields.size() != width) {
            throw Error(ErrorCode::ShapeError, "ragged row on line " + std::to_string(no) + ": expected " +
                                                   std::to_string(width) + " fields, found " +
                                                   std::to_string(fields.size()));
        }
        if (label_column) out.row_labels.push_back(unquote(fields[0]));
        for (std::size_t c = offset; c < width; ++c) {
            const auto x = parse_number(fields[c]);
            if (!x) {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(no) + ", column " + std::to_string(c + 1) +
                                                       ": '" + std::string(fields[c]) + "' is not a number");
            }
            out.values(static_cast<Index>(r), static_cast<Index>(c - offset)) = *x;
        }
    }
    return out;
}

MatrixXd read_binary_matrix(std::istream& in) {
    std::string magic(kMatrixMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMatrixMagic) {
        throw Error(ErrorCode::MagicMismatch, "missing FABLEMAT1 header");
    }
    const auto n = detail::read_u64(in, "matrix header");
    const auto p = detail::read_u64(in, "matrix header");
    if (n > (1ULL << 31) || p > (1ULL << 31)) throw Error(ErrorCode::ShapeError, "implausible matrix dimensions");
    MatrixXd values(static_cast<Index>(n), static_cast<Index>(p));
    for (Index i = 0; i < values.rows(); ++i)
        for (Index j = 0; j < values.cols(); ++j) values(i, j) = detail::read_f64(in, "matrix body");
    if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::ShapeError, "trailing bytes after matrix body");
    return values;
}

LoadedMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
    std::ifstream in = open_in(path);
    if (format == MatrixFormat::automatic) {
        std::string magic(kMatrixMagic.size(), '\0');
        in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
        format = magic == kMatrixMagic ? MatrixFormat::raw_binary : MatrixFormat::delimited_text;
        in.clear();
        in.seekg(0);
    }
    try {
        if (format == MatrixFormat::raw_binary) return LoadedMatrix{read_binary_matrix(in), {}, {}};
        return read_delimited(in);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void write_delimited(std::ostream& out, const MatrixXd& values, char delimiter) {
    char buf[32];
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) {
            if (j > 0) out << delimiter;
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values(i, j));
            out.write(buf, ptr - buf);
        }
        out << '\n';
    }
}

void write_binary_matrix(std::ostream& out, const MatrixXd& values) {
    out.write(kMatrixMagic.data(), static_cast<std::streamsize>(kMatrixMagic.size()));
    detail::write_u64(out, static_cast<std::uint64_t>(values.rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(values.cols()));
    for (Index i = 0; i < values.rows(); ++i)
        for (Index j = 0; j < values.cols(); ++j) detail::write_f64(out, values(i, j));
}

void save_matrix(const std::filesystem::path& path, const MatrixXd& values, MatrixFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    if (format == MatrixFormat::raw_binary) {
        write_binary_matrix(out, values);
    } else {
        write_delimited(out, values);
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

MatrixFormat parse_matrix_format(std::string_view text) {
    if (text == "auto") return MatrixFormat::automatic;
    if (text == "text" || text == "csv" || text == "delimited_text") return MatrixFormat::delimited_text;
    if (text == "binary" || text == "raw_binary") return MatrixFormat::raw_binary;
    throw Error(ErrorCode::InvalidArgument, "unknown matrix format '" + std::string(text) + "'");
}

Index retained_count(Index p, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "filter fraction must lie in (0, 1]");
    const auto keep = static_cast<Index>(std::ceil(fraction * static_cast<double>(p) - 1e-9));
    return std::clamp<Index>(keep, 1, p);
}

Preprocessed preprocess(const MatrixXd& raw, const PreprocessOptions& options) {
    if (!raw.allFinite()) throw Error(ErrorCode::NonFinite, "input contains NaN or Inf");
    MatrixXd y = raw;
    if (options.transform == Transform::log2_plus_one) {
        for (Index j = 0; j < y.cols(); ++j) {
            for (Index i = 0; i < y.rows(); ++i) {
                if (y(i, j) < 0.0) {
                    throw Error(ErrorCode::NegativeCount, "negative count at row " + std::to_string(i + 1) +
                                                              ", column " + std::to_string(j + 1));
                }
            }
        }
        for (Index j = 0; j < y.cols(); ++j)
            for (Index i = 0; i < y.rows(); ++i) y(i, j) = std::log2(raw(i, j) + 1.0);
    }

    const Index p = y.cols();
    const Index keep = retained_count(p, options.filter_top_variance_fraction);
    std::vector<Index> retained(static_cast<std::size_t>(p));
    std::iota(retained.begin(), retained.end(), Index{0});
    if (keep < p) {
        if (y.rows() < 2) throw Error(ErrorCode::TooFewRows, "variance filtering needs at least two rows");
        const VectorXd mean = y.colwise().mean();
        const VectorXd var = (y.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(y.rows() - 1);
        std::stable_sort(retained.begin(), retained.end(), [&](Index a, Index b) { return var(a) > var(b); });
        retained.resize(static_cast<std::size_t>(keep));
        std::sort(retained.begin(), retained.end());
        MatrixXd kept(y.rows(), keep);
        for (Index c = 0; c < keep; ++c) kept.col(c) = y.col(retained[static_cast<std::size_t>(c)]);
        y = std::move(kept);
    }
    return Preprocessed{options.center ? center_columns(y) : DataMatrix(std::move(y)), std::move(retained)};
}

Transform parse_transform(std::string_view text) {
    if (text == "none") return Transform::none;
    if (text == "log2" || text == "log2_plus_one" || text == "log2p1") return Transform::log2_plus_one;
    throw Error(ErrorCode::InvalidArgument, "unknown transform '" + std::string(text) + "'");
}

RowSplit split_rows(const MatrixXd& raw, Index n_test, std::uint64_t seed) {
    const Index n = raw.rows();
    if (n_test < 1 || n_test >= n) throw Error(ErrorCode::InvalidArgument, "n_test must lie in [1, n - 1]");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    StreamRng g(seed, StreamDomain::Split, 0);
    for (Index i = n - 1; i > 0; --i) {
        const auto j = std::min(i, static_cast<Index>(g.uniform() * static_cast<double>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    RowSplit out;
    out.test_rows.assign(perm.begin(), perm.begin() + n_test);
    std::sort(out.test_rows.begin(), out.test_rows.end());
    std::vector<bool> is_test(static_cast<std::size_t>(n), false);
    for (Index i : out.test_rows) is_test[static_cast<std::size_t>(i)] = true;
    out.train.resize(n - n_test, raw.cols());
    out.test.resize(n_test, raw.cols());
    Index tr = 0, te = 0;
    for (Index i = 0; i < n; ++i) {
        if (is_test[static_cast<std::size_t>(i)]) {
            out.test.row(te++) = raw.row(i);
        } else {
            out.train.row(tr++) = raw.row(i);
        }
    }
    return out;
}

std::vector<Index> parse_index_list(std::string_view text, Index limit) {
    std::vector<Index> out;
    auto bad = [&](std::string_view part) {
        return Error(ErrorCode::InvalidArgument, "bad index list entry '" + std::string(part) + "'");
    };
    auto to_index = [&](std::string_view s, std::string_view part) {
        s = trim(s);
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) throw bad(part);
        if (v < 0 || v >= limit) {
            throw Error(ErrorCode::IndexOutOfRange,
                        "index " + std::to_string(v) + " outside [0, " + std::to_string(limit) + ")");
        }
        return static_cast<Index>(v);
    };
    for (auto part : split(text, ',')) {
        if (part.empty()) continue;
        const auto dash = part.find('-', 1);
        if (dash == std::string_view::npos) {
            out.push_back(to_index(part, part));
        } else {
            const Index lo = to_index(part.substr(0, dash), part);
            const Index hi = to_index(part.substr(dash + 1), part);
            if (hi < lo) throw bad(part);
            for (Index i = lo; i <= hi; ++i) out.push_back(i);
        }
    }
    return out;
}

}  // namespace fable
