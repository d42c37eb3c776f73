#pragma once

#include "fable/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fable {

/// delimited_text: comma- or tab-separated numbers, with an optional header
/// row of column labels and an optional leading label column.
/// raw_binary: magic "FABLEMAT1", u64 n, u64 p, then n*p float64 row-major,
/// all little-endian.
enum class MatrixFormat { automatic, delimited_text, raw_binary };

inline constexpr std::string_view kMatrixMagic = "FABLEMAT1";

struct LoadedMatrix {
    MatrixXd values;
    std::vector<std::string> row_labels;     ///< empty unless a label column was found
    std::vector<std::string> column_labels;  ///< empty unless a header row was found
};

/// Throws IoError (naming the path), ParseError (line and column),
/// ShapeError (ragged rows, truncated binary) and MagicMismatch.
LoadedMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format = MatrixFormat::automatic);
LoadedMatrix read_delimited(std::istream& in);
MatrixXd read_binary_matrix(std::istream& in);

void save_matrix(const std::filesystem::path& path, const MatrixXd& values, MatrixFormat format);
void write_delimited(std::ostream& out, const MatrixXd& values, char delimiter = ',');
void write_binary_matrix(std::ostream& out, const MatrixXd& values);

MatrixFormat parse_matrix_format(std::string_view text);

enum class Transform { none, log2_plus_one };

struct PreprocessOptions {
    Transform transform = Transform::none;
    double filter_top_variance_fraction = 1.0;
    bool center = true;
};

struct Preprocessed {
    DataMatrix data;
    std::vector<Index> retained;  ///< retained position -> original column
};

/// Transform, keep the ceil(f p) highest-variance columns (ties go to the
/// lower index; kept columns stay in original order), then center.
/// Throws NegativeCount for negative input under log2_plus_one.
Preprocessed preprocess(const MatrixXd& raw, const PreprocessOptions& options);

Transform parse_transform(std::string_view text);

/// Number of columns kept for a fraction f of p.
Index retained_count(Index p, double fraction);

struct RowSplit {
    MatrixXd train;
    MatrixXd test;
    std::vector<Index> test_rows;  ///< original row indices, ascending
};

/// Seeded random split holding out `n_test` rows.
RowSplit split_rows(const MatrixXd& raw, Index n_test, std::uint64_t seed);

/// "0-99,120,130-139" style list (0-based, inclusive ranges), each index
/// checked against `limit`.
std::vector<Index> parse_index_list(std::string_view text, Index limit);

}  // namespace fable
