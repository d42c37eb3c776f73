#include "fable/linalg.hpp"

#include "fable/error.hpp"
#include "fable/rng.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace fable {

namespace {

void require_finite(const MatrixXd& values) {
    if (!values.allFinite()) {
        for (Index j = 0; j < values.cols(); ++j)
            for (Index i = 0; i < values.rows(); ++i)
                if (!std::isfinite(values(i, j))) {
                    std::ostringstream msg;
                    msg << "non-finite entry at row " << i << ", column " << j;
                    throw Error(ErrorCode::NonFinite, msg.str());
                }
    }
}

void require_rows(const MatrixXd& values) {
    if (values.rows() < 2)
        throw Error(ErrorCode::TooFewRows, "at least two rows are required, got " +
                                               std::to_string(values.rows()));
    if (values.cols() < 1) throw Error(ErrorCode::ShapeError, "data matrix has no columns");
}

MatrixXd gaussian_block(Index rows, Index cols, StreamDomain domain, std::uint64_t key) {
    MatrixXd out(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        StreamRng rng(0x5eed, domain, key, static_cast<std::uint64_t>(j));
        std::normal_distribution<double> normal;
        for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
    }
    return out;
}

// Largest-magnitude entry of each V column made positive (first index on
// ties); U follows so that U D V^T is unchanged.
void fix_signs(MatrixXd& u, MatrixXd& v) {
    for (Index c = 0; c < v.cols(); ++c) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index i = 0; i < v.rows(); ++i) {
            const double a = std::abs(v(i, c));
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        if (v(best, c) < 0.0) {
            v.col(c) = -v.col(c);
            u.col(c) = -u.col(c);
        }
    }
}

TruncatedSvd exact_svd(const MatrixXd& values, int k) {
    const auto n = static_cast<lapack_int>(values.rows());
    const auto p = static_cast<lapack_int>(values.cols());
    const lapack_int r = std::min(n, p);

    MatrixXd work = values;
    VectorXd s(r);
    MatrixXd u(n, r);
    MatrixXd vt(r, p);
    const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', n, p, work.data(), n, s.data(),
                                           u.data(), n, vt.data(), r);
    if (info != 0)
        throw Error(ErrorCode::ConvergenceFailure,
                    "dgesdd failed with info = " + std::to_string(info));

    TruncatedSvd out;
    out.k = k;
    out.U = u.leftCols(k);
    out.V = vt.topRows(k).transpose();
    out.singvals = s.head(k);
    out.spectrum = s;
    out.total_sq = values.squaredNorm();
    out.spectrum_complete = true;
    fix_signs(out.U, out.V);
    return out;
}

// Range finder with Gaussian sketch, oversampling and QR-stabilized power
// iterations, followed by an exact SVD of the small projected matrix.
TruncatedSvd randomized_svd(const MatrixXd& values, int k) {
    const Index n = values.rows();
    const Index p = values.cols();
    const Index l = std::min<Index>(k + kRandomizedOversampling, std::min(n, p));

    const MatrixXd omega = gaussian_block(p, l, StreamDomain::Sketch, static_cast<std::uint64_t>(k));
    MatrixXd q = orthonormal_columns(values * omega);
    for (int it = 0; it < kRandomizedPowerIterations; ++it) {
        const MatrixXd z = orthonormal_columns(values.transpose() * q);
        q = orthonormal_columns(values * z);
    }
    const MatrixXd b = q.transpose() * values;
    if (!b.allFinite())
        throw Error(ErrorCode::ConvergenceFailure, "randomized SVD produced non-finite projections");

    TruncatedSvd small = exact_svd(b, static_cast<int>(std::min<Index>(l, b.rows())));
    TruncatedSvd out;
    out.k = k;
    out.U = (q * small.U).leftCols(k);
    out.V = small.V.leftCols(k);
    out.singvals = small.spectrum.head(k);
    out.spectrum = small.spectrum.head(l);
    out.total_sq = values.squaredNorm();
    out.spectrum_complete = (l == std::min(n, p));
    fix_signs(out.U, out.V);
    return out;
}

}  // namespace

DataMatrix::DataMatrix(MatrixXd values) : values_(std::move(values)) {
    require_rows(values_);
    require_finite(values_);
}

DataMatrix::DataMatrix(MatrixXd values, VectorXd means, bool)
    : values_(std::move(values)), column_means_(std::move(means)) {}

DataMatrix DataMatrix::adopt_centered(MatrixXd values, VectorXd column_means) {
    require_rows(values);
    require_finite(values);
    if (column_means.size() != values.cols())
        throw Error(ErrorCode::DimensionMismatch, "column_means length does not match column count");
    const double n = static_cast<double>(values.rows());
    for (Index j = 0; j < values.cols(); ++j) {
        const double mean = values.col(j).sum() / n;
        const double scale = std::max(1.0, values.col(j).cwiseAbs().maxCoeff());
        if (std::abs(mean) > 1e-10 * scale)
            throw Error(ErrorCode::NotCentered, "column " + std::to_string(j) + " has nonzero mean");
    }
    return DataMatrix(std::move(values), std::move(column_means), true);
}

DataMatrix center_columns(const MatrixXd& raw) {
    require_rows(raw);
    require_finite(raw);
    const VectorXd means = raw.colwise().mean().transpose();
    MatrixXd centered = raw.rowwise() - means.transpose();
    for (Index j = 0; j < centered.cols(); ++j) {
        if (centered.col(j).cwiseAbs().maxCoeff() == 0.0)
            warn("column " + std::to_string(j) + " is constant; it is all-zero after centering");
    }
    return DataMatrix::adopt_centered(std::move(centered), means);
}

double TruncatedSvd::residual_sq(int r) const {
    if (spectrum_complete) {
        double tail = 0.0;
        for (Index i = spectrum.size() - 1; i >= r; --i) tail += spectrum(i) * spectrum(i);
        return tail;
    }
    return std::max(0.0, total_sq - spectrum.head(r).squaredNorm());
}

TruncatedSvd TruncatedSvd::leading(int r) const {
    if (r < 1 || r > k)
        throw Error(ErrorCode::RankOutOfRange, "cannot take " + std::to_string(r) +
                                                   " leading factors of a rank-" + std::to_string(k) +
                                                   " decomposition");
    TruncatedSvd out;
    out.U = U.leftCols(r);
    out.V = V.leftCols(r);
    out.singvals = singvals.head(r);
    out.spectrum = spectrum;
    out.k = r;
    out.total_sq = total_sq;
    out.spectrum_complete = spectrum_complete;
    return out;
}

TruncatedSvd truncated_svd(const MatrixXd& values, int k, SvdMethod method) {
    const Index r = std::min(values.rows(), values.cols());
    if (k < 1 || k > r)
        throw Error(ErrorCode::RankOutOfRange,
                    "k = " + std::to_string(k) + " outside [1, " + std::to_string(r) + "]");
    require_finite(values);
    return method == SvdMethod::exact ? exact_svd(values, k) : randomized_svd(values, k);
}

TruncatedSvd truncated_svd(const DataMatrix& data, int k, SvdMethod method) {
    return truncated_svd(data.values(), k, method);
}

VectorXd singular_values(const MatrixXd& values) {
    require_finite(values);
    const auto n = static_cast<lapack_int>(values.rows());
    const auto p = static_cast<lapack_int>(values.cols());
    MatrixXd work = values;
    VectorXd s(std::min(n, p));
    double dummy = 0.0;
    const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', n, p, work.data(), n, s.data(),
                                           &dummy, 1, &dummy, 1);
    if (info != 0)
        throw Error(ErrorCode::ConvergenceFailure,
                    "dgesdd failed with info = " + std::to_string(info));
    return s;
}

void StructuredCovariance::validate() const {
    if (loadings.rows() != diag.size())
        throw Error(ErrorCode::DimensionMismatch, "loadings have " + std::to_string(loadings.rows()) +
                                                      " rows but diagonal has " +
                                                      std::to_string(diag.size()) + " entries");
    for (Index j = 0; j < diag.size(); ++j)
        if (!(diag(j) > 0.0))
            throw Error(ErrorCode::NonPositiveDiag,
                        "diagonal entry " + std::to_string(j) + " is not positive");
}

double StructuredCovariance::entry(Index u, Index v) const {
    double value = loadings.row(u).dot(loadings.row(v));
    if (u == v) value += diag(u);
    return value;
}

MatrixXd StructuredCovariance::apply(const MatrixXd& x) const {
    MatrixXd out = diag.asDiagonal() * x;
    if (loadings.cols() > 0) out.noalias() += loadings * (loadings.transpose() * x);
    return out;
}

MatrixXd StructuredCovariance::dense() const {
    MatrixXd out = loadings * loadings.transpose();
    out.diagonal() += diag;
    return out;
}

StructuredCovariance StructuredCovariance::restrict_to(const std::vector<Index>& indices) const {
    StructuredCovariance out;
    out.loadings.resize(static_cast<Index>(indices.size()), loadings.cols());
    out.diag.resize(static_cast<Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Index j = indices[i];
        if (j < 0 || j >= dim())
            throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(j) + " out of range");
        out.loadings.row(static_cast<Index>(i)) = loadings.row(j);
        out.diag(static_cast<Index>(i)) = diag(j);
    }
    return out;
}

MatrixXd orthonormal_columns(const MatrixXd& m) {
    Eigen::HouseholderQR<MatrixXd> qr(m);
    return qr.householderQ() * MatrixXd::Identity(m.rows(), std::min(m.rows(), m.cols()));
}

double spectral_norm(const LinearOperator& op, double tol, int max_iter) {
    if (op.rows == 0 || op.cols == 0) return 0.0;
    const Index block = std::min<Index>(4, op.cols);
    MatrixXd x = orthonormal_columns(gaussian_block(op.cols, block, StreamDomain::PowerStart, 0));

    for (int it = 0; it < max_iter; ++it) {
        const MatrixXd ax = op.apply(x);
        const MatrixXd z = op.apply_adjoint(ax);
        const MatrixXd h = x.transpose() * z;
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (h + h.transpose()));
        const Index top = h.rows() - 1;
        const double theta = eig.eigenvalues()(top);
        if (!std::isfinite(theta))
            throw Error(ErrorCode::ConvergenceFailure, "power iteration produced a non-finite estimate");
        if (theta <= 0.0) return 0.0;
        const VectorXd w = eig.eigenvectors().col(top);
        const double residual = (z * w - theta * (x * w)).norm();
        if (residual <= tol * theta) return std::sqrt(theta);
        x = orthonormal_columns(z);
    }
    throw Error(ErrorCode::ConvergenceFailure,
                "spectral norm did not converge within " + std::to_string(max_iter) + " iterations");
}

double spectral_norm(const MatrixXd& a, double tol, int max_iter) {
    require_finite(a);
    LinearOperator op;
    op.rows = a.rows();
    op.cols = a.cols();
    op.apply = [&a](const MatrixXd& x) -> MatrixXd { return a * x; };
    op.apply_adjoint = [&a](const MatrixXd& y) -> MatrixXd { return a.transpose() * y; };
    return spectral_norm(op, tol, max_iter);
}

double gaussian_loglik(const Eigen::Ref<const MatrixXd>& rows, const StructuredCovariance& cov) {
    cov.validate();
    if (rows.cols() != cov.dim())
        throw Error(ErrorCode::DimensionMismatch, "data has " + std::to_string(rows.cols()) +
                                                      " columns but covariance is " +
                                                      std::to_string(cov.dim()) + "-dimensional");
    const Index n = rows.rows();
    const Index p = rows.cols();
    const Index k = cov.rank();

    const VectorXd inv_diag = cov.diag.cwiseInverse();
    const MatrixXd scaled = rows * inv_diag.asDiagonal();
    VectorXd quad = rows.cwiseProduct(scaled).rowwise().sum();
    double logdet = cov.diag.array().log().sum();

    if (k > 0) {
        MatrixXd capacitance = MatrixXd::Identity(k, k);
        capacitance.noalias() += cov.loadings.transpose() * inv_diag.asDiagonal() * cov.loadings;
        Eigen::LLT<MatrixXd> llt(capacitance);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::NonPositiveDiag, "capacitance matrix is not positive definite");
        const MatrixXd z = scaled * cov.loadings;  // n x k
        const MatrixXd w = llt.matrixL().solve(z.transpose());
        quad -= w.colwise().squaredNorm().transpose();
        logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }

    const double log2pi = std::log(2.0 * std::numbers::pi);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += quad(i);
    return -0.5 * (static_cast<double>(n) * (static_cast<double>(p) * log2pi + logdet) + total);
}

double gaussian_loglik(const DataMatrix& data, const StructuredCovariance& cov) {
    return gaussian_loglik(data.values(), cov);
}

double subspace_distance(const MatrixXd& u, const MatrixXd& w) {
    if (u.rows() != w.rows())
        throw Error(ErrorCode::DimensionMismatch, "subspace bases have different ambient dimension");
    MatrixXd joint(u.rows(), u.cols() + w.cols());
    joint << u, w;
    const MatrixXd q = orthonormal_columns(joint);
    const MatrixXd a = q.transpose() * u;
    const MatrixXd b = q.transpose() * w;
    const MatrixXd diff = a * a.transpose() - b * b.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(diff, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace fable
