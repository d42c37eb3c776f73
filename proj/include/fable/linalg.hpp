#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace fable {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// An n x p observation matrix (rows are samples). Constructed either raw or
/// through center_columns(); the centering metadata travels with the values.
class DataMatrix {
public:
    /// Wraps uncentered values. Throws NonFinite / TooFewRows.
    explicit DataMatrix(MatrixXd values);

    /// Wraps values that were centered elsewhere, keeping the subtracted
    /// means. Throws NotCentered if a column mean is not ~0.
    static DataMatrix adopt_centered(MatrixXd values, VectorXd column_means);

    const MatrixXd& values() const noexcept { return values_; }
    Index rows() const noexcept { return values_.rows(); }
    Index cols() const noexcept { return values_.cols(); }
    bool centered() const noexcept { return column_means_.has_value(); }
    const std::optional<VectorXd>& column_means() const noexcept { return column_means_; }

private:
    DataMatrix(MatrixXd values, VectorXd means, bool);

    MatrixXd values_;
    std::optional<VectorXd> column_means_;
};

/// Subtracts column means. Constant columns become all-zero and are flagged
/// with a warning.
DataMatrix center_columns(const MatrixXd& raw);

enum class SvdMethod { exact, randomized };

/// Top-k factors of Y plus (part of) its singular spectrum.
///
/// `spectrum` holds all n∧p singular values for the exact method; the
/// randomized method only estimates the leading k + oversampling values and
/// sets `spectrum_complete = false`. `total_sq` is always ||Y||_F^2 so the
/// rank-k residual can be recovered either way.
struct TruncatedSvd {
    MatrixXd U;
    VectorXd singvals;
    MatrixXd V;
    VectorXd spectrum;
    int k = 0;
    double total_sq = 0.0;
    bool spectrum_complete = true;

    /// Squared Frobenius norm of Y - U_r D_r V_r^T for the leading r factors.
    double residual_sq(int r) const;

    /// Leading r factors; the spectrum is carried over unchanged.
    TruncatedSvd leading(int r) const;
};

inline constexpr int kRandomizedOversampling = 10;
inline constexpr int kRandomizedPowerIterations = 2;

TruncatedSvd truncated_svd(const MatrixXd& values, int k, SvdMethod method = SvdMethod::exact);
TruncatedSvd truncated_svd(const DataMatrix& data, int k, SvdMethod method = SvdMethod::exact);

/// All n∧p singular values, nonincreasing (no vectors).
VectorXd singular_values(const MatrixXd& values);

/// Covariance GG^T + diag(Δ) held in factored form.
struct StructuredCovariance {
    MatrixXd loadings;
    VectorXd diag;

    Index dim() const noexcept { return diag.size(); }
    Index rank() const noexcept { return loadings.cols(); }

    /// Throws DimensionMismatch / NonPositiveDiag.
    void validate() const;

    double entry(Index u, Index v) const;

    /// Returns Psi * X without forming Psi.
    MatrixXd apply(const MatrixXd& x) const;

    /// Dense p x p matrix; meant for small p (oracles, tests).
    MatrixXd dense() const;

    /// Rows/diagonal restricted to `indices` (the implied covariance is the
    /// corresponding principal submatrix).
    StructuredCovariance restrict_to(const std::vector<Index>& indices) const;
};

/// Matrix-free operator. Both maps act column-wise on a block.
struct LinearOperator {
    Index rows = 0;
    Index cols = 0;
    std::function<MatrixXd(const MatrixXd&)> apply;
    std::function<MatrixXd(const MatrixXd&)> apply_adjoint;
};

inline constexpr double kSpectralNormTol = 1e-8;
inline constexpr int kSpectralNormMaxIter = 10000;

/// Largest singular value via block power iteration on A^T A with a
/// Rayleigh-Ritz step; stops when the top Ritz residual falls below
/// tol * Ritz value. Throws ConvergenceFailure after max_iter iterations.
double spectral_norm(const MatrixXd& a, double tol = kSpectralNormTol,
                     int max_iter = kSpectralNormMaxIter);
double spectral_norm(const LinearOperator& op, double tol = kSpectralNormTol,
                     int max_iter = kSpectralNormMaxIter);

/// Sum over rows of log N_p(y_i; 0, GG^T + diag(Δ)), evaluated with the
/// Woodbury identity and determinant lemma in O(n p k + k^3).
double gaussian_loglik(const Eigen::Ref<const MatrixXd>& rows, const StructuredCovariance& cov);
double gaussian_loglik(const DataMatrix& data, const StructuredCovariance& cov);

/// Orthonormal basis (Householder QR) for the columns of m.
MatrixXd orthonormal_columns(const MatrixXd& m);

/// ||U U^T - W W^T|| for matrices with orthonormal columns, computed in the
/// span of [U W] without forming n x n projectors.
double subspace_distance(const MatrixXd& u, const MatrixXd& w);

}  // namespace fable
