#include "fable/model.hpp"

#include "fable/error.hpp"
#include "fable/normal.hpp"
#include "fable/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fable {

namespace {

// Residual variances below this fraction of ||y_j||^2 / n are treated as zero.
constexpr double kResidualVarianceFloor = 1e-12;
// RSS_k below this fraction of ||Y||_F^2 counts as an exact rank-k fit.
constexpr double kZeroResidualFraction = 1e-20;

Index min_dim(const DataMatrix& data) { return std::min(data.rows(), data.cols()); }

struct ColumnProjections {
    VectorXd y_sq;   // ||y_j||^2
    VectorXd proj_sq;  // ||U^T y_j||^2
    MatrixXd uty;    // U^T Y, k x p
};

ColumnProjections project_columns(const DataMatrix& data, const MatrixXd& u) {
    ColumnProjections out;
    out.uty = u.transpose() * data.values();
    out.proj_sq = out.uty.colwise().squaredNorm().transpose();
    out.y_sq = data.values().colwise().squaredNorm().transpose();
    return out;
}

// Residual variances with the zero-variance check shared by estimate_tau_sq
// and fit.
VectorXd residual_variances(const ColumnProjections& proj, double n) {
    VectorXd v_sq(proj.y_sq.size());
    for (Index j = 0; j < v_sq.size(); ++j) {
        v_sq(j) = (proj.y_sq(j) - proj.proj_sq(j)) / n;
        const double floor = kResidualVarianceFloor * proj.y_sq(j) / n;
        if (v_sq(j) <= floor) {
            std::ostringstream msg;
            msg << "residual variance of column " << j << " is " << v_sq(j)
                << " (at or below the floor " << floor << ")";
            throw Error(ErrorCode::ZeroResidualVariance, msg.str());
        }
    }
    return v_sq;
}

// Off-diagonal b_uv from its ingredients. Both loadings zero is the
// removable 0/0 case, whose limit is 1.
double b_offdiag(double mu_u_sq, double mu_v_sq, double dot, double v_u, double v_v) {
    const double num = mu_u_sq * mu_v_sq + dot * dot;
    const double den = v_u * mu_v_sq + v_v * mu_u_sq;
    if (den <= 0.0) {
        if (num == 0.0) return 1.0;
        throw Error(ErrorCode::DegenerateDenominator, "b_uv denominator vanished");
    }
    return std::sqrt(1.0 + num / den);
}

double b_diag(double mu_sq, double v) {
    if (v <= 0.0) {
        if (mu_sq == 0.0) return 1.0;
        throw Error(ErrorCode::DegenerateDenominator, "b_uu denominator vanished");
    }
    return std::sqrt(1.0 + mu_sq / (2.0 * v));
}

// Plug-in asymptotic coverage of the diagonal entry at a given rho.
double diag_coverage(double z, double mu_sq, double v, double rho) {
    const double l_sq = 2.0 * v * v + 4.0 * rho * rho * v * mu_sq;
    const double s_sq = 2.0 * (mu_sq + v) * (mu_sq + v);
    return 2.0 * normal_cdf(z * std::sqrt(l_sq / s_sq)) - 1.0;
}

// Off-diagonal b values for u < v, stored row by row, plus the ingredients
// of the diagonal coverage. Off-diagonal coverage depends on rho only
// through rho / b_uv.
class CoverageEquation {
public:
    CoverageEquation(const MatrixXd& mu, const VectorXd& v_sq, double alpha, int threads)
        : mu_sq_(mu.rowwise().squaredNorm()), v_sq_(v_sq), z_(normal_quantile(1.0 - alpha / 2.0)) {
        const Index p = mu.rows();
        offsets_.resize(static_cast<std::size_t>(p) + 1, 0);
        for (Index u = 0; u < p; ++u)
            offsets_[static_cast<std::size_t>(u) + 1] =
                offsets_[static_cast<std::size_t>(u)] + static_cast<std::size_t>(p - u - 1);
        b_.resize(offsets_.back());
        parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t row) {
            const auto u = static_cast<Index>(row);
            if (u + 1 >= p) return;
            const VectorXd dots = mu.bottomRows(p - u - 1) * mu.row(u).transpose();
            double* out = b_.data() + offsets_[row];
            for (Index i = 0; i < dots.size(); ++i) {
                const Index v = u + 1 + i;
                out[i] = b_offdiag(mu_sq_(u), mu_sq_(v), dots(i), v_sq_(u), v_sq_(v));
            }
        });
    }

    double mean_coverage(double rho) const {
        double total = 0.0;
        for (Index u = 0; u < mu_sq_.size(); ++u) total += diag_coverage(z_, mu_sq_(u), v_sq_(u), rho);
        for (double b : b_) total += 2.0 * normal_cdf(z_ * rho / b) - 1.0;
        const auto p = static_cast<double>(mu_sq_.size());
        return total / (p * (p + 1.0) / 2.0);
    }

    double sup_b() const {
        double sup = 1.0;
        for (Index u = 0; u < mu_sq_.size(); ++u) sup = std::max(sup, b_diag(mu_sq_(u), v_sq_(u)));
        for (double b : b_) sup = std::max(sup, b);
        return sup;
    }

private:
    VectorXd mu_sq_;
    VectorXd v_sq_;
    double z_;
    std::vector<std::size_t> offsets_;
    std::vector<double> b_;
};

double solve_mean_coverage(const MatrixXd& mu, const VectorXd& v_sq, double alpha, int threads) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
    const CoverageEquation eq(mu, v_sq, alpha, threads);
    const double target = 1.0 - alpha;
    double lo = 1.0;
    double hi = 4.0 * eq.sup_b();
    const double f_lo = eq.mean_coverage(lo) - target;
    const double f_hi = eq.mean_coverage(hi) - target;
    if (f_lo == 0.0) return lo;
    if (f_lo > 0.0 || f_hi < 0.0) {
        std::ostringstream msg;
        msg << "coverage equation does not change sign on [" << lo << ", " << hi << "] (f = " << f_lo
            << ", " << f_hi << ")";
        throw Error(ErrorCode::BracketFailure, msg.str());
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (eq.mean_coverage(mid) - target < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

RankSelection scan_jic(const DataMatrix& data, const TruncatedSvd& svd, double S0) {
    if (!svd.spectrum_complete)
        throw Error(ErrorCode::InvalidArgument, "rank selection needs the complete singular spectrum");
    RankSelection out;
    out.S0 = S0;
    out.K0 = select_K0(svd.spectrum, S0);
    // JIC is undefined at k = n ^ p (zero residual by construction).
    const int r = static_cast<int>(min_dim(data));
    const int last = r > 1 ? std::min(out.K0, r - 1) : 1;
    if (r == 1) {
        out.k_hat = 1;
        return out;
    }
    double best = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= last; ++k) {
        const double value = jic(data, svd, k);
        out.jic_values.emplace_back(k, value);
        if (out.k_hat == 0 || value < best) {
            best = value;
            out.k_hat = k;
        }
    }
    return out;
}

}  // namespace

int select_K0(const VectorXd& spectrum, double S0) {
    if (!(S0 > 0.0 && S0 <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "S0 must lie in (0, 1]");
    std::vector<double> cumulative(static_cast<std::size_t>(spectrum.size()));
    double running = 0.0;
    for (Index i = 0; i < spectrum.size(); ++i) {
        running += spectrum(i);
        cumulative[static_cast<std::size_t>(i)] = running;
    }
    if (spectrum.size() == 0 || !(running > 0.0))
        throw Error(ErrorCode::AllZeroSpectrum, "singular spectrum has no positive entry");
    for (std::size_t i = 0; i < cumulative.size(); ++i)
        if (cumulative[i] / running >= S0) return static_cast<int>(i) + 1;
    return static_cast<int>(cumulative.size());
}

double jic_penalty(int k, Index n, Index p) {
    return static_cast<double>(k) * static_cast<double>(std::max(n, p)) *
           std::log(static_cast<double>(std::min(n, p)));
}

double jic(const DataMatrix& data, const TruncatedSvd& svd, int k) {
    const Index n = data.rows();
    const Index p = data.cols();
    if (k < 1 || k > svd.spectrum.size() || k > min_dim(data))
        throw Error(ErrorCode::RankOutOfRange, "JIC rank " + std::to_string(k) + " out of range");
    const double rss = svd.residual_sq(k);
    const double np = static_cast<double>(n) * static_cast<double>(p);
    if (rss <= kZeroResidualFraction * svd.total_sq) {
        if (k >= min_dim(data))
            throw Error(ErrorCode::ZeroResidual, "rank-" + std::to_string(k) + " residual is zero");
        warn("data are exactly rank " + std::to_string(k) + "; JIC(" + std::to_string(k) + ") = -inf");
        return -std::numeric_limits<double>::infinity();
    }
    return np * std::log(rss / np) + jic_penalty(k, n, p);
}

RankSelection select_rank(const DataMatrix& data, const TruncatedSvd& full_svd, double S0) {
    return scan_jic(data, full_svd, S0);
}

RankSelection select_rank(const DataMatrix& data, double S0) {
    TruncatedSvd spectrum_only;
    spectrum_only.spectrum = singular_values(data.values());
    spectrum_only.total_sq = data.values().squaredNorm();
    spectrum_only.spectrum_complete = true;
    return scan_jic(data, spectrum_only, S0);
}

TauEstimate estimate_tau_sq(const DataMatrix& data, const TruncatedSvd& svd) {
    if (svd.U.rows() != data.rows())
        throw Error(ErrorCode::DimensionMismatch, "SVD factors do not match the data");
    const double n = static_cast<double>(data.rows());
    const ColumnProjections proj = project_columns(data, svd.U);
    TauEstimate out;
    out.L_sq = proj.proj_sq / n;
    out.V_sq = residual_variances(proj, n);
    out.tau_sq = (out.L_sq.array() / out.V_sq.array()).mean() / static_cast<double>(svd.k);
    return out;
}

FableModel fit(const DataMatrix& data, const FitOptions& options) {
    if (!data.centered()) throw Error(ErrorCode::NotCentered, "fit requires centered data");
    if (!(options.gamma0 > 0.0) || !(options.delta0_sq > 0.0))
        throw Error(ErrorCode::InvalidArgument, "gamma0 and delta0_sq must be positive");
    if (options.tau_sq && !(*options.tau_sq > 0.0))
        throw Error(ErrorCode::InvalidArgument, "tau_sq must be positive");

    const Index n = data.rows();
    const Index p = data.cols();
    const int r = static_cast<int>(min_dim(data));

    FableModel model;
    model.n = n;
    model.p = p;
    model.gamma0 = options.gamma0;
    model.delta0_sq = options.delta0_sq;
    model.S0 = options.S0;
    model.rho_strategy = options.rho_strategy;

    TruncatedSvd svd;
    if (options.k) {
        svd = truncated_svd(data, *options.k, options.svd_method);
    } else if (options.svd_method == SvdMethod::exact) {
        const TruncatedSvd full = truncated_svd(data, r, SvdMethod::exact);
        model.rank = select_rank(data, full, options.S0);
        svd = full.leading(model.rank->k_hat);
    } else {
        model.rank = select_rank(data, options.S0);
        svd = truncated_svd(data, model.rank->k_hat, SvdMethod::randomized);
    }
    model.k = svd.k;
    model.U = svd.U;
    model.spectrum_head = svd.spectrum.head(std::min<Index>(svd.spectrum.size(), svd.k + 1));

    const double nd = static_cast<double>(n);
    const ColumnProjections proj = project_columns(data, svd.U);
    model.L_sq = proj.proj_sq / nd;
    model.V_sq = residual_variances(proj, nd);
    model.tau_sq = options.tau_sq
                       ? *options.tau_sq
                       : (model.L_sq.array() / model.V_sq.array()).mean() / static_cast<double>(svd.k);

    const double shrink = model.shrinkage();
    model.mu = (std::sqrt(nd) / shrink) * proj.uty.transpose();

    model.gamma_n = options.gamma0 + nd;
    model.delta_sq.resize(p);
    const double prior_scale = options.gamma0 * options.delta0_sq;
    for (Index j = 0; j < p; ++j) {
        const double quad = proj.y_sq(j) - nd * proj.proj_sq(j) / shrink;
        double scaled = prior_scale + quad;
        if (!(scaled > 0.0)) {
            const double floor = 1e-12 * (prior_scale + proj.y_sq(j));
            warn("delta_sq for column " + std::to_string(j) + " clamped to " + std::to_string(floor));
            scaled = floor;
        }
        model.delta_sq(j) = scaled / model.gamma_n;
    }

    model.rho = compute_rho(model.mu, model.V_sq, options.rho_strategy, options.alpha, options.threads);
    return model;
}

double b_entry(const MatrixXd& mu, const VectorXd& V_sq, Index u, Index v) {
    const double mu_u_sq = mu.row(u).squaredNorm();
    if (u == v) return b_diag(mu_u_sq, V_sq(u));
    return b_offdiag(mu_u_sq, mu.row(v).squaredNorm(), mu.row(u).dot(mu.row(v)), V_sq(u), V_sq(v));
}

MatrixXd compute_b_matrix(const MatrixXd& mu, const VectorXd& V_sq) {
    const Index p = mu.rows();
    if (V_sq.size() != p) throw Error(ErrorCode::DimensionMismatch, "mu and V_sq disagree on p");
    const VectorXd mu_sq = mu.rowwise().squaredNorm();
    const MatrixXd gram = mu * mu.transpose();
    MatrixXd b(p, p);
    for (Index u = 0; u < p; ++u) {
        b(u, u) = b_diag(mu_sq(u), V_sq(u));
        for (Index v = u + 1; v < p; ++v) {
            b(u, v) = b_offdiag(mu_sq(u), mu_sq(v), gram(u, v), V_sq(u), V_sq(v));
            b(v, u) = b(u, v);
        }
    }
    return b;
}

MatrixXd compute_b_matrix(const FableModel& model) { return compute_b_matrix(model.mu, model.V_sq); }

BSummary summarize_b(const MatrixXd& mu, const VectorXd& V_sq, int threads) {
    const Index p = mu.rows();
    if (V_sq.size() != p) throw Error(ErrorCode::DimensionMismatch, "mu and V_sq disagree on p");
    const VectorXd mu_sq = mu.rowwise().squaredNorm();
    std::vector<double> row_sum(static_cast<std::size_t>(p));
    std::vector<double> row_max(static_cast<std::size_t>(p));
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t row) {
        const auto u = static_cast<Index>(row);
        double sum = b_diag(mu_sq(u), V_sq(u));
        double max = sum;
        if (u + 1 < p) {
            const VectorXd dots = mu.bottomRows(p - u - 1) * mu.row(u).transpose();
            for (Index i = 0; i < dots.size(); ++i) {
                const Index v = u + 1 + i;
                const double b = b_offdiag(mu_sq(u), mu_sq(v), dots(i), V_sq(u), V_sq(v));
                sum += b;
                max = std::max(max, b);
            }
        }
        row_sum[row] = sum;
        row_max[row] = max;
    });
    BSummary out;
    double total = 0.0;
    for (std::size_t i = 0; i < row_sum.size(); ++i) {
        total += row_sum[i];
        out.sup = std::max(out.sup, row_max[i]);
    }
    const double pd = static_cast<double>(p);
    out.mean = total / (pd * (pd + 1.0) / 2.0);
    return out;
}

double mean_asymptotic_coverage(const MatrixXd& mu, const VectorXd& V_sq, double rho, double alpha,
                                int threads) {
    return CoverageEquation(mu, V_sq, alpha, threads).mean_coverage(rho);
}

double compute_rho(const MatrixXd& mu, const VectorXd& V_sq, RhoStrategy strategy, double alpha,
                   int threads) {
    switch (strategy) {
    case RhoStrategy::mean_b: return summarize_b(mu, V_sq, threads).mean;
    case RhoStrategy::sup_b: return summarize_b(mu, V_sq, threads).sup;
    case RhoStrategy::solve_mean_coverage: return solve_mean_coverage(mu, V_sq, alpha, threads);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown rho strategy");
}

MatrixXd factor_estimate(const TruncatedSvd& svd, Index p, const MatrixXd& c_hat) {
    if (c_hat.rows() != svd.k || c_hat.cols() != svd.k)
        throw Error(ErrorCode::DimensionMismatch, "C must be k x k");
    const MatrixXd a = svd.U * svd.singvals.asDiagonal() / std::sqrt(static_cast<double>(p));
    // M = A C^{-T}  <=>  M^T = C^{-1} A^T
    return c_hat.partialPivLu().solve(a.transpose()).transpose();
}

SurrogateHyperparameters surrogate_hyperparameters(const DataMatrix& data, const MatrixXd& m_hat,
                                                   double tau_sq, double gamma0, double delta0_sq) {
    if (m_hat.rows() != data.rows())
        throw Error(ErrorCode::DimensionMismatch, "factor estimate has the wrong number of rows");
    MatrixXd precision = m_hat.transpose() * m_hat;
    precision.diagonal().array() += 1.0 / tau_sq;
    const Eigen::LLT<MatrixXd> llt(precision);
    const MatrixXd mty = m_hat.transpose() * data.values();  // k x p
    const MatrixXd mu_t = llt.solve(mty);                    // k x p

    SurrogateHyperparameters out;
    out.mu = mu_t.transpose();
    const double gamma_n = gamma0 + static_cast<double>(data.rows());
    out.delta_sq.resize(data.cols());
    for (Index j = 0; j < data.cols(); ++j) {
        const VectorXd m = mu_t.col(j);
        const double quad = data.values().col(j).squaredNorm() - m.dot(precision * m);
        out.delta_sq(j) = (gamma0 * delta0_sq + quad) / gamma_n;
    }
    return out;
}

std::string_view to_string(RhoStrategy strategy) {
    switch (strategy) {
    case RhoStrategy::mean_b: return "mean_b";
    case RhoStrategy::sup_b: return "sup_b";
    case RhoStrategy::solve_mean_coverage: return "solve_mean_coverage";
    }
    return "unknown";
}

RhoStrategy parse_rho_strategy(std::string_view text) {
    if (text == "mean_b" || text == "mean") return RhoStrategy::mean_b;
    if (text == "sup_b" || text == "sup") return RhoStrategy::sup_b;
    if (text == "solve_mean_coverage" || text == "solve") return RhoStrategy::solve_mean_coverage;
    throw Error(ErrorCode::InvalidArgument, "unknown rho strategy '" + std::string(text) + "'");
}

}  // namespace fable
