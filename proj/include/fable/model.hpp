#pragma once

#include "fable/linalg.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace fable {

enum class RhoStrategy { mean_b, sup_b, solve_mean_coverage };

/// Outcome of the JIC scan over k = 1..K0.
struct RankSelection {
    int k_hat = 0;
    int K0 = 0;
    std::vector<std::pair<int, double>> jic_values;
    double S0 = 0.0;
};

struct TauEstimate {
    double tau_sq = 0.0;
    VectorXd L_sq;  ///< ||U^T y_j||^2 / n
    VectorXd V_sq;  ///< ||(I - UU^T) y_j||^2 / n
};

struct FitOptions {
    double S0 = 0.75;
    double gamma0 = 1.0;
    double delta0_sq = 1.0;
    std::optional<int> k;          ///< skips rank selection when set
    std::optional<double> tau_sq;  ///< skips the empirical-Bayes estimate when set
    RhoStrategy rho_strategy = RhoStrategy::mean_b;
    double alpha = 0.05;  ///< target level for solve_mean_coverage
    SvdMethod svd_method = SvdMethod::exact;
    int threads = 0;
};

/// Fitted pseudo-posterior hyperparameters. Row j of `mu` is the posterior
/// location of the j-th loading vector; the conditional loading covariance
/// is rho^2 sigma_j^2 / (n + 1/tau_sq) I_k.
struct FableModel {
    Index n = 0;
    Index p = 0;
    int k = 0;
    double tau_sq = 0.0;
    double gamma0 = 1.0;
    double delta0_sq = 1.0;
    double gamma_n = 0.0;
    MatrixXd mu;
    VectorXd delta_sq;
    VectorXd V_sq;
    VectorXd L_sq;
    double rho = 1.0;
    RhoStrategy rho_strategy = RhoStrategy::mean_b;
    double S0 = 0.75;
    std::optional<RankSelection> rank;
    MatrixXd U;              ///< retained left singular vectors (n x k)
    VectorXd spectrum_head;  ///< leading singular values

    /// n + 1/tau_sq, the precision of the surrogate regression design.
    double shrinkage() const { return static_cast<double>(n) + 1.0 / tau_sq; }
};

int select_K0(const VectorXd& spectrum, double S0);

/// k (n v p) log(n ^ p).
double jic_penalty(int k, Index n, Index p);

/// np log(RSS_k / (np)) + penalty. Returns -inf (with a warning) when the
/// data are numerically exactly rank k < n ^ p.
double jic(const DataMatrix& data, const TruncatedSvd& svd, int k);

/// Scans JIC over 1..K0 given a decomposition whose spectrum is complete.
RankSelection select_rank(const DataMatrix& data, const TruncatedSvd& full_svd, double S0);
RankSelection select_rank(const DataMatrix& data, double S0);

TauEstimate estimate_tau_sq(const DataMatrix& data, const TruncatedSvd& svd);

FableModel fit(const DataMatrix& data, const FitOptions& options = {});

/// Single b_uv coefficient from loadings locations and residual variances.
double b_entry(const MatrixXd& mu, const VectorXd& V_sq, Index u, Index v);

/// Dense p x p coverage-inflation matrix. O(p^2) memory; see summarize_b.
MatrixXd compute_b_matrix(const FableModel& model);
MatrixXd compute_b_matrix(const MatrixXd& mu, const VectorXd& V_sq);

struct BSummary {
    double mean = 0.0;  ///< over u <= v
    double sup = 0.0;
};

/// Mean and max of b_uv over u <= v in O(p^2 k) time and O(p) memory.
BSummary summarize_b(const MatrixXd& mu, const VectorXd& V_sq, int threads = 0);

/// Average over u <= v of the plug-in asymptotic coverage q_uv(rho).
double mean_asymptotic_coverage(const MatrixXd& mu, const VectorXd& V_sq, double rho, double alpha,
                                int threads = 0);

double compute_rho(const MatrixXd& mu, const VectorXd& V_sq, RhoStrategy strategy,
                   double alpha = 0.05, int threads = 0);

/// Factor estimate A (C^T)^{-1} with A = U D / sqrt(p), for any invertible C
/// satisfying C C^T = D^2 / (np). C = D / sqrt(np) gives sqrt(n) U.
MatrixXd factor_estimate(const TruncatedSvd& svd, Index p, const MatrixXd& c_hat);

struct SurrogateHyperparameters {
    MatrixXd mu;
    VectorXd delta_sq;
};

/// Conjugate normal-inverse-gamma update of the p surrogate regressions of
/// y_j on an arbitrary factor estimate (general, unsimplified form).
SurrogateHyperparameters surrogate_hyperparameters(const DataMatrix& data, const MatrixXd& m_hat,
                                                   double tau_sq, double gamma0, double delta0_sq);

std::string_view to_string(RhoStrategy strategy);
RhoStrategy parse_rho_strategy(std::string_view text);

}  // namespace fable
