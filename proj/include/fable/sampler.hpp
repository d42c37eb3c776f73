#pragma once

#include "fable/model.hpp"
#include "fable/rng.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace fable {

/// Entry (u, v) of a p x p covariance, 0-based.
struct IndexPair {
    Index u = 0;
    Index v = 0;

    friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// One coverage-corrected pseudo-posterior draw in factored form; the
/// implied covariance is lambda_c lambda_c^T + diag(sigma_c_sq).
struct CovarianceSample {
    MatrixXd lambda_c;     ///< p x k
    VectorXd sigma_c_sq;   ///< length p
    std::uint64_t index = 0;

    double entry(Index u, Index v) const {
        double value = lambda_c.row(u).dot(lambda_c.row(v));
        if (u == v) value += sigma_c_sq(u);
        return value;
    }

    MatrixXd dense() const;
};

/// Draw t: for each j, sigma^2 ~ IG(gamma_n/2, gamma_n delta_j^2/2) and
/// lambda_j | sigma^2 ~ N(mu_j, rho^2 sigma^2 / (n + 1/tau^2) I_k), using
/// substream (t, j) of `rng`.
CovarianceSample draw_sample(const FableModel& model, std::uint64_t t, const RngSpec& rng);

using SampleSink = std::function<void(const CovarianceSample&)>;

/// Emits samples t = 1..n0 to `sink` in increasing t. Samples are generated
/// in parallel batches; the output is identical for any thread count.
/// Exceptions raised by the sink surface as SinkFailure.
void draw_samples(const FableModel& model, std::uint64_t n0, const RngSpec& rng, const SampleSink& sink,
                  int threads = 0);

/// Pseudo-posterior mean in the factored convention G0 G0^T + diag(delta^2).
StructuredCovariance posterior_mean(const FableModel& model);

/// Exact pseudo-posterior mean entries: mu_u^T mu_v off the diagonal and
/// ||mu_u||^2 + (1 + k rho^2/(n + 1/tau^2)) gamma_n delta_u^2 / (gamma_n - 2)
/// on it. Throws GammaTooSmall when a diagonal entry is requested and
/// gamma_n <= 2.
std::vector<double> posterior_mean_entries(const FableModel& model, const std::vector<IndexPair>& indices);

inline constexpr std::uint64_t kExactQuantileLimit = 10000;

struct EntryStats {
    double mean = 0.0;
    double sd = 0.0;
    std::vector<double> quantiles;  ///< aligned with the requested levels
};

struct EntryStatsResult {
    std::vector<EntryStats> entries;
    std::vector<double> levels;
    /// False when n0 exceeds kExactQuantileLimit and quantiles come from a
    /// fixed-size reservoir of draws.
    bool exact_quantiles = true;
};

/// Streams n0 draws and summarizes Psi_C(u, v) for each requested entry
/// without materializing p x p matrices.
EntryStatsResult sample_entry_stats(const FableModel& model, std::uint64_t n0, const RngSpec& rng,
                                    const std::vector<IndexPair>& indices,
                                    const std::vector<double>& levels, int threads = 0);

void validate_indices(const std::vector<IndexPair>& indices, Index p);

/// All ordered pairs (u, v) with u, v drawn from `variables`.
std::vector<IndexPair> submatrix_indices(const std::vector<Index>& variables);

/// Type-7 (linear interpolation) sample quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double level);

}  // namespace fable
