#pragma once

#include "fable/model.hpp"
#include "fable/sampler.hpp"

#include <ostream>
#include <string_view>
#include <vector>

namespace fable {

/// Plug-in asymptotic variances for a list of entries (aligned with
/// `indices`). l0_sq is the pseudo-posterior variance of sqrt(n) Psi_uv and
/// S0_sq the sampling variance of its frequentist counterpart.
struct AsymptoticVariances {
    std::vector<IndexPair> indices;
    std::vector<double> l0_sq;
    std::vector<double> S0_sq;
};

AsymptoticVariances asymptotic_variances(const FableModel& model, const std::vector<IndexPair>& indices);

enum class IntervalMethod { asymptotic, sample_quantile };

struct IntervalGrid {
    std::vector<IndexPair> indices;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> center;   ///< mu_u^T mu_v + delta_u^2 1(u = v)
    std::vector<double> asym_sd;  ///< l0 / sqrt(n)
    double alpha = 0.05;
    IntervalMethod method = IntervalMethod::asymptotic;

    std::size_t size() const noexcept { return indices.size(); }
};

inline constexpr std::uint64_t kMinQuantileSamples = 100;

/// T_uv +/- z_{1-alpha/2} l0_uv / sqrt(n).
IntervalGrid asymptotic_intervals(const FableModel& model, const std::vector<IndexPair>& indices, double alpha);

/// Empirical (alpha/2, 1 - alpha/2) quantiles of n0 streamed draws.
IntervalGrid sample_quantile_intervals(const FableModel& model, std::uint64_t n0, const RngSpec& rng,
                                       const std::vector<IndexPair>& indices, double alpha, int threads = 0);

/// Same, from draws that are already in memory.
IntervalGrid sample_quantile_intervals(const FableModel& model, const std::vector<CovarianceSample>& samples,
                                       const std::vector<IndexPair>& indices, double alpha);

/// Dispatches on `method`; n0 and rng are only read for sample_quantile.
IntervalGrid credible_intervals(const FableModel& model, const std::vector<IndexPair>& indices, double alpha,
                                IntervalMethod method = IntervalMethod::asymptotic, std::uint64_t n0 = 0,
                                const RngSpec& rng = {}, int threads = 0);

struct CoverageReport {
    std::vector<IndexPair> indices;
    std::vector<double> coverage;  ///< per entry, fraction of replicates
    double mean_coverage = 0.0;
    double median_coverage = 0.0;
    double mean_width = 0.0;  ///< over entries and replicates
    std::size_t replicates = 0;
};

/// Accumulates interval grids over replicates without keeping them.
class CoverageAccumulator {
public:
    explicit CoverageAccumulator(const StructuredCovariance& truth);

    void add(const IntervalGrid& grid);
    CoverageReport report() const;
    std::size_t replicates() const noexcept { return replicates_; }

private:
    StructuredCovariance truth_;
    std::vector<IndexPair> indices_;
    std::vector<double> truth_values_;
    std::vector<std::uint64_t> hits_;
    std::vector<double> width_sum_;
    std::size_t replicates_ = 0;
};

/// Throws DimensionMismatch (index outside truth) and IndexSetMismatch.
CoverageReport coverage_audit(const StructuredCovariance& truth, const std::vector<IntervalGrid>& grids);

/// Log-likelihood of the (centered) data under the factored posterior mean.
double fitted_loglik(const FableModel& model, const DataMatrix& data);

/// ||mu_j||^2 / (||mu_j||^2 + delta_j^2).
VectorXd variance_explained(const FableModel& model);

/// Fraction of y_ij with |y_ij| <= z_{1-alpha/2} sqrt(||mu_j||^2 + delta_j^2).
double predictive_coverage(const FableModel& model, const DataMatrix& data, double alpha);

/// Fits on train columns target ∪ extra, then scores the test rows under
/// the target block of the posterior mean. Test rows are shifted by the
/// training means of the target columns unless `test` is already centered.
/// `test` may hold either all train columns or only the target columns.
double oos_loglik(const DataMatrix& train, const DataMatrix& test, const std::vector<Index>& targets,
                  const std::vector<Index>& extras, const FitOptions& options = {});

/// Columns u, v, center, lower, upper, asym_sd, method.
void write_interval_grid(std::ostream& out, const IntervalGrid& grid);

std::string_view to_string(IntervalMethod method);
IntervalMethod parse_interval_method(std::string_view text);

}  // namespace fable
