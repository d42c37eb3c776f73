#pragma once

#include "fable/inference.hpp"
#include "fable/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fable {

struct SimulationConfig {
    std::string name;
    std::uint64_t id = 0;  ///< keys the truth and replicate streams together with `seed`
    Index n = 500;
    Index p = 1000;
    int k_true = 10;
    int R = 100;
    std::uint64_t seed = 0;
    double spike_prob = 0.5;
    double slab_sd = 0.5;
    double sigma_lo = 0.5;
    double sigma_hi = 5.0;
    Index tracked_submatrix_size = 100;
    double alpha = 0.05;
    FitOptions fit;

    /// Throws InvalidArgument.
    void validate() const;
};

/// Loadings are 0 with probability spike_prob, else N(0, slab_sd^2);
/// sigma_j^2 ~ U(sigma_lo, sigma_hi). Row j uses its own substream.
StructuredCovariance generate_truth(const SimulationConfig& config, std::uint64_t seed);

/// Truth for a config, keyed by (config.seed, config.id).
StructuredCovariance generate_truth(const SimulationConfig& config);

struct SyntheticData {
    DataMatrix data;  ///< centered
    MatrixXd factors;  ///< M0, n x k
};

/// Y = M0 Lambda0^T + E with iid N(0, 1) factors and N(0, sigma_j^2) noise,
/// then column-centered.
SyntheticData generate_data(const StructuredCovariance& truth, Index n, std::uint64_t seed);

/// Uncentered variant, for pipelines that center later (e.g. train/test splits).
MatrixXd generate_raw_data(const StructuredCovariance& truth, Index n, std::uint64_t seed,
                           MatrixXd* factors = nullptr);

/// ||Psi0 - Psi||_2 / ||Psi0||_2 through factored matrix-vector products.
double rel_spectral_error(const StructuredCovariance& truth, const StructuredCovariance& estimate);

/// First `count` entries of a seeded permutation of 0..p-1, sorted.
std::vector<Index> tracked_variables(Index p, Index count, std::uint64_t seed);

/// Order-sensitive 64-bit fingerprint of a covariance's parameters.
std::uint64_t fingerprint(const StructuredCovariance& cov);

struct MetricRecord {
    std::uint64_t config_id = 0;
    std::string config_name;
    int replicate = 0;  ///< 1-based
    bool ok = true;
    std::string error;
    double rel_spectral_error = 0.0;
    double mean_coverage = 0.0;  ///< asymptotic intervals, over tracked entries
    double mean_width = 0.0;
    double sample_mean_coverage = -1.0;  ///< sample-quantile intervals; -1 when not sampled
    double sample_mean_width = -1.0;
    double sample_mean_error = -1.0;  ///< error of the Monte Carlo mean, audit mode only
    int k_hat = 0;
    double rho = 0.0;
    double tau_sq = 0.0;
    double wall_clock_fit_s = 0.0;
    double wall_clock_sample_s = 0.0;
    std::uint64_t truth_fingerprint = 0;
};

struct ConfigSummary {
    SimulationConfig config;
    int succeeded = 0;
    int failed = 0;
    double mean_error = 0.0;
    double median_error = 0.0;
    CoverageReport coverage;  ///< asymptotic intervals
    std::optional<CoverageReport> sample_coverage;
    double mean_k_hat = 0.0;
    double mean_rho = 0.0;
    double mean_fit_s = 0.0;
    double mean_sample_s = 0.0;
};

struct StudyOptions {
    std::uint64_t n0 = 0;  ///< > 0 also builds sample-quantile intervals from n0 draws
    bool sample_mean_error = false;  ///< also score the Monte Carlo mean (needs n0 > 0)
    int threads = 0;
    /// Called after each replicate, in replicate order.
    std::function<void(const MetricRecord&)> on_record;
};

struct StudyResult {
    std::vector<MetricRecord> records;
    std::vector<ConfigSummary> summaries;
};

/// Truth is drawn once per config; replicate r uses data seed
/// derive_seed(seed, id, r). Replicate failures are recorded, not thrown.
StudyResult run_study(const std::vector<SimulationConfig>& configs, const StudyOptions& options = {});

/// The four standard (n, p) cells with k = 10.
std::vector<SimulationConfig> preset_configs(const std::string& name, std::uint64_t seed, int replicates);

/// Wall-clock columns are omitted unless `timings` is set, so that tables
/// from a fixed seed are byte-identical across runs.
void write_records(std::ostream& out, const std::vector<MetricRecord>& records, bool timings = false);
void write_summaries(std::ostream& out, const std::vector<ConfigSummary>& summaries, bool timings = false);

struct BenchmarkRow {
    Index p = 0;
    double fit_s = 0.0;     ///< medians over repeats
    double sample_s = 0.0;
    double mean_s = 0.0;
    double total_s = 0.0;   ///< fit + sample
    double log10_total = 0.0;
};

struct BenchmarkTable {
    Index n = 0;
    std::uint64_t n0 = 0;
    int repeats = 0;
    std::vector<BenchmarkRow> rows;
    double sample_slope = 0.0;  ///< least-squares log-log slope of sample_s on p
    double total_slope = 0.0;
    double wall_clock_s = 0.0;
};

struct BenchmarkOptions {
    Index n = 500;
    std::vector<Index> p_grid;  ///< empty: 500, 1000, ..., 5000
    std::uint64_t n0 = 1000;
    int repeats = 5;
    int k_true = 10;
    std::uint64_t seed = 0;
    int threads = 0;
};

BenchmarkTable runtime_benchmark(const BenchmarkOptions& options);
void write_benchmark(std::ostream& out, const BenchmarkTable& table);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fable
