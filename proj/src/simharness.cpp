#include "fable/simharness.hpp"

#include "fable/error.hpp"
#include "fable/parallel.hpp"
#include "fable/rng.hpp"
#include "fable/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>

namespace fable {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return sorted_quantile(v, 0.5);
}

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidArgument, "simulation config: " + what); }

struct ReplicateOutput {
    MetricRecord record;
    std::optional<IntervalGrid> grid;
    std::optional<IntervalGrid> sample_grid;
};

double fraction_covered(const IntervalGrid& g, const std::vector<double>& truth, double& mean_width) {
    std::size_t hits = 0;
    double width = 0.0;
    for (std::size_t e = 0; e < g.size(); ++e) {
        if (g.lower[e] <= truth[e] && truth[e] <= g.upper[e]) ++hits;
        width += g.upper[e] - g.lower[e];
    }
    mean_width = width / static_cast<double>(g.size());
    return static_cast<double>(hits) / static_cast<double>(g.size());
}

/// Monte Carlo mean in factored form: the average of lambda lambda^T over
/// draws equals L L^T with L the draws stacked side by side / sqrt(n0).
StructuredCovariance sample_mean_covariance(const FableModel& model, std::uint64_t n0, const RngSpec& rng,
                                            int threads) {
    StructuredCovariance out{MatrixXd(model.p, static_cast<Index>(n0) * model.k), VectorXd::Zero(model.p)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(n0));
    draw_samples(
        model, n0, rng,
        [&](const CovarianceSample& s) {
            out.loadings.middleCols(static_cast<Index>(s.index - 1) * model.k, model.k) = scale * s.lambda_c;
            out.diag += s.sigma_c_sq;
        },
        threads);
    out.diag /= static_cast<double>(n0);
    return out;
}

ReplicateOutput run_replicate(const SimulationConfig& c, const StructuredCovariance& truth,
                              std::uint64_t truth_print, const std::vector<IndexPair>& pairs,
                              const std::vector<double>& truth_values, int r, const StudyOptions& options,
                              int inner_threads) {
    ReplicateOutput out;
    MetricRecord& rec = out.record;
    rec.config_id = c.id;
    rec.config_name = c.name;
    rec.replicate = r;
    rec.truth_fingerprint = truth_print;
    try {
        const std::uint64_t seed = derive_seed(c.seed, c.id, static_cast<std::uint64_t>(r));
        const SyntheticData sim = generate_data(truth, c.n, seed);

        FitOptions fit_options = c.fit;
        fit_options.threads = inner_threads;
        auto start = Clock::now();
        const FableModel model = fit(sim.data, fit_options);
        rec.wall_clock_fit_s = seconds_since(start);
        rec.k_hat = model.k;
        rec.rho = model.rho;
        rec.tau_sq = model.tau_sq;

        rec.rel_spectral_error = rel_spectral_error(truth, posterior_mean(model));
        out.grid = asymptotic_intervals(model, pairs, c.alpha);
        rec.mean_coverage = fraction_covered(*out.grid, truth_values, rec.mean_width);

        if (options.n0 > 0) {
            const RngSpec rng{derive_seed(seed, static_cast<std::uint64_t>(StreamDomain::Sampler))};
            start = Clock::now();
            out.sample_grid = sample_quantile_intervals(model, options.n0, rng, pairs, c.alpha, inner_threads);
            rec.wall_clock_sample_s = seconds_since(start);
            rec.sample_mean_coverage = fraction_covered(*out.sample_grid, truth_values, rec.sample_mean_width);
            if (options.sample_mean_error) {
                rec.sample_mean_error =
                    rel_spectral_error(truth, sample_mean_covariance(model, options.n0, rng, inner_threads));
            }
        }
    } catch (const Error& e) {
        rec.ok = false;
        rec.error = std::string(to_string(e.code())) + ": " + e.what();
        out.grid.reset();
        out.sample_grid.reset();
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
        out.grid.reset();
        out.sample_grid.reset();
    }
    return out;
}

}  // namespace

void SimulationConfig::validate() const {
    if (n < 2) invalid("n must be at least 2");
    if (p < 1) invalid("p must be positive");
    if (k_true < 1) invalid("k_true must be positive");
    if (R < 1) invalid("R must be positive");
    if (!(spike_prob >= 0.0 && spike_prob <= 1.0)) invalid("spike_prob must lie in [0, 1]");
    if (!(slab_sd >= 0.0)) invalid("slab_sd must be nonnegative");
    if (!(sigma_lo > 0.0 && sigma_lo < sigma_hi)) invalid("need 0 < sigma_lo < sigma_hi");
    if (tracked_submatrix_size < 1 || tracked_submatrix_size > p) invalid("tracked_submatrix_size must lie in [1, p]");
    if (!(alpha > 0.0 && alpha < 1.0)) invalid("alpha must lie in (0, 1)");
}

StructuredCovariance generate_truth(const SimulationConfig& c, std::uint64_t seed) {
    c.validate();
    StructuredCovariance truth{MatrixXd(c.p, c.k_true), VectorXd(c.p)};
    for (Index j = 0; j < c.p; ++j) {
        // One distribution per substream: normal_distribution caches a spare draw.
        StreamRng g(seed, StreamDomain::Truth, static_cast<std::uint64_t>(j));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index l = 0; l < c.k_true; ++l) {
            const bool spike = g.uniform() < c.spike_prob;
            const double slab = c.slab_sd * normal(g);
            truth.loadings(j, l) = spike ? 0.0 : slab;
        }
        truth.diag(j) = c.sigma_lo + (c.sigma_hi - c.sigma_lo) * g.uniform();
    }
    return truth;
}

StructuredCovariance generate_truth(const SimulationConfig& c) {
    return generate_truth(c, derive_seed(c.seed, c.id));
}

MatrixXd generate_raw_data(const StructuredCovariance& truth, Index n, std::uint64_t seed, MatrixXd* factors) {
    truth.validate();
    const Index p = truth.dim();
    const Index k = truth.rank();
    MatrixXd m0(n, k);
    for (Index i = 0; i < n; ++i) {
        StreamRng g(seed, StreamDomain::DataFactors, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index l = 0; l < k; ++l) m0(i, l) = normal(g);
    }
    MatrixXd y = m0 * truth.loadings.transpose();
    for (Index j = 0; j < p; ++j) {
        StreamRng g(seed, StreamDomain::DataNoise, static_cast<std::uint64_t>(j));
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sd = std::sqrt(truth.diag(j));
        for (Index i = 0; i < n; ++i) y(i, j) += sd * normal(g);
    }
    if (factors) *factors = std::move(m0);
    return y;
}

SyntheticData generate_data(const StructuredCovariance& truth, Index n, std::uint64_t seed) {
    MatrixXd factors;
    MatrixXd y = generate_raw_data(truth, n, seed, &factors);
    return SyntheticData{center_columns(y), std::move(factors)};
}

double rel_spectral_error(const StructuredCovariance& truth, const StructuredCovariance& estimate) {
    truth.validate();
    if (estimate.dim() != truth.dim() || estimate.loadings.rows() != estimate.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "truth and estimate differ in dimension");
    }
    const Index p = truth.dim();
    auto diff = [&](const MatrixXd& x) -> MatrixXd { return truth.apply(x) - estimate.apply(x); };
    auto base = [&](const MatrixXd& x) -> MatrixXd { return truth.apply(x); };
    const double denom = spectral_norm(LinearOperator{p, p, base, base});
    return spectral_norm(LinearOperator{p, p, diff, diff}) / denom;
}

std::vector<Index> tracked_variables(Index p, Index count, std::uint64_t seed) {
    if (count < 0 || count > p) throw Error(ErrorCode::InvalidArgument, "tracked count must lie in [0, p]");
    std::vector<Index> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), Index{0});
    StreamRng g(seed, StreamDomain::Tracked, 0);
    for (Index i = p - 1; i > 0; --i) {
        const auto j = static_cast<Index>(g.uniform() * static_cast<double>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(std::min(j, i))]);
    }
    perm.resize(static_cast<std::size_t>(count));
    std::sort(perm.begin(), perm.end());
    return perm;
}

std::uint64_t fingerprint(const StructuredCovariance& cov) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const void* data, std::size_t bytes) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    const Index dims[2] = {cov.loadings.rows(), cov.loadings.cols()};
    mix(dims, sizeof dims);
    mix(cov.loadings.data(), sizeof(double) * static_cast<std::size_t>(cov.loadings.size()));
    mix(cov.diag.data(), sizeof(double) * static_cast<std::size_t>(cov.diag.size()));
    return h;
}

StudyResult run_study(const std::vector<SimulationConfig>& configs, const StudyOptions& options) {
    for (const auto& c : configs) c.validate();
    if (options.sample_mean_error && options.n0 == 0) {
        throw Error(ErrorCode::InvalidArgument, "sample-mean error audit needs n0 > 0");
    }
    const int threads = resolve_threads(options.threads);
    StudyResult result;

    for (const auto& c : configs) {
        const std::uint64_t truth_seed = derive_seed(c.seed, c.id);
        const StructuredCovariance truth = generate_truth(c, truth_seed);
        const std::uint64_t truth_print = fingerprint(truth);
        const auto pairs = submatrix_indices(tracked_variables(c.p, c.tracked_submatrix_size, truth_seed));
        std::vector<double> truth_values;
        truth_values.reserve(pairs.size());
        for (const auto& [u, v] : pairs) truth_values.push_back(truth.entry(u, v));

        // Replicates in parallel when there are enough of them; otherwise
        // give the threads to the linear algebra inside each replicate.
        const int outer = std::min(threads, c.R);
        const int inner = outer > 1 ? 1 : threads;
        std::vector<ReplicateOutput> outputs(static_cast<std::size_t>(c.R));
        parallel_for(outputs.size(), outer, [&](std::size_t i) {
            outputs[i] = run_replicate(c, truth, truth_print, pairs, truth_values, static_cast<int>(i) + 1, options,
                                       inner);
        });

        ConfigSummary summary;
        summary.config = c;
        CoverageAccumulator coverage(truth);
        std::optional<CoverageAccumulator> sample_coverage;
        if (options.n0 > 0) sample_coverage.emplace(truth);
        std::vector<double> errors;
        double k_sum = 0.0, rho_sum = 0.0, fit_sum = 0.0, sample_sum = 0.0;
        for (auto& out : outputs) {
            if (options.on_record) options.on_record(out.record);
            result.records.push_back(out.record);
            if (!out.record.ok) {
                ++summary.failed;
                continue;
            }
            ++summary.succeeded;
            errors.push_back(out.record.rel_spectral_error);
            k_sum += out.record.k_hat;
            rho_sum += out.record.rho;
            fit_sum += out.record.wall_clock_fit_s;
            sample_sum += out.record.wall_clock_sample_s;
            coverage.add(*out.grid);
            if (sample_coverage) sample_coverage->add(*out.sample_grid);
            out.grid.reset();
            out.sample_grid.reset();
        }
        if (summary.succeeded > 0) {
            const double s = summary.succeeded;
            summary.mean_error = std::accumulate(errors.begin(), errors.end(), 0.0) / s;
            summary.median_error = median_of(errors);
            summary.mean_k_hat = k_sum / s;
            summary.mean_rho = rho_sum / s;
            summary.mean_fit_s = fit_sum / s;
            summary.mean_sample_s = sample_sum / s;
            summary.coverage = coverage.report();
            if (sample_coverage) summary.sample_coverage = sample_coverage->report();
        }
        result.summaries.push_back(std::move(summary));
    }
    return result;
}

std::vector<SimulationConfig> preset_configs(const std::string& name, std::uint64_t seed, int replicates) {
    if (name != "paper-table1") throw Error(ErrorCode::InvalidArgument, "unknown preset '" + name + "'");
    const std::pair<Index, Index> cells[] = {{500, 1000}, {1000, 1000}, {500, 5000}, {1000, 5000}};
    std::vector<SimulationConfig> out;
    std::uint64_t id = 1;
    for (const auto& [n, p] : cells) {
        SimulationConfig c;
        c.name = "n" + std::to_string(n) + "_p" + std::to_string(p);
        c.id = id++;
        c.n = n;
        c.p = p;
        c.k_true = 10;
        c.R = replicates;
        c.seed = seed;
        out.push_back(c);
    }
    return out;
}

void write_records(std::ostream& out, const std::vector<MetricRecord>& records, bool timings) {
    out << "config_id,config,replicate,ok,rel_spectral_error,mean_coverage,mean_width,sample_mean_coverage,"
           "sample_mean_width,sample_mean_error,k_hat,rho,tau_sq,"
        << (timings ? "fit_s,sample_s," : "") << "truth_fingerprint,error\n";
    char buf[512];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%llu,%s,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.10g,%.10g,",
                      static_cast<unsigned long long>(r.config_id), r.config_name.c_str(), r.replicate, r.ok ? 1 : 0,
                      r.rel_spectral_error, r.mean_coverage, r.mean_width, r.sample_mean_coverage,
                      r.sample_mean_width, r.sample_mean_error, r.k_hat, r.rho, r.tau_sq);
        out << buf;
        if (timings) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,", r.wall_clock_fit_s, r.wall_clock_sample_s);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%016llx,", static_cast<unsigned long long>(r.truth_fingerprint));
        std::string error = r.error;
        std::replace(error.begin(), error.end(), ',', ';');
        std::replace(error.begin(), error.end(), '\n', ' ');
        out << buf << error << '\n';
    }
}

void write_summaries(std::ostream& out, const std::vector<ConfigSummary>& summaries, bool timings) {
    out << "config,n,p,R,succeeded,failed,mean_error,median_error,mean_coverage,median_coverage,mean_width,"
           "sample_mean_coverage,sample_mean_width,mean_k_hat,mean_rho"
        << (timings ? ",mean_fit_s,mean_sample_s" : "") << '\n';
    char buf[512];
    for (const auto& s : summaries) {
        const double sc = s.sample_coverage ? s.sample_coverage->mean_coverage : -1.0;
        const double sw = s.sample_coverage ? s.sample_coverage->mean_width : -1.0;
        std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f,%.6f",
                      s.config.name.c_str(), static_cast<long long>(s.config.n), static_cast<long long>(s.config.p),
                      s.config.R, s.succeeded, s.failed, s.mean_error, s.median_error, s.coverage.mean_coverage,
                      s.coverage.median_coverage, s.coverage.mean_width, sc, sw, s.mean_k_hat, s.mean_rho);
        out << buf;
        if (timings) {
            std::snprintf(buf, sizeof buf, ",%.4f,%.4f", s.mean_fit_s, s.mean_sample_s);
            out << buf;
        }
        out << '\n';
    }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InvalidArgument, "slope needs two or more points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

BenchmarkTable runtime_benchmark(const BenchmarkOptions& options) {
    std::vector<Index> grid = options.p_grid;
    if (grid.empty())
        for (Index p = 500; p <= 5000; p += 500) grid.push_back(p);
    if (options.repeats < 1 || options.n0 < 1) throw Error(ErrorCode::InvalidArgument, "repeats and n0 must be positive");

    const auto wall = Clock::now();
    BenchmarkTable table;
    table.n = options.n;
    table.n0 = options.n0;
    table.repeats = options.repeats;
    std::vector<double> ps, sample_times, totals;
    for (Index p : grid) {
        SimulationConfig c;
        c.n = options.n;
        c.p = p;
        c.k_true = options.k_true;
        c.tracked_submatrix_size = 1;
        const std::uint64_t seed = derive_seed(options.seed, static_cast<std::uint64_t>(p));
        const auto truth = generate_truth(c, seed);
        const auto sim = generate_data(truth, options.n, seed);

        std::vector<double> fit_t, sample_t, mean_t;
        FitOptions fit_options;
        fit_options.threads = options.threads;
        for (int rep = 0; rep < options.repeats; ++rep) {
            auto start = Clock::now();
            const FableModel model = fit(sim.data, fit_options);
            fit_t.push_back(seconds_since(start));

            double sink_check = 0.0;
            start = Clock::now();
            draw_samples(
                model, options.n0, RngSpec{derive_seed(seed, static_cast<std::uint64_t>(rep))},
                [&](const CovarianceSample& s) { sink_check += s.sigma_c_sq(0); }, options.threads);
            sample_t.push_back(seconds_since(start));
            if (!std::isfinite(sink_check)) warn("benchmark produced a non-finite draw");

            start = Clock::now();
            std::vector<IndexPair> diag(static_cast<std::size_t>(p));
            for (Index j = 0; j < p; ++j) diag[static_cast<std::size_t>(j)] = {j, j};
            const auto mean = posterior_mean(model);
            const auto exact_diag = posterior_mean_entries(model, diag);
            mean_t.push_back(seconds_since(start));
            if (mean.dim() != p || exact_diag.size() != diag.size()) warn("benchmark mean has the wrong size");
        }
        BenchmarkRow row;
        row.p = p;
        row.fit_s = median_of(fit_t);
        row.sample_s = median_of(sample_t);
        row.mean_s = median_of(mean_t);
        row.total_s = row.fit_s + row.sample_s;
        row.log10_total = std::log10(row.total_s);
        table.rows.push_back(row);
        ps.push_back(static_cast<double>(p));
        sample_times.push_back(row.sample_s);
        totals.push_back(row.total_s);
    }
    if (ps.size() >= 2) {
        table.sample_slope = loglog_slope(ps, sample_times);
        table.total_slope = loglog_slope(ps, totals);
    }
    table.wall_clock_s = seconds_since(wall);
    return table;
}

void write_benchmark(std::ostream& out, const BenchmarkTable& table) {
    out << "p,fit_s,sample_s,mean_s,total_s,log10_total_s\n";
    char buf[256];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%.6f,%.6f\n", static_cast<long long>(r.p), r.fit_s,
                      r.sample_s, r.mean_s, r.total_s, r.log10_total);
        out << buf;
    }
}

}  // namespace fable
