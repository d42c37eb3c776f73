#include "fable/sampler.hpp"

#include "fable/error.hpp"
#include "fable/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace fable {

MatrixXd CovarianceSample::dense() const {
    MatrixXd psi = lambda_c * lambda_c.transpose();
    psi.diagonal() += sigma_c_sq;
    return psi;
}

namespace {

void draw_row(const FableModel& model, std::uint64_t t, const RngSpec& rng, Index j, double scale,
              CovarianceSample& out) {
    StreamRng g = rng.stream(t, static_cast<std::uint64_t>(j));
    std::gamma_distribution<double> gamma(model.gamma_n / 2.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Rate parameterization: IG(a, b) = b / Gamma(a, 1).
    const double sigma_sq = (model.gamma_n * model.delta_sq(j) / 2.0) / gamma(g);
    out.sigma_c_sq(j) = sigma_sq;
    const double sd = scale * std::sqrt(sigma_sq);
    for (Index l = 0; l < model.k; ++l) out.lambda_c(j, l) = model.mu(j, l) + sd * normal(g);
}

CovarianceSample draw_into(const FableModel& model, std::uint64_t t, const RngSpec& rng) {
    CovarianceSample s;
    s.index = t;
    s.lambda_c.resize(model.p, model.k);
    s.sigma_c_sq.resize(model.p);
    const double scale = model.rho / std::sqrt(model.shrinkage());
    for (Index j = 0; j < model.p; ++j) draw_row(model, t, rng, j, scale, s);
    return s;
}

}  // namespace

CovarianceSample draw_sample(const FableModel& model, std::uint64_t t, const RngSpec& rng) {
    return draw_into(model, t, rng);
}

void draw_samples(const FableModel& model, std::uint64_t n0, const RngSpec& rng, const SampleSink& sink,
                  int threads) {
    if (n0 == 0) throw Error(ErrorCode::InvalidSampleCount, "N0 must be at least 1");
    const int workers = resolve_threads(threads);
    const double scale = model.rho / std::sqrt(model.shrinkage());

    // Small models: parallelize across samples. Large p: across variables
    // within each sample, which keeps memory at one batch of p x k.
    const bool across_samples = workers > 1 && model.p < 4096;
    const std::uint64_t batch = across_samples ? static_cast<std::uint64_t>(workers) * 4 : 1;
    std::vector<CovarianceSample> buffer;

    for (std::uint64_t start = 1; start <= n0; start += batch) {
        const std::uint64_t count = std::min(batch, n0 - start + 1);
        buffer.assign(count, CovarianceSample{});
        if (across_samples) {
            parallel_for(count, workers, [&](std::size_t i) { buffer[i] = draw_into(model, start + i, rng); });
        } else {
            auto& s = buffer[0];
            s.index = start;
            s.lambda_c.resize(model.p, model.k);
            s.sigma_c_sq.resize(model.p);
            parallel_for(static_cast<std::size_t>(model.p), workers,
                         [&](std::size_t j) { draw_row(model, start, rng, static_cast<Index>(j), scale, s); });
        }
        for (const auto& s : buffer) {
            try {
                sink(s);
            } catch (const std::exception& e) {
                throw Error(ErrorCode::SinkFailure,
                            "sample sink failed at t=" + std::to_string(s.index) + ": " + e.what());
            } catch (...) {
                throw Error(ErrorCode::SinkFailure, "sample sink failed at t=" + std::to_string(s.index));
            }
        }
    }
}

StructuredCovariance posterior_mean(const FableModel& model) {
    return StructuredCovariance{model.mu, model.delta_sq};
}

void validate_indices(const std::vector<IndexPair>& indices, Index p) {
    for (const auto& [u, v] : indices) {
        if (u < 0 || v < 0 || u >= p || v >= p) {
            throw Error(ErrorCode::IndexOutOfRange, "index (" + std::to_string(u) + ", " + std::to_string(v) +
                                                        ") outside a " + std::to_string(p) + "-variable model");
        }
    }
}

std::vector<double> posterior_mean_entries(const FableModel& model, const std::vector<IndexPair>& indices) {
    validate_indices(indices, model.p);
    const bool needs_diag = std::any_of(indices.begin(), indices.end(), [](const IndexPair& e) { return e.u == e.v; });
    if (needs_diag && model.gamma_n <= 2.0) {
        throw Error(ErrorCode::GammaTooSmall, "gamma_n must exceed 2 for the exact diagonal mean");
    }
    const double inflation = 1.0 + model.k * model.rho * model.rho / model.shrinkage();
    std::vector<double> out;
    out.reserve(indices.size());
    for (const auto& [u, v] : indices) {
        double value = model.mu.row(u).dot(model.mu.row(v));
        if (u == v) value += inflation * model.gamma_n * model.delta_sq(u) / (model.gamma_n - 2.0);
        out.push_back(value);
    }
    return out;
}

std::vector<IndexPair> submatrix_indices(const std::vector<Index>& variables) {
    std::vector<IndexPair> out;
    out.reserve(variables.size() * variables.size());
    for (Index u : variables)
        for (Index v : variables) out.push_back({u, v});
    return out;
}

double sorted_quantile(const std::vector<double>& sorted, double level) {
    if (sorted.empty()) throw Error(ErrorCode::TooFewSamples, "quantile of an empty sample");
    if (!(level >= 0.0 && level <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0, 1]");
    const double h = level * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EntryStatsResult sample_entry_stats(const FableModel& model, std::uint64_t n0, const RngSpec& rng,
                                    const std::vector<IndexPair>& indices,
                                    const std::vector<double>& levels, int threads) {
    validate_indices(indices, model.p);
    for (double level : levels) {
        if (!(level >= 0.0 && level <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0, 1]");
    }
    const std::size_t m = indices.size();
    const bool exact = n0 <= kExactQuantileLimit;
    const std::size_t cap = exact ? static_cast<std::size_t>(n0) : static_cast<std::size_t>(kExactQuantileLimit);

    std::vector<double> mean(m, 0.0), m2(m, 0.0);
    std::vector<std::vector<double>> kept(levels.empty() ? 0 : m);
    for (auto& v : kept) v.reserve(cap);
    std::vector<StreamRng> reservoir_rng;
    if (!exact && !levels.empty()) {
        reservoir_rng.reserve(m);
        for (std::size_t e = 0; e < m; ++e) reservoir_rng.emplace_back(rng.seed, StreamDomain::Reservoir, e);
    }

    std::uint64_t seen = 0;
    draw_samples(
        model, n0, rng,
        [&](const CovarianceSample& s) {
            ++seen;
            for (std::size_t e = 0; e < m; ++e) {
                const double x = s.entry(indices[e].u, indices[e].v);
                const double d = x - mean[e];
                mean[e] += d / static_cast<double>(seen);
                m2[e] += d * (x - mean[e]);
                if (kept.empty()) continue;
                if (seen <= cap) {
                    kept[e].push_back(x);
                } else {
                    // Algorithm R: keep x with probability cap / seen.
                    const auto r = static_cast<std::uint64_t>(reservoir_rng[e].uniform() * static_cast<double>(seen));
                    if (r < cap) kept[e][r] = x;
                }
            }
        },
        threads);

    EntryStatsResult result;
    result.levels = levels;
    result.exact_quantiles = exact;
    result.entries.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        auto& out = result.entries[e];
        out.mean = mean[e];
        out.sd = seen > 1 ? std::sqrt(m2[e] / static_cast<double>(seen - 1)) : 0.0;
        if (kept.empty()) continue;
        std::sort(kept[e].begin(), kept[e].end());
        for (double level : levels) out.quantiles.push_back(sorted_quantile(kept[e], level));
    }
    return result;
}

}  // namespace fable
