#include "fable/inference.hpp"

#include "fable/error.hpp"
#include "fable/normal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <string>

namespace fable {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
}

double center_value(const FableModel& model, const IndexPair& e) {
    double t = model.mu.row(e.u).dot(model.mu.row(e.v));
    if (e.u == e.v) t += model.delta_sq(e.u);
    return t;
}

IntervalGrid grid_skeleton(const FableModel& model, const std::vector<IndexPair>& indices, double alpha,
                           IntervalMethod method) {
    check_alpha(alpha);
    validate_indices(indices, model.p);
    const auto var = asymptotic_variances(model, indices);
    const double root_n = std::sqrt(static_cast<double>(model.n));
    IntervalGrid g;
    g.indices = indices;
    g.alpha = alpha;
    g.method = method;
    g.center.reserve(indices.size());
    g.asym_sd.reserve(indices.size());
    for (std::size_t e = 0; e < indices.size(); ++e) {
        g.center.push_back(center_value(model, indices[e]));
        g.asym_sd.push_back(std::sqrt(var.l0_sq[e]) / root_n);
    }
    return g;
}

}  // namespace

AsymptoticVariances asymptotic_variances(const FableModel& model, const std::vector<IndexPair>& indices) {
    validate_indices(indices, model.p);
    AsymptoticVariances out;
    out.indices = indices;
    out.l0_sq.reserve(indices.size());
    out.S0_sq.reserve(indices.size());
    const double rho_sq = model.rho * model.rho;
    for (const auto& [u, v] : indices) {
        const double mu_u = model.mu.row(u).squaredNorm();
        const double vu = model.V_sq(u);
        if (u == v) {
            out.l0_sq.push_back(2.0 * vu * vu + 4.0 * rho_sq * vu * mu_u);
            out.S0_sq.push_back(2.0 * (mu_u + vu) * (mu_u + vu));
        } else {
            const double mu_v = model.mu.row(v).squaredNorm();
            const double vv = model.V_sq(v);
            const double dot = model.mu.row(u).dot(model.mu.row(v));
            const double cross = vv * mu_u + vu * mu_v;
            out.l0_sq.push_back(rho_sq * cross);
            out.S0_sq.push_back(cross + mu_u * mu_v + dot * dot);
        }
    }
    return out;
}

IntervalGrid asymptotic_intervals(const FableModel& model, const std::vector<IndexPair>& indices, double alpha) {
    IntervalGrid g = grid_skeleton(model, indices, alpha, IntervalMethod::asymptotic);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    g.lower.resize(g.size());
    g.upper.resize(g.size());
    for (std::size_t e = 0; e < g.size(); ++e) {
        const double half = z * g.asym_sd[e];
        g.lower[e] = g.center[e] - half;
        g.upper[e] = g.center[e] + half;
    }
    return g;
}

IntervalGrid sample_quantile_intervals(const FableModel& model, std::uint64_t n0, const RngSpec& rng,
                                       const std::vector<IndexPair>& indices, double alpha, int threads) {
    check_alpha(alpha);
    if (n0 < kMinQuantileSamples) {
        throw Error(ErrorCode::TooFewSamples, "sample-quantile intervals need at least " +
                                                  std::to_string(kMinQuantileSamples) + " draws");
    }
    IntervalGrid g = grid_skeleton(model, indices, alpha, IntervalMethod::sample_quantile);
    const auto stats = sample_entry_stats(model, n0, rng, indices, {alpha / 2.0, 1.0 - alpha / 2.0}, threads);
    g.lower.resize(g.size());
    g.upper.resize(g.size());
    for (std::size_t e = 0; e < g.size(); ++e) {
        g.lower[e] = stats.entries[e].quantiles[0];
        g.upper[e] = stats.entries[e].quantiles[1];
    }
    return g;
}

IntervalGrid sample_quantile_intervals(const FableModel& model, const std::vector<CovarianceSample>& samples,
                                       const std::vector<IndexPair>& indices, double alpha) {
    check_alpha(alpha);
    if (samples.size() < kMinQuantileSamples) {
        throw Error(ErrorCode::TooFewSamples, "sample-quantile intervals need at least " +
                                                  std::to_string(kMinQuantileSamples) + " draws");
    }
    IntervalGrid g = grid_skeleton(model, indices, alpha, IntervalMethod::sample_quantile);
    g.lower.resize(g.size());
    g.upper.resize(g.size());
    std::vector<double> values(samples.size());
    for (std::size_t e = 0; e < g.size(); ++e) {
        for (std::size_t t = 0; t < samples.size(); ++t) {
            const auto& s = samples[t];
            if (s.lambda_c.rows() != model.p || s.lambda_c.cols() != model.k) {
                throw Error(ErrorCode::DimensionMismatch, "sample shape does not match the model");
            }
            values[t] = s.entry(indices[e].u, indices[e].v);
        }
        std::sort(values.begin(), values.end());
        g.lower[e] = sorted_quantile(values, alpha / 2.0);
        g.upper[e] = sorted_quantile(values, 1.0 - alpha / 2.0);
    }
    return g;
}

IntervalGrid credible_intervals(const FableModel& model, const std::vector<IndexPair>& indices, double alpha,
                                IntervalMethod method, std::uint64_t n0, const RngSpec& rng, int threads) {
    if (method == IntervalMethod::asymptotic) return asymptotic_intervals(model, indices, alpha);
    return sample_quantile_intervals(model, n0, rng, indices, alpha, threads);
}

CoverageAccumulator::CoverageAccumulator(const StructuredCovariance& truth) : truth_(truth) {}

void CoverageAccumulator::add(const IntervalGrid& grid) {
    if (replicates_ == 0) {
        for (const auto& [u, v] : grid.indices) {
            if (u < 0 || v < 0 || u >= truth_.dim() || v >= truth_.dim()) {
                throw Error(ErrorCode::DimensionMismatch, "interval index outside the truth dimension");
            }
        }
        indices_ = grid.indices;
        truth_values_.reserve(indices_.size());
        for (const auto& [u, v] : indices_) truth_values_.push_back(truth_.entry(u, v));
        hits_.assign(indices_.size(), 0);
        width_sum_.assign(indices_.size(), 0.0);
    } else if (grid.indices != indices_) {
        throw Error(ErrorCode::IndexSetMismatch, "interval grids do not share one index set");
    }
    if (grid.lower.size() != indices_.size() || grid.upper.size() != indices_.size()) {
        throw Error(ErrorCode::DimensionMismatch, "interval bounds do not match the index list");
    }
    for (std::size_t e = 0; e < indices_.size(); ++e) {
        if (grid.lower[e] <= truth_values_[e] && truth_values_[e] <= grid.upper[e]) ++hits_[e];
        width_sum_[e] += grid.upper[e] - grid.lower[e];
    }
    ++replicates_;
}

CoverageReport CoverageAccumulator::report() const {
    CoverageReport r;
    r.indices = indices_;
    r.replicates = replicates_;
    if (replicates_ == 0 || indices_.empty()) return r;
    const double reps = static_cast<double>(replicates_);
    r.coverage.reserve(indices_.size());
    double width = 0.0;
    for (std::size_t e = 0; e < indices_.size(); ++e) {
        r.coverage.push_back(static_cast<double>(hits_[e]) / reps);
        width += width_sum_[e] / reps;
    }
    const double m = static_cast<double>(indices_.size());
    r.mean_coverage = std::accumulate(r.coverage.begin(), r.coverage.end(), 0.0) / m;
    r.mean_width = width / m;
    std::vector<double> sorted = r.coverage;
    std::sort(sorted.begin(), sorted.end());
    r.median_coverage = sorted_quantile(sorted, 0.5);
    return r;
}

CoverageReport coverage_audit(const StructuredCovariance& truth, const std::vector<IntervalGrid>& grids) {
    CoverageAccumulator acc(truth);
    for (const auto& g : grids) acc.add(g);
    return acc.report();
}

double fitted_loglik(const FableModel& model, const DataMatrix& data) {
    if (data.cols() != model.p) throw Error(ErrorCode::DimensionMismatch, "data and model disagree on p");
    return gaussian_loglik(data, posterior_mean(model));
}

VectorXd variance_explained(const FableModel& model) {
    const VectorXd signal = model.mu.rowwise().squaredNorm();
    return signal.array() / (signal.array() + model.delta_sq.array());
}

double predictive_coverage(const FableModel& model, const DataMatrix& data, double alpha) {
    check_alpha(alpha);
    if (data.cols() != model.p) throw Error(ErrorCode::DimensionMismatch, "data and model disagree on p");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const VectorXd half = z * (model.mu.rowwise().squaredNorm() + model.delta_sq).array().sqrt();
    const MatrixXd& y = data.values();
    std::uint64_t inside = 0;
    for (Index j = 0; j < y.cols(); ++j)
        for (Index i = 0; i < y.rows(); ++i)
            if (std::abs(y(i, j)) <= half(j)) ++inside;
    return static_cast<double>(inside) / static_cast<double>(y.size());
}

double oos_loglik(const DataMatrix& train, const DataMatrix& test, const std::vector<Index>& targets,
                  const std::vector<Index>& extras_in, const FitOptions& options) {
    if (targets.empty()) throw Error(ErrorCode::EmptyTarget, "target index set is empty");
    std::vector<Index> extras = extras_in;
    std::sort(extras.begin(), extras.end());
    std::set<Index> seen;
    for (Index j : targets) {
        if (j < 0 || j >= train.cols()) throw Error(ErrorCode::IndexOutOfRange, "target index out of range");
        if (!seen.insert(j).second) throw Error(ErrorCode::OverlappingIndexSets, "duplicate target index");
    }
    for (Index j : extras) {
        if (j < 0 || j >= train.cols()) throw Error(ErrorCode::IndexOutOfRange, "extra index out of range");
        if (!seen.insert(j).second) {
            throw Error(ErrorCode::OverlappingIndexSets, "index " + std::to_string(j) + " appears twice");
        }
    }
    const auto q = static_cast<Index>(targets.size());
    if (test.cols() != train.cols() && test.cols() != q) {
        throw Error(ErrorCode::DimensionMismatch, "test matrix must hold all train columns or only the targets");
    }

    std::vector<Index> columns = targets;
    columns.insert(columns.end(), extras.begin(), extras.end());
    MatrixXd subset(train.rows(), static_cast<Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) subset.col(static_cast<Index>(c)) = train.values().col(columns[c]);

    VectorXd target_means(q);
    DataMatrix fitted_on = [&] {
        if (train.centered()) {
            VectorXd means(static_cast<Index>(columns.size()));
            for (std::size_t c = 0; c < columns.size(); ++c) means(static_cast<Index>(c)) = (*train.column_means())(columns[c]);
            return DataMatrix::adopt_centered(subset, means);
        }
        return center_columns(subset);
    }();
    target_means = fitted_on.column_means()->head(q);

    const FableModel model = fit(fitted_on, options);
    StructuredCovariance block{model.mu.topRows(q), model.delta_sq.head(q)};

    MatrixXd rows(test.rows(), q);
    if (test.cols() == q) {
        rows = test.values();
    } else {
        for (Index c = 0; c < q; ++c) rows.col(c) = test.values().col(targets[static_cast<std::size_t>(c)]);
    }
    if (!test.centered()) rows.rowwise() -= target_means.transpose();
    return gaussian_loglik(rows, block);
}

void write_interval_grid(std::ostream& out, const IntervalGrid& grid) {
    out << "u,v,center,lower,upper,asym_sd,method\n";
    const auto method = to_string(grid.method);
    char buf[160];
    for (std::size_t e = 0; e < grid.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g,%.17g,",
                      static_cast<long long>(grid.indices[e].u), static_cast<long long>(grid.indices[e].v),
                      grid.center[e], grid.lower[e], grid.upper[e], grid.asym_sd[e]);
        out << buf << method << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing interval grid");
}

std::string_view to_string(IntervalMethod method) {
    return method == IntervalMethod::asymptotic ? "asymptotic" : "sample_quantile";
}

IntervalMethod parse_interval_method(std::string_view text) {
    if (text == "asymptotic") return IntervalMethod::asymptotic;
    if (text == "sample_quantile" || text == "sample") return IntervalMethod::sample_quantile;
    throw Error(ErrorCode::InvalidArgument, "unknown interval method '" + std::string(text) + "'");
}

}  // namespace fable
