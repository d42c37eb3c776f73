#include "fable/error.hpp"
#include "fable/simharness.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace fable;

namespace {

SimulationConfig small_config(std::uint64_t seed) {
    SimulationConfig c;
    c.name = "small";
    c.id = 3;
    c.n = 60;
    c.p = 40;
    c.k_true = 3;
    c.R = 4;
    c.seed = seed;
    c.tracked_submatrix_size = 8;
    return c;
}

std::string records_csv(const StudyResult& r) {
    std::ostringstream out;
    write_records(out, r.records);
    write_summaries(out, r.summaries);
    return out.str();
}

}  // namespace

TEST_CASE("spike probability one gives a diagonal truth") {
    auto c = small_config(1);
    c.spike_prob = 1.0;
    const auto truth = generate_truth(c);
    CHECK(truth.loadings.cwiseAbs().maxCoeff() == 0.0);
    CHECK(truth.diag.minCoeff() >= c.sigma_lo);
    CHECK(truth.diag.maxCoeff() <= c.sigma_hi);
}

TEST_CASE("truth generator marginals") {
    SimulationConfig c;
    c.p = 50000;
    c.k_true = 2;
    c.seed = 2;
    const auto truth = generate_truth(c);
    const double zeros = static_cast<double>((truth.loadings.array() == 0.0).count()) / 100000.0;
    CHECK(std::abs(zeros - 0.5) < 0.01);
    CHECK(std::abs(truth.diag.mean() - 2.75) < 0.02);
    double ss = 0.0;
    Index nonzero = 0;
    for (Index j = 0; j < truth.loadings.rows(); ++j)
        for (Index h = 0; h < 2; ++h)
            if (truth.loadings(j, h) != 0.0) {
                ss += truth.loadings(j, h) * truth.loadings(j, h);
                ++nonzero;
            }
    CHECK(std::sqrt(ss / static_cast<double>(nonzero)) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("data generator reproduces the covariance") {
    SimulationConfig c;
    c.p = 5;
    c.k_true = 2;
    c.tracked_submatrix_size = 5;
    c.spike_prob = 0.0;
    c.seed = 3;
    const auto truth = generate_truth(c);
    const Index n = 100000;
    const auto sim = generate_data(truth, n, 4);
    CHECK(sim.factors.rows() == n);
    CHECK(sim.factors.cols() == 2);
    const MatrixXd s = sim.data.values().transpose() * sim.data.values() / static_cast<double>(n);
    const MatrixXd psi = oracle::dense(truth);
    for (Index u = 0; u < 5; ++u)
        for (Index v = 0; v < 5; ++v) {
            const double se = std::sqrt((psi(u, u) * psi(v, v) + psi(u, v) * psi(u, v)) / static_cast<double>(n));
            CHECK(std::abs(s(u, v) - psi(u, v)) < 3.0 * se);
        }
}

TEST_CASE("zero loadings give independent columns with the noise variances") {
    auto c = small_config(5);
    c.spike_prob = 1.0;
    c.p = 6;
    c.tracked_submatrix_size = 6;
    const auto truth = generate_truth(c);
    const auto sim = generate_data(truth, 50000, 6);
    for (Index j = 0; j < 6; ++j) {
        const double var = sim.data.values().col(j).squaredNorm() / 50000.0;
        CHECK(std::abs(var - truth.diag(j)) < 3.0 * truth.diag(j) * std::sqrt(2.0 / 50000.0));
    }
}

TEST_CASE("generators are deterministic in the seed") {
    const auto c = small_config(7);
    const auto a = generate_truth(c);
    const auto b = generate_truth(c);
    CHECK(fingerprint(a) == fingerprint(b));
    auto other = c;
    other.id = 4;
    CHECK(fingerprint(generate_truth(other)) != fingerprint(a));
    CHECK(generate_raw_data(a, 30, 9) == generate_raw_data(a, 30, 9));
    CHECK(generate_raw_data(a, 30, 9) != generate_raw_data(a, 30, 10));
    MatrixXd factors;
    const MatrixXd raw = generate_raw_data(a, 30, 9, &factors);
    const auto centered = generate_data(a, 30, 9);
    CHECK(factors == centered.factors);
    CHECK((center_columns(raw).values() - centered.data.values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("relative spectral error") {
    std::mt19937_64 rng(8);
    StructuredCovariance truth{oracle::gaussian(10, 3, rng), VectorXd::Constant(10, 1.5)};
    CHECK(rel_spectral_error(truth, truth) < 1e-12);
    StructuredCovariance twice{std::sqrt(2.0) * truth.loadings, 2.0 * truth.diag};
    CHECK(rel_spectral_error(truth, twice) == doctest::Approx(1.0).epsilon(1e-8));
    StructuredCovariance other{oracle::gaussian(10, 2, rng), oracle::gaussian(10, 1, rng).col(0).cwiseAbs()};
    const MatrixXd d0 = oracle::dense(truth);
    const double expected = oracle::dense_spectral_norm(d0 - oracle::dense(other)) / oracle::dense_spectral_norm(d0);
    CHECK(rel_spectral_error(truth, other) == doctest::Approx(expected).epsilon(1e-8));
    StructuredCovariance wrong_p{MatrixXd::Zero(9, 1), VectorXd::Ones(9)};
    CHECK_ERROR_CODE(rel_spectral_error(truth, wrong_p), ErrorCode::DimensionMismatch);
}

TEST_CASE("tracked variables") {
    const auto a = tracked_variables(1000, 100, 11);
    CHECK(a.size() == 100);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::set<Index>(a.begin(), a.end()).size() == 100);
    CHECK(a.front() >= 0);
    CHECK(a.back() < 1000);
    CHECK(tracked_variables(1000, 100, 11) == a);
    CHECK(tracked_variables(1000, 100, 12) != a);
    const auto all = tracked_variables(7, 7, 1);
    CHECK(all == std::vector<Index>{0, 1, 2, 3, 4, 5, 6});
    CHECK_ERROR_CODE(tracked_variables(5, 6, 1), ErrorCode::InvalidArgument);
}

TEST_CASE("config validation and presets") {
    auto c = small_config(1);
    CHECK_NOTHROW(c.validate());
    c.spike_prob = 1.5;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::InvalidArgument);
    c = small_config(1);
    c.tracked_submatrix_size = 41;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::InvalidArgument);
    c = small_config(1);
    c.sigma_lo = 0.0;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::InvalidArgument);

    const auto presets = preset_configs("paper-table1", 5, 25);
    REQUIRE(presets.size() == 4);
    const std::vector<std::pair<Index, Index>> cells = {{500, 1000}, {1000, 1000}, {500, 5000}, {1000, 5000}};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(presets[i].n == cells[i].first);
        CHECK(presets[i].p == cells[i].second);
        CHECK(presets[i].k_true == 10);
        CHECK(presets[i].R == 25);
        CHECK(presets[i].tracked_submatrix_size == 100);
        CHECK(presets[i].id == i + 1);
    }
    CHECK_ERROR_CODE(preset_configs("nope", 1, 1), ErrorCode::InvalidArgument);
}

TEST_CASE("study records, summaries and determinism") {
    const auto c = small_config(13);
    std::vector<int> seen;
    StudyOptions options;
    options.threads = 1;
    options.on_record = [&](const MetricRecord& r) { seen.push_back(r.replicate); };
    const auto a = run_study({c}, options);
    CHECK(seen == std::vector<int>{1, 2, 3, 4});
    REQUIRE(a.records.size() == 4);
    REQUIRE(a.summaries.size() == 1);
    const auto truth_fp = fingerprint(generate_truth(c));
    std::vector<double> errors;
    for (const auto& r : a.records) {
        CHECK(r.ok);
        CHECK(r.truth_fingerprint == truth_fp);
        CHECK(r.rel_spectral_error > 0.0);
        CHECK(r.mean_coverage >= 0.0);
        CHECK(r.mean_coverage <= 1.0);
        CHECK(r.rho >= 1.0);
        CHECK(r.sample_mean_coverage == -1.0);
        errors.push_back(r.rel_spectral_error);
    }
    const auto& s = a.summaries[0];
    CHECK(s.succeeded == 4);
    CHECK(s.failed == 0);
    double mean = 0.0;
    for (double e : errors) mean += e / 4.0;
    CHECK(s.mean_error == doctest::Approx(mean).epsilon(1e-12));
    std::sort(errors.begin(), errors.end());
    CHECK(s.median_error == doctest::Approx(0.5 * (errors[1] + errors[2])).epsilon(1e-12));
    CHECK(s.coverage.replicates == 4);
    CHECK(s.coverage.indices.size() == 64);
    CHECK_FALSE(s.sample_coverage.has_value());

    StudyOptions threaded;
    threaded.threads = 3;
    const auto b = run_study({c}, threaded);
    CHECK(records_csv(a) == records_csv(b));
}

TEST_CASE("study with sample-quantile intervals") {
    auto c = small_config(14);
    c.R = 2;
    StudyOptions options;
    options.n0 = 200;
    options.sample_mean_error = true;
    const auto r = run_study({c}, options);
    REQUIRE(r.records.size() == 2);
    for (const auto& rec : r.records) {
        CHECK(rec.sample_mean_coverage >= 0.0);
        CHECK(rec.sample_mean_width > 0.0);
        CHECK(rec.sample_mean_error > 0.0);
    }
    REQUIRE(r.summaries[0].sample_coverage.has_value());
    CHECK(r.summaries[0].sample_coverage->replicates == 2);
}

TEST_CASE("replicate failures are recorded") {
    auto c = small_config(15);
    c.R = 2;
    c.fit.k = 500;
    const auto r = run_study({c});
    REQUIRE(r.records.size() == 2);
    for (const auto& rec : r.records) {
        CHECK_FALSE(rec.ok);
        CHECK(rec.error.find("RankOutOfRange") != std::string::npos);
    }
    CHECK(r.summaries[0].failed == 2);
    CHECK(r.summaries[0].succeeded == 0);
}

TEST_CASE("table output omits timings unless asked") {
    const auto r = run_study({small_config(16)});
    std::ostringstream plain, timed;
    write_records(plain, r.records);
    write_records(timed, r.records, true);
    const std::string header = plain.str().substr(0, plain.str().find('\n'));
    const std::string timed_header = timed.str().substr(0, timed.str().find('\n'));
    CHECK(header.find("fit_s") == std::string::npos);
    CHECK(timed_header.find("fit_s,sample_s") != std::string::npos);
    const std::string text = plain.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("log-log slope") {
    CHECK(loglog_slope({1.0, 2.0, 4.0, 8.0}, {3.0, 12.0, 48.0, 192.0}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(loglog_slope({10.0, 100.0}, {5.0, 50.0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_ERROR_CODE(loglog_slope({1.0}, {1.0}), ErrorCode::InvalidArgument);
}

TEST_CASE("runtime benchmark sanity") {
    BenchmarkOptions options;
    options.n = 100;
    options.p_grid = {200, 1600};
    options.n0 = 50;
    options.repeats = 1;
    const auto table = runtime_benchmark(options);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) {
        CHECK(row.fit_s > 0.0);
        CHECK(row.sample_s > 0.0);
        CHECK(row.total_s == doctest::Approx(row.fit_s + row.sample_s));
        CHECK(row.log10_total == doctest::Approx(std::log10(row.total_s)));
    }
    CHECK(table.rows[1].sample_s > table.rows[0].sample_s);
    CHECK(std::isfinite(table.sample_slope));
    std::ostringstream out;
    write_benchmark(out, table);
    CHECK(out.str().rfind("p,", 0) == 0);
}
