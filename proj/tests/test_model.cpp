#include "fable/error.hpp"
#include "fable/model.hpp"
#include "fable/model_io.hpp"
#include "fable/simharness.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

using namespace fable;

namespace {

SimulationConfig standard_config(Index n, Index p, std::uint64_t seed) {
    SimulationConfig c;
    c.n = n;
    c.p = p;
    c.k_true = 10;
    c.seed = seed;
    c.tracked_submatrix_size = 1;
    return c;
}

DataMatrix standard_data(Index n, Index p, std::uint64_t seed, StructuredCovariance* truth = nullptr) {
    const auto c = standard_config(n, p, seed);
    const auto t = generate_truth(c);
    if (truth) *truth = t;
    return generate_data(t, n, derive_seed(seed, 99)).data;
}

bool same_bytes(const MatrixXd& a, const MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("select_K0 small spectra") {
    VectorXd s(3);
    s << 10, 0, 0;
    CHECK(select_K0(s, 0.5) == 1);
    VectorXd t(4);
    t << 4, 3, 2, 1;
    CHECK(select_K0(t, 0.5) == 2);
    CHECK(select_K0(t, 0.4) == 1);
    CHECK(select_K0(t, 0.7) == 2);
    CHECK(select_K0(t, 0.71) == 3);
    CHECK(select_K0(VectorXd::Ones(4), 1.0) == 4);
    CHECK_ERROR_CODE(select_K0(VectorXd::Zero(3), 0.5), ErrorCode::AllZeroSpectrum);
    CHECK_ERROR_CODE(select_K0(t, 0.0), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(select_K0(t, 1.5), ErrorCode::InvalidArgument);
}

TEST_CASE("select_K0 agrees with a direct cumulative scan") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        VectorXd s = oracle::gaussian(12, 1, rng).col(0).cwiseAbs();
        std::sort(s.data(), s.data() + s.size(), std::greater<>());
        const double S0 = 0.05 + 0.95 * unif(rng);
        int expected = 0;
        for (int K = 1; K <= 12 && expected == 0; ++K)
            if (s.head(K).sum() / s.sum() >= S0) expected = K;
        CHECK(select_K0(s, S0) == expected);
    }
}

TEST_CASE("JIC penalty and monotonicity") {
    CHECK(jic_penalty(3, 100, 50) == doctest::Approx(3.0 * 100.0 * std::log(50.0)).epsilon(1e-15));
    CHECK(jic_penalty(3, 50, 100) == jic_penalty(3, 100, 50));
    for (int k = 1; k < 20; ++k) CHECK(jic_penalty(k + 1, 80, 60) > jic_penalty(k, 80, 60));

    std::mt19937_64 rng(2);
    const auto data = center_columns(oracle::gaussian(30, 20, rng));
    const auto svd = truncated_svd(data, 20);
    for (int k = 1; k < 20; ++k) CHECK(svd.residual_sq(k + 1) <= svd.residual_sq(k));
    const double np = 30.0 * 20.0;
    CHECK(jic(data, svd, 4) == doctest::Approx(np * std::log(svd.residual_sq(4) / np) + jic_penalty(4, 30, 20)));
}

TEST_CASE("JIC picks rank one for rank-one data plus tiny noise") {
    std::mt19937_64 rng(3);
    const MatrixXd y = 5.0 * oracle::gaussian(60, 1, rng) * oracle::gaussian(1, 40, rng) + 1e-3 * oracle::gaussian(60, 40, rng);
    const auto data = center_columns(y);
    const auto svd = truncated_svd(data, 40);
    std::vector<double> values;
    for (int k = 1; k <= 5; ++k) values.push_back(jic(data, svd, k));
    CHECK(std::min_element(values.begin(), values.end()) - values.begin() == 0);
}

TEST_CASE("JIC prefers rank one over rank five on pure noise") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const auto data = center_columns(oracle::gaussian(100, 50, rng));
        const auto svd = truncated_svd(data, 50);
        if (jic(data, svd, 1) < jic(data, svd, 5)) ++wins;
    }
    CHECK(wins >= 95);
}

TEST_CASE("JIC on exactly low-rank data") {
    std::mt19937_64 rng(4);
    const MatrixXd y = oracle::gaussian(20, 2, rng) * oracle::gaussian(2, 10, rng);
    const auto data = center_columns(y);
    oracle::CaptureWarnings warnings;
    const auto sel = select_rank(data, 0.75);
    CHECK(sel.k_hat == 2);
    CHECK(sel.K0 >= 2);
    CHECK(std::isinf(sel.jic_values[1].second));
    CHECK_FALSE(warnings.messages.empty());

    MatrixXd square(3, 2);
    square << 1, 2, -1, 0, 0, -2;
    const auto sq = center_columns(square);
    CHECK_ERROR_CODE(jic(sq, truncated_svd(sq, 2), 2), ErrorCode::ZeroResidual);
}

TEST_CASE("select_rank bounds and tie-breaking") {
    std::mt19937_64 rng(5);
    const auto data = center_columns(oracle::gaussian(40, 30, rng));
    for (double S0 : {0.05, 0.3, 0.75, 1.0}) {
        const auto sel = select_rank(data, S0);
        CHECK(sel.k_hat >= 1);
        CHECK(sel.k_hat <= sel.K0);
        CHECK(sel.K0 <= 30);
        const auto best = std::min_element(sel.jic_values.begin(), sel.jic_values.end(),
                                           [](const auto& a, const auto& b) { return a.second < b.second; });
        CHECK(best->first == sel.k_hat);
    }
    CHECK(select_rank(data, 0.05).K0 <= 2);
    // Both overloads agree.
    const auto a = select_rank(data, 0.75);
    const auto b = select_rank(data, truncated_svd(data, 30), 0.75);
    CHECK(a.k_hat == b.k_hat);
    CHECK(a.K0 == b.K0);
}

TEST_CASE("select_rank recovers k = 10 on the standard generator") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto data = standard_data(500, 1000, 50 + seed);
        if (select_rank(data, 0.75).k_hat == 10) ++hits;
    }
    CHECK(hits >= 18);
}

TEST_CASE("estimate_tau_sq against explicit projectors") {
    MatrixXd y(6, 3);
    y << 1.0, 2.0, -0.5, -2.0, 0.5, 1.5, 0.5, -1.0, 2.0, 1.5, 1.0, -1.0, -0.5, -2.0, 0.5, -0.5, -0.5, -2.5;
    const auto data = center_columns(y);
    const auto svd = truncated_svd(data, 1);
    const auto est = estimate_tau_sq(data, svd);
    const auto ref = oracle::projector_stats(data.values(), svd.U);
    for (Index j = 0; j < 3; ++j) {
        CHECK(std::abs(est.L_sq(j) - ref.L_sq(j)) < 1e-12);
        CHECK(std::abs(est.V_sq(j) - ref.V_sq(j)) < 1e-12);
        CHECK(est.L_sq(j) + est.V_sq(j) == doctest::Approx(data.values().col(j).squaredNorm() / 6.0).epsilon(1e-12));
    }
    CHECK(est.tau_sq == doctest::Approx((ref.L_sq.array() / ref.V_sq.array()).mean()).epsilon(1e-12));
}

TEST_CASE("estimate_tau_sq rejects noiseless data") {
    std::mt19937_64 rng(6);
    const MatrixXd u = orthonormal_columns(center_columns(oracle::gaussian(8, 1, rng)).values());
    VectorXd c(3);
    c << 1.0, -2.0, 0.5;
    const MatrixXd y = std::sqrt(8.0) * u * c.transpose();
    const auto data = DataMatrix::adopt_centered(y, VectorXd::Zero(3));
    CHECK_ERROR_CODE(estimate_tau_sq(data, truncated_svd(data, 1)), ErrorCode::ZeroResidualVariance);
}

TEST_CASE("fit hyperparameters match the direct conjugate regression") {
    std::mt19937_64 rng(7);
    const MatrixXd y = oracle::gaussian(40, 3, rng) * oracle::gaussian(3, 25, rng) + oracle::gaussian(40, 25, rng);
    const auto data = center_columns(y);
    FitOptions options;
    options.gamma0 = 2.0;
    options.delta0_sq = 0.5;
    const auto model = fit(data, options);
    CHECK(model.gamma_n == 2.0 + 40.0);

    const MatrixXd m = std::sqrt(40.0) * model.U;
    const MatrixXd mu_ref = oracle::regression_mu(data.values(), m, model.tau_sq);
    CHECK((model.mu - mu_ref).cwiseAbs().maxCoeff() <= 1e-10 * mu_ref.cwiseAbs().maxCoeff());

    const VectorXd scale_ref = oracle::regression_scale(data.values(), m, model.tau_sq, 2.0, 0.5);
    for (Index j = 0; j < 25; ++j) {
        CHECK(std::abs(model.gamma_n * model.delta_sq(j) - scale_ref(j)) <= 1e-10 * scale_ref(j));
        CHECK(40.0 * model.L_sq(j) + 40.0 * model.V_sq(j) ==
              doctest::Approx(data.values().col(j).squaredNorm()).epsilon(1e-10));
        CHECK(model.delta_sq(j) > 0.0);
        CHECK(model.V_sq(j) >= 0.0);
    }
    CHECK(model.rho >= 1.0);
}

TEST_CASE("gamma_n follows gamma0 + n") {
    std::mt19937_64 rng(8);
    const auto data = center_columns(oracle::gaussian(99, 12, rng));
    FitOptions options;
    options.k = 2;
    CHECK(fit(data, options).gamma_n == 100.0);
}

TEST_CASE("large tau_sq removes the shrinkage") {
    std::mt19937_64 rng(9);
    const auto data = center_columns(oracle::gaussian(50, 2, rng) * oracle::gaussian(2, 20, rng) + oracle::gaussian(50, 20, rng));
    FitOptions options;
    options.k = 2;
    options.tau_sq = 1e8;
    const auto model = fit(data, options);
    const MatrixXd unshrunk = (std::sqrt(50.0) / 50.0) * (model.U.transpose() * data.values()).transpose();
    CHECK((model.mu - unshrunk).cwiseAbs().maxCoeff() <= 1e-6 * unshrunk.cwiseAbs().maxCoeff());
}

TEST_CASE("fit argument checks") {
    std::mt19937_64 rng(10);
    const MatrixXd y = oracle::gaussian(20, 6, rng);
    CHECK_ERROR_CODE(fit(DataMatrix(y)), ErrorCode::NotCentered);
    const auto data = center_columns(y);
    FitOptions bad;
    bad.gamma0 = 0.0;
    CHECK_ERROR_CODE(fit(data, bad), ErrorCode::InvalidArgument);
    FitOptions bad_tau;
    bad_tau.tau_sq = -1.0;
    CHECK_ERROR_CODE(fit(data, bad_tau), ErrorCode::InvalidArgument);
    FitOptions bad_k;
    bad_k.k = 7;
    CHECK_ERROR_CODE(fit(data, bad_k), ErrorCode::RankOutOfRange);
}

TEST_CASE("residual variances on the standard generator track the truth") {
    StructuredCovariance truth;
    const auto data = standard_data(500, 1000, 77, &truth);
    const auto model = fit(data);
    std::vector<double> err(1000);
    for (Index j = 0; j < 1000; ++j) err[static_cast<std::size_t>(j)] = std::abs(model.delta_sq(j) - truth.diag(j));
    std::nth_element(err.begin(), err.begin() + 500, err.end());
    CHECK(err[500] < 0.15);
    const double lo = 0.9 * truth.diag.minCoeff();
    const double hi = 1.2 * (truth.diag.maxCoeff() + 0.5);
    int outside = 0;
    for (Index j = 0; j < 1000; ++j)
        if (model.delta_sq(j) < lo || model.delta_sq(j) > hi) ++outside;
    CHECK(outside == 0);
}

TEST_CASE("b matrix closed forms") {
    CHECK(compute_b_matrix(MatrixXd::Zero(4, 2), VectorXd::Ones(4)) == MatrixXd::Ones(4, 4));
    MatrixXd mu(2, 2);
    mu << 1.0, 1.0, 0.5, -0.5;
    VectorXd v(2);
    v << 1.0, 3.0;  // ||mu_0||^2 = 2 = 2 V_0
    CHECK(b_entry(mu, v, 0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    const auto s = summarize_b(MatrixXd::Zero(5, 3), VectorXd::Ones(5));
    CHECK(s.mean == 1.0);
    CHECK(s.sup == 1.0);
    CHECK(compute_rho(MatrixXd::Zero(5, 3), VectorXd::Ones(5), RhoStrategy::mean_b) == 1.0);
    CHECK(compute_rho(MatrixXd::Zero(5, 3), VectorXd::Ones(5), RhoStrategy::sup_b) == 1.0);
}

TEST_CASE("b matrix matches the scalar loop oracle") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const MatrixXd mu = oracle::gaussian(4, 3, rng);
        const VectorXd v = oracle::gaussian(4, 1, rng).col(0).cwiseAbs().array() + 0.2;
        const MatrixXd b = compute_b_matrix(mu, v);
        const MatrixXd ref = oracle::naive_b(mu, v);
        CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((b - ref).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(b.minCoeff() >= 1.0);
    }
}

TEST_CASE("summarize_b matches the dense upper triangle") {
    std::mt19937_64 rng(12);
    const MatrixXd mu = oracle::gaussian(30, 4, rng);
    const VectorXd v = oracle::gaussian(30, 1, rng).col(0).cwiseAbs().array() + 0.1;
    const MatrixXd ref = oracle::naive_b(mu, v);
    double sum = 0.0, sup = 0.0;
    for (Index u = 0; u < 30; ++u)
        for (Index w = u; w < 30; ++w) {
            sum += ref(u, w);
            sup = std::max(sup, ref(u, w));
        }
    for (int threads : {1, 3}) {
        const auto s = summarize_b(mu, v, threads);
        CHECK(s.mean == doctest::Approx(sum / (30.0 * 31.0 / 2.0)).epsilon(1e-12));
        CHECK(s.sup == doctest::Approx(sup).epsilon(1e-14));
    }
    CHECK(summarize_b(mu, v, 1).mean == summarize_b(mu, v, 4).mean);
}

TEST_CASE("b_uv = 1 when both loadings vanish; degenerate denominators otherwise") {
    MatrixXd mu = MatrixXd::Zero(2, 1);
    VectorXd v = VectorXd::Ones(2);
    CHECK(b_entry(mu, v, 0, 1) == 1.0);
    mu(0, 0) = 1.0;
    mu(1, 0) = 2.0;
    v.setZero();
    CHECK_ERROR_CODE(b_entry(mu, v, 0, 1), ErrorCode::DegenerateDenominator);
}

TEST_CASE("solve_mean_coverage lands near the mean of b") {
    int close = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto data = standard_data(500, 50, 300 + seed);
        FitOptions options;
        options.k = 10;
        const auto model = fit(data, options);
        const double bar = summarize_b(model.mu, model.V_sq).mean;
        const double root = compute_rho(model.mu, model.V_sq, RhoStrategy::solve_mean_coverage, 0.05);
        CHECK(mean_asymptotic_coverage(model.mu, model.V_sq, root, 0.05) == doctest::Approx(0.95).epsilon(1e-9));
        if (std::abs(root - bar) / bar < 0.15) ++close;
    }
    CHECK(close == 20);
}

TEST_CASE("solve_mean_coverage argument checks") {
    CHECK_ERROR_CODE(compute_rho(MatrixXd::Ones(3, 1), VectorXd::Ones(3), RhoStrategy::solve_mean_coverage, 1.5),
                     ErrorCode::InvalidAlpha);
}

TEST_CASE("factor estimate invariance under rotations of C") {
    std::mt19937_64 rng(13);
    const auto data = center_columns(oracle::gaussian(60, 4, rng) * oracle::gaussian(4, 30, rng) + oracle::gaussian(60, 30, rng));
    const int k = 4;
    const auto svd = truncated_svd(data, k);
    const double n = 60.0, p = 30.0;
    const MatrixXd c0 = svd.singvals.asDiagonal() * (1.0 / std::sqrt(n * p));
    const MatrixXd m0 = factor_estimate(svd, 30, c0);
    CHECK((m0 - std::sqrt(n) * svd.U).cwiseAbs().maxCoeff() < 1e-10);

    const auto canonical = surrogate_hyperparameters(data, m0, 0.3, 1.0, 1.0);
    const MatrixXd gram0 = canonical.mu * canonical.mu.transpose();
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd q = oracle::random_orthogonal(k, rng);
        const MatrixXd m = factor_estimate(svd, 30, c0 * q);
        CHECK((m.transpose() * m - n * MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((m * m.transpose() - n * svd.U * svd.U.transpose()).cwiseAbs().maxCoeff() < 1e-8);
        const auto h = surrogate_hyperparameters(data, m, 0.3, 1.0, 1.0);
        CHECK((h.mu * h.mu.transpose() - gram0).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((h.delta_sq - canonical.delta_sq).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("surrogate hyperparameters reduce to the fitted model for the canonical estimate") {
    std::mt19937_64 rng(14);
    const auto data = center_columns(oracle::gaussian(50, 3, rng) * oracle::gaussian(3, 20, rng) + oracle::gaussian(50, 20, rng));
    FitOptions options;
    options.k = 3;
    const auto model = fit(data, options);
    const auto h = surrogate_hyperparameters(data, std::sqrt(50.0) * model.U, model.tau_sq, 1.0, 1.0);
    CHECK((h.mu - model.mu).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((h.delta_sq - model.delta_sq).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("subspace estimates improve with p at fixed n") {
    auto median_distance = [](Index p) {
        std::vector<double> d;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto c = standard_config(200, p, 700 + seed);
            const auto truth = generate_truth(c);
            const auto sim = generate_data(truth, 200, derive_seed(c.seed, 5));
            const auto model = fit(sim.data);
            const MatrixXd m0 = center_columns(sim.factors).values();
            d.push_back(subspace_distance(model.U, orthonormal_columns(m0)));
        }
        std::nth_element(d.begin(), d.begin() + 10, d.end());
        return d[10];
    };
    CHECK(median_distance(2000) < median_distance(200));
}

TEST_CASE("randomized fit agrees with the exact fit") {
    std::mt19937_64 rng(15);
    const auto data = center_columns(3.0 * oracle::gaussian(300, 5, rng) * oracle::gaussian(5, 400, rng) +
                                     oracle::gaussian(300, 400, rng));
    FitOptions exact;
    FitOptions fast;
    fast.svd_method = SvdMethod::randomized;
    const auto a = fit(data, exact);
    const auto b = fit(data, fast);
    CHECK(a.k == b.k);
    CHECK(a.tau_sq == doctest::Approx(b.tau_sq).epsilon(1e-4));
    CHECK(a.rho == doctest::Approx(b.rho).epsilon(1e-4));
    CHECK(subspace_distance(a.U, b.U) < 1e-3);
}

TEST_CASE("fit is independent of the thread count") {
    const auto data = standard_data(200, 300, 16);
    FitOptions one, many;
    one.threads = 1;
    many.threads = 4;
    const auto a = fit(data, one);
    const auto b = fit(data, many);
    CHECK(a.rho == b.rho);
    CHECK(same_bytes(a.mu, b.mu));
}

TEST_CASE("model artifact round trip") {
    const auto data = standard_data(100, 60, 17);
    const auto model = fit(data);
    std::stringstream buf;
    write_model(buf, model);
    const auto back = read_model(buf);
    CHECK(back.n == model.n);
    CHECK(back.p == model.p);
    CHECK(back.k == model.k);
    CHECK(back.tau_sq == model.tau_sq);
    CHECK(back.rho == model.rho);
    CHECK(back.gamma_n == model.gamma_n);
    CHECK(back.rho_strategy == model.rho_strategy);
    CHECK(same_bytes(back.mu, model.mu));
    CHECK(same_bytes(back.U, model.U));
    CHECK(same_bytes(back.delta_sq, model.delta_sq));
    CHECK(same_bytes(back.V_sq, model.V_sq));
    CHECK(same_bytes(back.L_sq, model.L_sq));
    REQUIRE(back.rank.has_value());
    CHECK(back.rank->k_hat == model.rank->k_hat);
    CHECK(back.rank->jic_values == model.rank->jic_values);

    std::stringstream junk("{\"format\": \"something-else\"}");
    CHECK_ERROR_CODE(read_model(junk), ErrorCode::MagicMismatch);
    std::stringstream broken("{not json");
    CHECK_ERROR_CODE(read_model(broken), ErrorCode::ParseError);
}

TEST_CASE("rho strategy names") {
    for (auto s : {RhoStrategy::mean_b, RhoStrategy::sup_b, RhoStrategy::solve_mean_coverage})
        CHECK(parse_rho_strategy(to_string(s)) == s);
    CHECK_ERROR_CODE(parse_rho_strategy("median"), ErrorCode::InvalidArgument);
}
