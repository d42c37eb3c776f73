#include "fable/error.hpp"
#include "fable/linalg.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

using namespace fable;

TEST_CASE("center_columns on a two-row matrix") {
    MatrixXd raw(2, 2);
    raw << 1, 3, 3, 5;
    const auto d = center_columns(raw);
    CHECK(d.centered());
    CHECK(d.values()(0, 0) == -1.0);
    CHECK(d.values()(0, 1) == -1.0);
    CHECK(d.values()(1, 0) == 1.0);
    CHECK(d.values()(1, 1) == 1.0);
    CHECK((*d.column_means())(0) == 2.0);
    CHECK((*d.column_means())(1) == 4.0);
}

TEST_CASE("center_columns leaves zero-mean data alone") {
    MatrixXd raw(3, 2);
    raw << 1, -2, 0, 4, -1, -2;
    const auto d = center_columns(raw);
    CHECK(d.values() == raw);
    CHECK(d.column_means()->cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("center_columns zeroes every column sum") {
    std::mt19937_64 rng(11);
    const MatrixXd raw = oracle::gaussian(5, 3, rng).array() + 3.0;
    const auto d = center_columns(raw);
    for (Index j = 0; j < 3; ++j) CHECK(std::abs(d.values().col(j).sum()) < 1e-10);
}

TEST_CASE("DataMatrix validation") {
    MatrixXd bad(3, 2);
    bad.setOnes();
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_ERROR_CODE(center_columns(bad), ErrorCode::NonFinite);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_ERROR_CODE(DataMatrix(bad), ErrorCode::NonFinite);
    CHECK_ERROR_CODE(center_columns(MatrixXd::Ones(1, 4)), ErrorCode::TooFewRows);
    CHECK_ERROR_CODE(DataMatrix::adopt_centered(MatrixXd::Ones(3, 2), VectorXd::Zero(2)), ErrorCode::NotCentered);
    CHECK_FALSE(DataMatrix(MatrixXd::Ones(3, 2)).centered());
}

TEST_CASE("constant columns warn and become zero") {
    oracle::CaptureWarnings warnings;
    MatrixXd raw(4, 2);
    raw << 1, 5, 2, 5, 3, 5, 4, 5;
    const auto d = center_columns(raw);
    CHECK(d.values().col(1).isZero(0.0));
    REQUIRE(warnings.messages.size() == 1);
    CHECK(warnings.messages[0].find("column 1") != std::string::npos);
}

TEST_CASE("truncated_svd of a diagonal matrix") {
    MatrixXd y(2, 2);
    y << 2, 0, 0, 1;
    const auto svd = truncated_svd(y, 1);
    CHECK(svd.singvals(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(svd.U(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(svd.U(1, 0)) < 1e-14);
    CHECK(svd.V(0, 0) > 0.0);
}

TEST_CASE("truncated_svd recovers an exact rank-one matrix") {
    std::mt19937_64 rng(3);
    VectorXd u = oracle::gaussian(6, 1, rng).col(0).normalized();
    VectorXd v = oracle::gaussian(4, 1, rng).col(0).normalized();
    const MatrixXd y = 7.0 * u * v.transpose();
    const auto svd = truncated_svd(y, 1);
    CHECK(svd.singvals(0) == doctest::Approx(7.0).epsilon(1e-12));
    const MatrixXd resid = y - svd.U * svd.singvals.asDiagonal() * svd.V.transpose();
    CHECK(resid.norm() <= 1e-8);
}

TEST_CASE("randomized SVD agrees with the exact SVD on a 20 x 15 matrix") {
    std::mt19937_64 rng(5);
    const MatrixXd y = oracle::gaussian(20, 15, rng);
    const auto exact = truncated_svd(y, 5, SvdMethod::exact);
    const auto fast = truncated_svd(y, 5, SvdMethod::randomized);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(fast.singvals(i) - exact.singvals(i)) / exact.singvals(i) < 1e-6);
    CHECK(oracle::dense_projector_distance(fast.U, exact.U) < 1e-6);
}

TEST_CASE("randomized SVD on a large low-rank-plus-noise matrix") {
    std::mt19937_64 rng(8);
    const MatrixXd y = oracle::gaussian(300, 5, rng) * 4.0 * oracle::gaussian(5, 400, rng) + oracle::gaussian(300, 400, rng);
    const auto exact = truncated_svd(y, 5, SvdMethod::exact);
    const auto fast = truncated_svd(y, 5, SvdMethod::randomized);
    CHECK_FALSE(fast.spectrum_complete);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(fast.singvals(i) - exact.singvals(i)) / exact.singvals(i) < 1e-6);
    CHECK(fast.residual_sq(5) == doctest::Approx(exact.residual_sq(5)).epsilon(1e-6));
}

TEST_CASE("TruncatedSvd invariants and Eckart-Young on random instances") {
    std::mt19937_64 rng(21);
    const std::pair<Index, Index> shapes[] = {{8, 5}, {5, 8}, {30, 30}, {50, 20}, {12, 45}};
    for (const auto& [n, p] : shapes) {
        const MatrixXd y = oracle::gaussian(n, p, rng);
        for (int k : {1, 3, static_cast<int>(std::min(n, p)) - 1}) {
            const auto svd = truncated_svd(y, k);
            CHECK((svd.U.transpose() * svd.U - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((svd.V.transpose() * svd.V - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
            CHECK(svd.spectrum.size() == std::min(n, p));
            for (int i = 0; i < k; ++i) CHECK(svd.singvals(i) == svd.spectrum(i));
            for (Index i = 1; i < svd.spectrum.size(); ++i) CHECK(svd.spectrum(i) <= svd.spectrum(i - 1));
            const MatrixXd resid = y - svd.U * svd.singvals.asDiagonal() * svd.V.transpose();
            const double tail = svd.spectrum.tail(svd.spectrum.size() - k).squaredNorm();
            CHECK(std::abs(resid.squaredNorm() - tail) <= 1e-6 * tail);
            CHECK(oracle::dense_spectral_norm(resid) == doctest::Approx(svd.spectrum(k)).epsilon(1e-6));
            // Sign convention: the largest-magnitude entry of each V column is positive.
            for (int l = 0; l < k; ++l) {
                Index arg = 0;
                svd.V.col(l).cwiseAbs().maxCoeff(&arg);
                CHECK(svd.V(arg, l) > 0.0);
            }
        }
    }
}

TEST_CASE("exact truncated_svd is byte-deterministic") {
    std::mt19937_64 rng(4);
    const MatrixXd y = oracle::gaussian(40, 25, rng);
    const auto a = truncated_svd(y, 4);
    const auto b = truncated_svd(y, 4);
    CHECK(std::memcmp(a.U.data(), b.U.data(), sizeof(double) * a.U.size()) == 0);
    CHECK(std::memcmp(a.V.data(), b.V.data(), sizeof(double) * a.V.size()) == 0);
    CHECK(std::memcmp(a.spectrum.data(), b.spectrum.data(), sizeof(double) * a.spectrum.size()) == 0);
}

TEST_CASE("truncated_svd rank bounds") {
    const MatrixXd y = MatrixXd::Identity(4, 3);
    CHECK_ERROR_CODE(truncated_svd(y, 0), ErrorCode::RankOutOfRange);
    CHECK_ERROR_CODE(truncated_svd(y, 4), ErrorCode::RankOutOfRange);
    CHECK_ERROR_CODE(truncated_svd(y, 4, SvdMethod::randomized), ErrorCode::RankOutOfRange);
}

TEST_CASE("singular_values matches the dense spectrum") {
    std::mt19937_64 rng(9);
    const MatrixXd y = oracle::gaussian(17, 11, rng);
    const VectorXd s = singular_values(y);
    Eigen::JacobiSVD<MatrixXd> ref(y);
    CHECK((s - ref.singularValues()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spectral_norm closed forms") {
    CHECK(spectral_norm(MatrixXd::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-12));
    MatrixXd d = MatrixXd::Zero(3, 3);
    d.diagonal() << 3, -5, 2;
    CHECK(spectral_norm(d) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(spectral_norm(MatrixXd::Zero(4, 2)) == 0.0);
}

TEST_CASE("spectral_norm matches an eigendecomposition for symmetric matrices") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const MatrixXd a = oracle::gaussian(10, 10, rng);
        const MatrixXd s = a + a.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
        const double ref = eig.eigenvalues().cwiseAbs().maxCoeff();
        CHECK(std::abs(spectral_norm(s) - ref) <= 1e-8 * ref);
    }
}

TEST_CASE("spectral_norm is absolutely homogeneous") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-10.0, 10.0);
    for (int rep = 0; rep < 10; ++rep) {
        const MatrixXd a = oracle::gaussian(12, 7, rng);
        const double alpha = unif(rng);
        const double base = spectral_norm(a);
        CHECK(std::abs(spectral_norm(alpha * a) - std::abs(alpha) * base) <= 1e-8 * std::abs(alpha) * base);
    }
}

TEST_CASE("spectral_norm through a matrix-free operator") {
    std::mt19937_64 rng(19);
    const MatrixXd a = oracle::gaussian(30, 12, rng);
    LinearOperator op{30, 12, [&](const MatrixXd& x) -> MatrixXd { return a * x; },
                      [&](const MatrixXd& x) -> MatrixXd { return a.transpose() * x; }};
    CHECK(spectral_norm(op) == doctest::Approx(oracle::dense_spectral_norm(a)).epsilon(1e-8));
}

TEST_CASE("spectral_norm reports non-convergence") {
    std::mt19937_64 rng(23);
    const MatrixXd a = oracle::gaussian(50, 50, rng);
    CHECK_ERROR_CODE(spectral_norm(a, 1e-15, 1), ErrorCode::ConvergenceFailure);
}

TEST_CASE("gaussian_loglik closed forms") {
    StructuredCovariance unit{MatrixXd::Zero(1, 1), VectorXd::Ones(1)};
    CHECK(gaussian_loglik(MatrixXd::Zero(1, 1), unit) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));

    MatrixXd y(3, 2);
    y << 1, -2, 0.5, 1, -1.5, 1;
    StructuredCovariance ident{MatrixXd::Zero(2, 1), VectorXd::Ones(2)};
    const double expected = -0.5 * y.squaredNorm() - 3.0 * std::log(2 * std::numbers::pi);
    CHECK(gaussian_loglik(center_columns(y), ident) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gaussian_loglik matches the dense oracle") {
    std::mt19937_64 rng(29);
    for (auto [n, p, k] : {std::tuple{4, 3, 1}, std::tuple{10, 6, 2}, std::tuple{25, 10, 4}}) {
        const auto y = center_columns(oracle::gaussian(n, p, rng));
        StructuredCovariance cov{oracle::gaussian(p, k, rng), (oracle::gaussian(p, 1, rng).col(0).array().square() + 0.3).matrix()};
        const double ref = oracle::dense_loglik(y.values(), oracle::dense(cov));
        CHECK(std::abs(gaussian_loglik(y, cov) - ref) <= 1e-8 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("gaussian_loglik is invariant to rotating the loadings") {
    std::mt19937_64 rng(31);
    const auto y = center_columns(oracle::gaussian(20, 8, rng));
    StructuredCovariance cov{oracle::gaussian(8, 3, rng), VectorXd::Constant(8, 0.7)};
    const double base = gaussian_loglik(y, cov);
    for (int rep = 0; rep < 5; ++rep) {
        StructuredCovariance rotated{cov.loadings * oracle::random_orthogonal(3, rng), cov.diag};
        CHECK(std::abs(gaussian_loglik(y, rotated) - base) <= 1e-8 * std::abs(base));
    }
}

TEST_CASE("gaussian_loglik argument checks") {
    const auto y = center_columns(MatrixXd::Identity(3, 3));
    CHECK_ERROR_CODE(gaussian_loglik(y, StructuredCovariance{MatrixXd::Zero(2, 1), VectorXd::Ones(2)}),
                     ErrorCode::DimensionMismatch);
    VectorXd diag = VectorXd::Ones(3);
    diag(1) = 0.0;
    CHECK_ERROR_CODE(gaussian_loglik(y, StructuredCovariance{MatrixXd::Zero(3, 1), diag}), ErrorCode::NonPositiveDiag);
}

TEST_CASE("StructuredCovariance helpers agree with the dense matrix") {
    std::mt19937_64 rng(37);
    StructuredCovariance cov{oracle::gaussian(12, 3, rng), VectorXd::LinSpaced(12, 0.5, 2.0)};
    const MatrixXd full = oracle::dense(cov);
    CHECK((cov.dense() - full).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd x = oracle::gaussian(12, 4, rng);
    CHECK((cov.apply(x) - full * x).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(cov.entry(3, 7) == doctest::Approx(full(3, 7)).epsilon(1e-14));
    const std::vector<Index> idx = {2, 5, 11};
    const MatrixXd sub = oracle::dense(cov.restrict_to(idx));
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(std::abs(sub(a, b) - full(idx[a], idx[b])) < 1e-10);
}

TEST_CASE("subspace_distance matches explicit projectors") {
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 5; ++rep) {
        const MatrixXd u = orthonormal_columns(oracle::gaussian(40, 3, rng));
        const MatrixXd w = orthonormal_columns(u + 0.3 * oracle::gaussian(40, 3, rng));
        CHECK(subspace_distance(u, w) == doctest::Approx(oracle::dense_projector_distance(u, w)).epsilon(1e-10));
    }
    const MatrixXd u = orthonormal_columns(oracle::gaussian(10, 2, rng));
    CHECK(subspace_distance(u, u) < 1e-12);
}
