#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "suma/matrix.hpp"
#include "suma/ridge.hpp"
#include "suma/rng.hpp"
#include "suma/similarity.hpp"
#include "suma/stats.hpp"

using namespace suma;

namespace {

RealMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
    RealMatrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal(0.0, sd);
    return m;
}

/// Independent ridge oracle: plain gradient descent on the centered objective
/// ||Yc - Xc B||^2 + lambda ||B||^2 with a Lipschitz step, run to machine-level
/// stationarity. Shares no code with ridge_fit's factorization path.
RealMatrix ridge_gd_oracle(const RealMatrix& x, const RealMatrix& y, double lambda) {
    const std::size_t n = x.rows(), d = x.cols(), v = y.cols();
    RealMatrix xc = x, yc = y;
    center_columns(xc);
    center_columns(yc);

    // Gram and cross products by explicit loops.
    RealMatrix gram(d, d), xty(d, v);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += xc(r, i) * xc(r, j);
            gram(i, j) = s;
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < v; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += xc(r, i) * yc(r, j);
            xty(i, j) = s;
        }

    // Largest eigenvalue by power iteration for the step size.
    std::vector<double> pv(d, 1.0);
    double eig = 1.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> next(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) next[i] += gram(i, j) * pv[j];
        double norm = 0.0;
        for (double val : next) norm += val * val;
        norm = std::sqrt(norm);
        eig = norm;
        for (std::size_t i = 0; i < d; ++i) pv[i] = next[i] / norm;
    }
    const double step = 1.0 / (2.0 * (eig + lambda));

    RealMatrix b(d, v);
    for (int it = 0; it < 200000; ++it) {
        RealMatrix grad(d, v);
        // grad = 2 (Gram B - XtY + lambda B)
        double max_abs = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < v; ++j) {
                double s = 0.0;
                for (std::size_t k2 = 0; k2 < d; ++k2) s += gram(i, k2) * b(k2, j);
                grad(i, j) = 2.0 * (s - xty(i, j) + lambda * b(i, j));
                max_abs = std::max(max_abs, std::fabs(grad(i, j)));
            }
        if (max_abs < 1e-12) break;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < v; ++j) b(i, j) -= step * grad(i, j);
    }
    return b;
}

}  // namespace

TEST_CASE("ridge interpolation on the identity design") {
    const RealMatrix x = RealMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    RealMatrix y(2, 1);
    y(0, 0) = 3.0;
    y(1, 0) = 5.0;
    const RidgeFit fit = ridge_fit(x, y, 0.0);
    const RealMatrix predicted = fit.predict(x);
    CHECK(predicted(0, 0) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(predicted(1, 0) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("ridge closed form on one centered feature") {
    // X^T X = 1, X^T y = 2, lambda = 1 -> slope 2 / (1 + 1) = 1.
    const double s = std::sqrt(0.5);
    RealMatrix x(2, 1), y(2, 1);
    x(0, 0) = -s;
    x(1, 0) = s;
    y(0, 0) = -std::sqrt(2.0);
    y(1, 0) = std::sqrt(2.0);
    const RidgeFit fit = ridge_fit(x, y, 1.0);
    CHECK(fit.coefficients(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ridge matches the gradient-descent oracle") {
    Rng rng(7);
    const RealMatrix x = random_matrix(rng, 20, 5);
    const RealMatrix y = random_matrix(rng, 20, 3);
    const RidgeFit fit = ridge_fit(x, y, 0.1);
    const RealMatrix oracle = ridge_gd_oracle(x, y, 0.1);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(fit.coefficients(i, j) - oracle(i, j)) <= 1e-8);
}

TEST_CASE("ridge at lambda zero equals ordinary least squares") {
    Rng rng(11);
    const RealMatrix x = random_matrix(rng, 30, 6);
    const RealMatrix y = random_matrix(rng, 30, 2);
    const RidgeFit fit = ridge_fit(x, y, 0.0);
    const RealMatrix oracle = ridge_gd_oracle(x, y, 0.0);
    for (std::size_t i = 0; i < x.cols(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j)
            CHECK(std::fabs(fit.coefficients(i, j) - oracle(i, j)) <= 1e-8);
}

TEST_CASE("ridge coefficients shrink monotonically in lambda") {
    Rng rng(13);
    const RealMatrix x = random_matrix(rng, 25, 4);
    const RealMatrix y = random_matrix(rng, 25, 2);
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.1, 1.0, 10.0, 100.0}) {
        const double norm = frobenius_norm(ridge_fit(x, y, lambda).coefficients);
        CHECK(norm <= previous + 1e-12);
        previous = norm;
    }
}

TEST_CASE("ridge rejects rank-deficient designs at lambda zero") {
    RealMatrix x(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        x(i, 0) = static_cast<double>(i + 1);
        x(i, 1) = 2.0 * static_cast<double>(i + 1);  // duplicate direction
    }
    RealMatrix y(4, 1, 1.0);
    CHECK_THROWS_AS(ridge_fit(x, y, 0.0), RankDeficiencyError);
    CHECK_NOTHROW(ridge_fit(x, y, 0.5));
}

TEST_CASE("ridge validates shapes and lambda") {
    RealMatrix x(4, 2, 1.0), y(5, 1, 1.0);
    CHECK_THROWS_AS(ridge_fit(x, y, 1.0), std::invalid_argument);
    RealMatrix y2(4, 1, 1.0);
    CHECK_THROWS_AS(ridge_fit(x, y2, -1.0), std::invalid_argument);
}

TEST_CASE("pearson fixtures") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    CHECK(pearson_r(a, std::vector<double>{2.0, 4.0, 6.0}) == doctest::Approx(1.0));
    CHECK(pearson_r(a, std::vector<double>{3.0, 2.0, 1.0}) == doctest::Approx(-1.0));
    // 9 / (2 sqrt(21))
    CHECK(pearson_r(a, std::vector<double>{1.0, 2.0, 4.0}) ==
          doctest::Approx(0.9819805060619657).epsilon(1e-12));
}

TEST_CASE("pearson rejects degenerate input instead of returning 0") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(pearson_r(a, std::vector<double>{5.0, 5.0, 5.0}), std::domain_error);
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}

TEST_CASE("pearson is invariant under positive affine transforms") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(12), b(12);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        const double base = pearson_r(a, b);
        const double scale = 0.1 + 5.0 * rng.uniform01();
        const double shift = rng.normal(0.0, 3.0);
        std::vector<double> a2 = a;
        for (auto& v : a2) v = scale * v + shift;
        CHECK(pearson_r(a2, b) == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("fisher transform fixtures and domain") {
    CHECK(fisher_z(0.0) == 0.0);
    CHECK(fisher_z(0.9) == doctest::Approx(1.4722194895832204).epsilon(1e-12));
    CHECK_THROWS_AS(fisher_z(1.0), std::domain_error);
    CHECK_THROWS_AS(fisher_z(-1.0), std::domain_error);
}

TEST_CASE("welch fixtures") {
    const std::vector<double> same{1.0, 2.0, 3.0};
    const WelchResult equal = welch_t(same, same);
    CHECK(equal.t == 0.0);

    const std::vector<double> a{2.0, 4.0, 6.0};
    const std::vector<double> b{1.0, 3.0, 5.0};
    const WelchResult w = welch_t(a, b);
    // Direct evaluation: (4 - 3) / sqrt(4/3 + 4/3), Welch-Satterthwaite dof.
    CHECK(std::fabs(w.t - 0.6123724356957945) <= 1e-10);
    CHECK(std::fabs(w.dof - 4.0) <= 1e-10);

    const WelchResult swapped = welch_t(b, a);
    CHECK(swapped.t == doctest::Approx(-w.t));
    CHECK(swapped.dof == doctest::Approx(w.dof));
}

TEST_CASE("welch antisymmetry holds for random samples") {
    Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> a(5 + rng.below(10)), b(5 + rng.below(10));
        for (auto& v : a) v = rng.normal(0.5, 2.0);
        for (auto& v : b) v = rng.normal(-0.2, 1.0);
        const WelchResult ab = welch_t(a, b);
        const WelchResult ba = welch_t(b, a);
        CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-12));
        CHECK(ab.dof == doctest::Approx(ba.dof).epsilon(1e-12));
    }
}

TEST_CASE("welch rejects samples smaller than two") {
    const std::vector<double> one{1.0};
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(welch_t(one, two), std::invalid_argument);
    CHECK_THROWS_AS(welch_t(two, one), std::invalid_argument);
}

TEST_CASE("welch zero-variance sentinels keep the ranking total") {
    const std::vector<double> lo{1.0, 1.0, 1.0};
    const std::vector<double> hi{2.0, 2.0, 2.0};
    CHECK(welch_t(hi, lo).t == std::numeric_limits<double>::infinity());
    CHECK(welch_t(lo, hi).t == -std::numeric_limits<double>::infinity());
    CHECK(welch_t(lo, lo).t == 0.0);
    CHECK(welch_t(lo, lo).dof > 0.0);
}

TEST_CASE("cka self-similarity and invariances") {
    Rng rng(29);
    const RealMatrix x = random_matrix(rng, 10, 4);
    CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-10));

    // Orthogonal rotation and isotropic scaling leave linear CKA unchanged.
    Eigen::MatrixXd noise(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) noise(i, j) = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(noise).householderQ();
    RealMatrix rotated(10, 4);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t k2 = 0; k2 < 4; ++k2)
                s += x(i, k2) * q(static_cast<int>(k2), static_cast<int>(j));
            rotated(i, j) = 3.7 * s;
        }
    CHECK(linear_cka(x, rotated) == doctest::Approx(1.0).epsilon(1e-8));

    const RealMatrix y = random_matrix(rng, 10, 6);
    CHECK(linear_cka(x, y) == doctest::Approx(linear_cka(y, x)).epsilon(1e-12));
}

TEST_CASE("cka matches the centered-Gram HSIC oracle") {
    Rng rng(31);
    const RealMatrix x = random_matrix(rng, 8, 3);
    const RealMatrix y = random_matrix(rng, 8, 5);

    // Oracle route: explicit n x n Gram matrices of the centered data.
    RealMatrix xc = x, yc = y;
    center_columns(xc);
    center_columns(yc);
    const auto gram = [](const RealMatrix& m) {
        RealMatrix g(m.rows(), m.rows());
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.rows(); ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < m.cols(); ++c) s += m(i, c) * m(j, c);
                g(i, j) = s;
            }
        return g;
    };
    const RealMatrix kx = gram(xc), ky = gram(yc);
    const auto trace_product = [](const RealMatrix& a, const RealMatrix& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * b(j, i);
        return s;
    };
    const double oracle = trace_product(kx, ky) /
                          std::sqrt(trace_product(kx, kx) * trace_product(ky, ky));
    CHECK(linear_cka(x, y) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("cka rejects all-zero centered input") {
    RealMatrix constant(5, 3, 2.5);  // centers to zero
    Rng rng(37);
    const RealMatrix y = random_matrix(rng, 5, 3);
    CHECK_THROWS_AS(linear_cka(constant, y), std::domain_error);
}

TEST_CASE("rdm self-similarity and brute-force oracle") {
    Rng rng(41);
    const RealMatrix x = random_matrix(rng, 6, 4);
    const RealMatrix y = random_matrix(rng, 6, 5);
    CHECK(rdm_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-10));

    // Brute force: all row pairs, correlation distance, upper-triangle Pearson.
    const auto brute_tri = [](const RealMatrix& m) {
        std::vector<double> tri;
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = i + 1; j < m.rows(); ++j) {
                const std::size_t p = m.cols();
                double ma = 0.0, mb = 0.0;
                for (std::size_t c = 0; c < p; ++c) {
                    ma += m(i, c);
                    mb += m(j, c);
                }
                ma /= static_cast<double>(p);
                mb /= static_cast<double>(p);
                double sab = 0.0, saa = 0.0, sbb = 0.0;
                for (std::size_t c = 0; c < p; ++c) {
                    sab += (m(i, c) - ma) * (m(j, c) - mb);
                    saa += (m(i, c) - ma) * (m(i, c) - ma);
                    sbb += (m(j, c) - mb) * (m(j, c) - mb);
                }
                tri.push_back(1.0 - sab / std::sqrt(saa * sbb));
            }
        return tri;
    };
    const std::vector<double> tx = brute_tri(x);
    const std::vector<double> ty = brute_tri(y);
    const double oracle = pearson_r(tx, ty);
    const double value = rdm_similarity(x, y);
    CHECK(value == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(value > -1.0);
    CHECK(value < 1.0);
}

TEST_CASE("rdm is invariant to positive per-row affine maps") {
    Rng rng(43);
    const RealMatrix x = random_matrix(rng, 6, 4);
    RealMatrix y(6, 4);
    for (std::size_t i = 0; i < 6; ++i) {
        const double scale = 0.5 + 2.0 * rng.uniform01();
        const double shift = rng.normal();
        for (std::size_t j = 0; j < 4; ++j) y(i, j) = scale * x(i, j) + shift;
    }
    CHECK(rdm_similarity(x, y) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("rdm preconditions and degenerate input") {
    Rng rng(47);
    const RealMatrix small = random_matrix(rng, 3, 4);
    CHECK_THROWS_AS(rdm_similarity(small, small), std::invalid_argument);
}
