#include "doctest.h"
#include "helpers.hpp"

#include "cfr/discrepancy.hpp"

#include <algorithm>
#include <numeric>

using namespace cfr;

namespace {

// Spectral norm of a small symmetric matrix from its full eigendecomposition.
double eig_norm(const Matrix& A) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix delta_matrix(const Matrix& phi, const Vector& t) {
    const Eigen::Index n = phi.rows();
    Matrix Z(n, phi.cols() + 1), Zc(n, phi.cols() + 1);
    Z << phi, t;
    Zc << phi, (Vector::Ones(n) - t);
    return (Z.transpose() * Z - Zc.transpose() * Zc) / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("discrepancy") {

TEST_CASE("closed-form examples") {
    Matrix phi(4, 2);
    phi << 1, 2, 1, 2, 1, 2, 1, 2;
    Vector t(4);
    t << 1, 0, 1, 0;
    CHECK(linear_disc(phi, t).value == doctest::Approx(0.0));

    Matrix zero = Matrix::Zero(4, 2);
    Vector t34(4);
    t34 << 1, 1, 1, 0;
    const DiscReport r = linear_disc(zero, t34);
    CHECK(r.p == 0.75);
    CHECK(r.v.norm() == 0.0);
    CHECK(r.value == doctest::Approx(0.5));

    Matrix phi1(2, 1);
    phi1 << 2, 0;
    Vector t1(2);
    t1 << 1, 0;
    CHECK(linear_disc(phi1, t1).v[0] == doctest::Approx(1.0));
    CHECK(linear_disc(phi1, t1).value == doctest::Approx(1.0));
    CHECK(disc_oracle_spectral(phi1, t1) == doctest::Approx(1.0));
    Matrix expected(2, 2);
    expected << 0, 1, 1, 0;
    CHECK((delta_matrix(phi1, t1) - expected).norm() < 1e-15);
}

TEST_CASE("one-sided treatment is an error") {
    CHECK_THROWS_WITH_AS(linear_disc(Matrix::Ones(3, 2), Vector::Ones(3)),
                         doctest::Contains("discrepancy undefined: one-sided treatment"), std::exception);
    CHECK_THROWS(disc_oracle_spectral(Matrix::Ones(3, 2), Vector::Zero(3)));
}

TEST_CASE("constant representation at p = 1/2 gives zero oracle") {
    Vector t(4);
    t << 1, 0, 0, 1;
    CHECK(disc_oracle_spectral(Matrix::Constant(4, 3, 2.5), t) == doctest::Approx(0.0));
}

TEST_CASE("closed form agrees with dense eigendecomposition and the power-iteration oracle") {
    Rng rng(21);
    std::uniform_int_distribution<int> nd(2, 30), kd(1, 6);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = nd(rng), k = kd(rng);
        const Matrix phi = testing::normal_matrix(n, k, rng);
        const Vector t = testing::two_group_treatment(n, rng, 0.3);
        const double value = linear_disc(phi, t).value;
        CHECK(std::abs(value - eig_norm(delta_matrix(phi, t))) <= 1e-10 * (1 + value));
        CHECK(std::abs(value - disc_oracle_spectral(phi, t)) <= 1e-8 * (1 + value));
    }
}

TEST_CASE("permutation, relabeling and scaling") {
    Rng rng(4);
    const Matrix phi = testing::normal_matrix(12, 3, rng);
    const Vector t = testing::two_group_treatment(12, rng, 0.3);
    const double base = linear_disc(phi, t).value;

    std::vector<Eigen::Index> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix phi_p(12, 3);
    Vector t_p(12);
    for (int i = 0; i < 12; ++i) {
        phi_p.row(i) = phi.row(perm[i]);
        t_p[i] = t[perm[i]];
    }
    CHECK(linear_disc(phi_p, t_p).value == doctest::Approx(base).epsilon(1e-14));
    CHECK(linear_disc(phi, Vector::Ones(12) - t).value == doctest::Approx(base).epsilon(1e-14));

    double prev = -1.0;
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
        const DiscReport r = linear_disc(s * phi, t);
        CHECK((r.v - s * linear_disc(phi, t).v).norm() < 1e-12);
        CHECK(r.value >= prev);
        prev = r.value;
    }
}

TEST_CASE("weighted discrepancy") {
    Matrix X(4, 2);
    X << 2, 1, 2, -1, 0, 1, 0, -1;
    Vector t(4);
    t << 1, 1, 0, 0;
    Vector w(2);
    w << 0.5, 0.5;
    CHECK(weighted_linear_disc(X, t, w) == doctest::Approx(0.5));
    CHECK(weighted_linear_disc(X, t, w) == doctest::Approx(linear_disc(X * w.asDiagonal(), t).value));
    Vector w0(2);
    w0 << 0.0, 1.0;
    CHECK(weighted_linear_disc(X, t, w0) == doctest::Approx(0.0));
    Vector off(2);
    off << 0.7, 0.7;
    CHECK_THROWS(weighted_linear_disc(X, t, off));

    Rng rng(8);
    const Matrix Xr = testing::normal_matrix(10, 4, rng);
    const Vector tr = testing::two_group_treatment(10, rng);
    Vector wr = Vector::Constant(4, 0.25);
    const Vector g = weighted_linear_disc_gradient(Xr, tr, wr);
    const Vector v = linear_disc(Xr, tr).v;
    for (int k = 0; k < 4; ++k) {
        // The closed form is a function of w through (w_k v_k)^2, defined off the simplex too.
        auto f = [&](double h) {
            Vector ww = wr;
            ww[k] += h;
            const DiscReport r = linear_disc(Xr, tr);
            const double c = std::abs(r.p - 0.5);
            return c + std::sqrt(c * c + (ww.array() * v.array()).square().sum());
        };
        CHECK(g[k] == doctest::Approx((f(1e-6) - f(-1e-6)) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("gradient") {
    Matrix phi1(2, 1);
    phi1 << 2, 0;
    Vector t1(2);
    t1 << 1, 0;
    const Matrix g1 = linear_disc_gradient(phi1, t1);
    CHECK(g1(0, 0) == doctest::Approx(0.5));
    CHECK(g1(1, 0) == doctest::Approx(-0.5));

    Vector t(4);
    t << 1, 0, 1, 0;
    CHECK(linear_disc_gradient(Matrix::Ones(4, 2), t).norm() == 0.0);

    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix phi = testing::normal_matrix(8, 3, rng);
        const Vector tt = testing::two_group_treatment(8, rng);
        const Matrix g = linear_disc_gradient(phi, tt);
        double worst = 0.0;
        for (int i = 0; i < 8; ++i) {
            for (int k = 0; k < 3; ++k) {
                Matrix hi = phi, lo = phi;
                hi(i, k) += 1e-6;
                lo(i, k) -= 1e-6;
                const double fd = (linear_disc(hi, tt).value - linear_disc(lo, tt).value) / 2e-6;
                worst = std::max(worst, std::abs(fd - g(i, k)) / std::max(1e-3, std::abs(fd)));
            }
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("spectral norm helper") {
    Matrix A(2, 2);
    A << 0, 3, 3, 0;
    CHECK(symmetric_spectral_norm(A) == doctest::Approx(3.0));
    Matrix B = Vector(Vector::LinSpaced(4, -5, 1)).asDiagonal();
    CHECK(symmetric_spectral_norm(B) == doctest::Approx(5.0));
    CHECK(symmetric_spectral_norm(Matrix::Zero(3, 3)) == 0.0);
}

}
