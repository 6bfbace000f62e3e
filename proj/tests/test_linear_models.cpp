#include "doctest.h"
#include "helpers.hpp"

#include "cfr/linear_models.hpp"

#include <algorithm>

using namespace cfr;

TEST_SUITE("linear_models") {

TEST_CASE("ridge recovers exact linear data") {
    Rng rng(1);
    const Matrix Z = testing::normal_matrix(40, 3, rng);
    Vector beta(3);
    beta << 1.5, -2.0, 0.25;
    const Vector y = Z * beta + Vector::Constant(40, 3.0);
    const LinearModel m = ridge_fit(Z, y, 1e-12);
    CHECK((m.weights - beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.intercept == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("ridge scalar normal equation") {
    Matrix Z(2, 1);
    Z << 1, -1;
    Vector y(2);
    y << 1, -1;
    const LinearModel m = ridge_fit(Z, y, 1.0, false);
    CHECK(m.weights[0] == doctest::Approx(0.5));
    CHECK(m.intercept == 0.0);
}

TEST_CASE("ridge with constant response") {
    Rng rng(2);
    const Matrix Z = testing::normal_matrix(30, 4, rng);
    const LinearModel m = ridge_fit(Z, Vector::Constant(30, 7.0), 0.1);
    CHECK(m.weights.norm() < 1e-9);
    CHECK(m.intercept == doctest::Approx(7.0));
}

TEST_CASE("ridge objective never exceeds the zero model") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix Z = testing::normal_matrix(15, 5, rng);
        const Vector y = testing::normal_matrix(15, 1, rng).col(0);
        const LinearModel m = ridge_fit(Z, y, 0.3, false);
        CHECK(m.objective_value <= y.squaredNorm() / 15.0 + 1e-12);
        // Stationarity of the penalized objective.
        const Vector grad = 2.0 * Z.transpose() * (Z * m.weights - y) / 15.0 + 2.0 * 0.3 * m.weights;
        CHECK(grad.norm() < 1e-9);
    }
}

TEST_CASE("lasso: large lambda kills everything") {
    Rng rng(4);
    const Matrix X = testing::normal_matrix(30, 4, rng);
    const Vector y = testing::normal_matrix(30, 1, rng).col(0);
    const Vector yc = y.array() - y.mean();
    const Matrix Xc = X.rowwise() - X.colwise().mean();
    const double lmax = (Xc.transpose() * yc).cwiseAbs().maxCoeff() / 30.0;
    const LinearModel m = lasso_fit(X, y, lmax * 1.01);
    CHECK(m.weights.cwiseAbs().maxCoeff() == 0.0);
    CHECK(active_set(m).empty());
}

TEST_CASE("lasso: orthonormal design matches soft-threshold") {
    // Columns with X^T X = n I and zero means.
    Matrix X(4, 2);
    X << 1, 1, 1, -1, -1, 1, -1, -1;
    Vector y(4);
    y << 3, 1, -1, 0.5;
    const double lambda = 0.3;
    LassoOptions opts;
    opts.fit_intercept = false;
    const LinearModel m = lasso_fit(X, y, lambda, opts);
    for (int j = 0; j < 2; ++j) {
        CHECK(m.weights[j] == doctest::Approx(soft_threshold(X.col(j).dot(y) / 4.0, lambda)).epsilon(1e-10));
    }
    CHECK(soft_threshold(0.2, 0.3) == 0.0);
    CHECK(soft_threshold(-0.5, 0.3) == doctest::Approx(-0.2));
}

TEST_CASE("lasso: tiny lambda matches OLS and KKT holds") {
    Rng rng(5);
    const Matrix X = testing::normal_matrix(60, 4, rng);
    Vector beta(4);
    beta << 1, 0, -2, 0.5;
    const Vector y = X * beta + 0.1 * testing::normal_matrix(60, 1, rng).col(0);
    const LinearModel l = lasso_fit(X, y, 1e-9);
    const LinearModel o = ridge_fit(X, y, 1e-14);
    CHECK((l.weights - o.weights).cwiseAbs().maxCoeff() < 1e-4);

    for (double lambda : {0.01, 0.1, 0.5}) {
        const LinearModel m = lasso_fit(X, y, lambda);
        const Vector r = y - X * m.weights - Vector::Constant(60, m.intercept);
        const Vector corr = X.transpose() * r / 60.0;
        for (int j = 0; j < 4; ++j) {
            if (m.weights[j] == 0.0) {
                CHECK(std::abs(corr[j]) <= lambda + 1e-6);
            } else {
                CHECK(corr[j] == doctest::Approx(lambda * (m.weights[j] > 0 ? 1 : -1)).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("logistic regression") {
    Rng rng(6);
    Matrix X = testing::normal_matrix(400, 2, rng);
    Vector t(400);
    for (int i = 0; i < 400; ++i) t[i] = i % 2;
    const LinearModel m = logistic_fit(X, t, 1e-3);
    CHECK(m.weights.norm() < 0.3);
    CHECK(std::abs(m.intercept) < 0.2);

    Matrix xs(2, 1);
    xs << -1, 1;
    Vector ts(2);
    ts << 0, 1;
    const LinearModel sep = logistic_fit(xs, ts, 1.0);
    CHECK(std::isfinite(sep.weights[0]));
    const Vector p = sigmoid(xs * sep.weights + Vector::Constant(2, sep.intercept));
    CHECK(p[1] > p[0]);
    CHECK((p.array() > 0.0).all());
    CHECK((p.array() < 1.0).all());
    // Penalized score equations at the solution.
    const Vector resid = p - ts;
    CHECK(std::abs(xs.col(0).dot(resid) / 2.0 + 2.0 * 1.0 * sep.weights[0]) < 1e-6);
    CHECK(std::abs(resid.mean()) < 1e-6);

    CHECK_THROWS_WITH_AS(logistic_fit(xs, ts, 0.0), doctest::Contains("separation; set l2 > 0"), std::exception);
}

TEST_CASE("lad: exact linear data and the median case") {
    Rng rng(7);
    const Matrix Z = testing::normal_matrix(50, 3, rng);
    Vector beta(3);
    beta << 0.5, -1.0, 2.0;
    const Vector y = Z * beta;
    const LinearModel m = lad_fit(Z, y, 2000, 0.1);
    CHECK(m.objective_value <= 1e-3);

    Matrix z0 = Matrix::Zero(3, 1);
    Vector y0(3);
    y0 << 0, 0, 3;
    LadOptions opts;
    opts.fit_intercept = true;
    const LinearModel med = lad_fit(z0, y0, 2000, 0.5, opts);
    CHECK(med.objective_value == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(med.objective_value >= 1.0);
}

TEST_CASE("lad best iterate is an upper bound and tracked monotonically") {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        // 1-D without intercept: the minimizer is a weighted median of y_i / z_i.
        const Vector z = testing::normal_matrix(9, 1, rng).col(0);
        const Vector y = testing::normal_matrix(9, 1, rng).col(0);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 9; ++i) {
            const double b = y[i] / z[i];
            best = std::min(best, (z * b - y).cwiseAbs().mean());
        }
        std::vector<double> trace;
        LadOptions opts;
        opts.on_iterate = [&](const Vector& h, double) { trace.push_back((z * h[0] - y).cwiseAbs().mean()); };
        Matrix Z = z;
        const LinearModel m = lad_fit(Z, y, 500, 0.1, opts);
        CHECK(m.objective_value >= best - 1e-12);
        CHECK(m.objective_value == doctest::Approx(*std::min_element(trace.begin(), trace.end())));
        CHECK(mean_absolute_error(Z * m.weights, y) == doctest::Approx(m.objective_value));
    }
}

}
