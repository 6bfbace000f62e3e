#pragma once

#include "cfr/data.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cfr {

struct LinearModel {
    Vector weights;
    double intercept = 0.0;
    double objective_value = 0.0;

    Vector predict(const Matrix& Z) const;
};

// argmin (1/n) sum (z_i^T b + b0 - y_i)^2 + lambda |b|^2 via the normal
// equations. The intercept is never penalized.
LinearModel ridge_fit(const Matrix& Z, const Vector& y, double lambda, bool fit_intercept = true);

struct LassoOptions {
    bool fit_intercept = true;
    // Per-column multiplier on lambda; 0 leaves a column unpenalized.
    std::optional<Vector> penalty_factor;
    double tol = 1e-8;
    int max_sweeps = 10000;
};

// Cyclic coordinate descent on (1/2n)|y - Xb - b0|^2 + lambda sum_j f_j |b_j|.
LinearModel lasso_fit(const Matrix& X, const Vector& y, double lambda, const LassoOptions& options = {});

std::vector<Eigen::Index> active_set(const LinearModel& model);

double soft_threshold(double z, double lambda);

// Minimizes (1/n) sum logloss + l2 |w|^2 (intercept free) with damped Newton
// steps and backtracking. Exit gradient norm <= 1e-6.
LinearModel logistic_fit(const Matrix& X, const Vector& t, double l2);

Vector sigmoid(const Vector& z);

struct LadOptions {
    bool fit_intercept = false;
    std::optional<Vector> init;  // weights (and intercept last, when fitted)
    // Called with every iterate (weights, intercept) including the start.
    std::function<void(const Vector&, double)> on_iterate;
};

// Subgradient descent on (1/n) sum |z_i^T b + b0 - y_i| with step step0 / sqrt(k),
// returning the best iterate seen. Its objective is an upper bound on the
// minimum.
LinearModel lad_fit(const Matrix& Z, const Vector& y, int iters, double step0, const LadOptions& options = {});

double mean_absolute_error(const Vector& prediction, const Vector& y);

}  // namespace cfr
