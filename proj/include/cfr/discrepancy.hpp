#pragma once

#include "cfr/data.hpp"

namespace cfr {

// Linear-hypothesis discrepancy between the factual sample (phi_i, t_i) and
// the counterfactual sample (phi_i, 1 - t_i) under squared loss.
struct DiscReport {
    double p = 0.0;  // treated fraction
    Vector v;        // p * mu1 - (1 - p) * mu0
    double value = 0.0;
};

// Closed form |p - 1/2| + sqrt((p - 1/2)^2 + |v|^2), the spectral norm of the
// second-moment difference. The absolute value keeps p < 1/2 consistent with
// the spectral norm.
DiscReport linear_disc(const Matrix& phi, const Vector& treatment);

// linear_disc of X diag(w), evaluated from the covariate means directly.
double weighted_linear_disc(const Matrix& X, const Vector& treatment, const Vector& w);

// Gradient of weighted_linear_disc with respect to w.
Vector weighted_linear_disc_gradient(const Matrix& X, const Vector& treatment, const Vector& w);

// Independent route: build the (k+1)x(k+1) second-moment difference of
// [phi, t] and [phi, 1-t] and take its spectral norm by power iteration.
double disc_oracle_spectral(const Matrix& phi, const Vector& treatment);

// Largest |eigenvalue| of a symmetric matrix by power iteration on A and -A
// (shifted so the target is dominant). Throws std::runtime_error when the
// Rayleigh quotient has not settled within max_iters.
double symmetric_spectral_norm(const Matrix& A, int max_iters = 1000, double tol = 1e-12);

// d value / d phi. Row i is ((2 t_i - 1) / n) * v / sqrt(c^2 + |v|^2); zero
// when v = 0.
Matrix linear_disc_gradient(const Matrix& phi, const Vector& treatment);

}  // namespace cfr
