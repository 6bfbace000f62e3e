#include "cfr/discrepancy.hpp"

#include "cfr/random.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cfr {

namespace {

void require_both_groups(const Matrix& phi, const Vector& treatment) {
    if (phi.rows() != treatment.size()) throw std::invalid_argument("phi rows and treatment length differ");
    if (phi.rows() < 1) throw std::invalid_argument("discrepancy needs n >= 1");
    const double treated = treatment.sum();
    if (treated < 0.5 || treated > static_cast<double>(treatment.size()) - 0.5) {
        throw std::invalid_argument("discrepancy undefined: one-sided treatment");
    }
}

// (1/n) sum_i (2 t_i - 1) x_i, which equals p * mu1 - (1 - p) * mu0.
Vector signed_mean(const Matrix& X, const Vector& treatment) {
    const Vector sign = 2.0 * treatment.array() - 1.0;
    return X.transpose() * sign / static_cast<double>(X.rows());
}

double closed_form(double p, double v_sq_norm) {
    const double c = p - 0.5;
    return std::abs(c) + std::sqrt(c * c + v_sq_norm);
}

void require_simplex(const Vector& w) {
    constexpr double tol = 1e-9;
    if ((w.array() < -tol).any() || std::abs(w.sum() - 1.0) > tol) {
        throw std::invalid_argument("reweighting vector is off the probability simplex");
    }
}

}  // namespace

DiscReport linear_disc(const Matrix& phi, const Vector& treatment) {
    require_both_groups(phi, treatment);
    DiscReport report;
    report.p = treatment.mean();
    report.v = signed_mean(phi, treatment);
    report.value = closed_form(report.p, report.v.squaredNorm());
    return report;
}

double weighted_linear_disc(const Matrix& X, const Vector& treatment, const Vector& w) {
    require_both_groups(X, treatment);
    if (w.size() != X.cols()) throw std::invalid_argument("weight vector width mismatch");
    require_simplex(w);
    const Vector v = signed_mean(X, treatment);
    return closed_form(treatment.mean(), w.cwiseProduct(v).squaredNorm());
}

Vector weighted_linear_disc_gradient(const Matrix& X, const Vector& treatment, const Vector& w) {
    require_both_groups(X, treatment);
    const Vector v = signed_mean(X, treatment);
    const double c = treatment.mean() - 0.5;
    const Vector wv = w.cwiseProduct(v);
    const double root = std::sqrt(c * c + wv.squaredNorm());
    if (root == 0.0) return Vector::Zero(w.size());
    return wv.cwiseProduct(v) / root;
}

double symmetric_spectral_norm(const Matrix& A, int max_iters, double tol) {
    if (A.rows() != A.cols()) throw std::invalid_argument("spectral norm needs a square matrix");
    if (A.size() == 0 || A.norm() == 0.0) return 0.0;

    // Power iteration on A^2 = A^T A: its dominant eigenvalue is the squared
    // largest |eigenvalue| of A, and +lambda / -lambda pairs collapse onto the
    // same eigenvalue so the Rayleigh quotient settles without oscillating.
    Rng rng(0x5eedULL);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    Vector x(A.rows());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = unif(rng);
    x.normalize();

    double rayleigh = 0.0;
    double change = 0.0;
    for (int iter = 0; iter < max_iters; ++iter) {
        const Vector y = A * x;
        const double next = y.squaredNorm();  // x^T A^2 x with |x| = 1
        const Vector z = A * y;
        const double z_norm = z.norm();
        change = std::abs(next - rayleigh);
        if (z_norm == 0.0) return std::sqrt(next);
        x = z / z_norm;
        if (iter > 0 && change <= tol * std::max(1.0, next)) return std::sqrt(next);
        rayleigh = next;
    }
    throw std::runtime_error("power iteration did not converge in " + std::to_string(max_iters) +
                             " iterations (last Rayleigh change " + std::to_string(change) + ")");
}

double disc_oracle_spectral(const Matrix& phi, const Vector& treatment) {
    require_both_groups(phi, treatment);
    const Eigen::Index n = phi.rows();
    const Eigen::Index k = phi.cols();
    Matrix factual = Matrix::Zero(k + 1, k + 1);
    Matrix counterfactual = Matrix::Zero(k + 1, k + 1);
    Vector z(k + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        z.head(k) = phi.row(i).transpose();
        z[k] = treatment[i];
        factual.noalias() += z * z.transpose();
        z[k] = 1.0 - treatment[i];
        counterfactual.noalias() += z * z.transpose();
    }
    const Matrix delta = (factual - counterfactual) / static_cast<double>(n);
    return symmetric_spectral_norm(delta);
}

Matrix linear_disc_gradient(const Matrix& phi, const Vector& treatment) {
    const DiscReport report = linear_disc(phi, treatment);
    const double c = report.p - 0.5;
    const double root = std::sqrt(c * c + report.v.squaredNorm());
    Matrix grad = Matrix::Zero(phi.rows(), phi.cols());
    if (report.v.squaredNorm() == 0.0 || root == 0.0) return grad;
    const double n = static_cast<double>(phi.rows());
    const Eigen::RowVectorXd direction = report.v.transpose() / root;
    for (Eigen::Index i = 0; i < phi.rows(); ++i) grad.row(i) = ((2.0 * treatment[i] - 1.0) / n) * direction;
    return grad;
}

}  // namespace cfr
