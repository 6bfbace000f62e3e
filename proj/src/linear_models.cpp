#include "cfr/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cfr {

Vector LinearModel::predict(const Matrix& Z) const {
    if (Z.cols() != weights.size()) throw std::invalid_argument("design width does not match model weights");
    return (Z * weights).array() + intercept;
}

double mean_absolute_error(const Vector& prediction, const Vector& y) {
    return (prediction - y).cwiseAbs().mean();
}

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

Vector sigmoid(const Vector& z) {
    return z.unaryExpr([](double a) {
        if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
        const double e = std::exp(a);
        return e / (1.0 + e);
    });
}

LinearModel ridge_fit(const Matrix& Z, const Vector& y, double lambda, bool fit_intercept) {
    if (!(lambda > 0.0)) throw std::invalid_argument("ridge lambda must be positive");
    if (Z.rows() != y.size()) throw std::invalid_argument("ridge: design rows and target length differ");
    if (!Z.allFinite() || !y.allFinite()) throw std::invalid_argument("ridge: non-finite input");
    const double n = static_cast<double>(Z.rows());

    Eigen::RowVectorXd z_mean = Eigen::RowVectorXd::Zero(Z.cols());
    double y_mean = 0.0;
    if (fit_intercept) {
        z_mean = Z.colwise().mean();
        y_mean = y.mean();
    }
    const Matrix Zc = Z.rowwise() - z_mean;
    const Vector yc = y.array() - y_mean;

    Matrix gram = Zc.transpose() * Zc / n;
    gram.diagonal().array() += lambda;
    const Vector rhs = Zc.transpose() * yc / n;
    Eigen::LDLT<Matrix> solver(gram);
    LinearModel model;
    model.weights = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !model.weights.allFinite()) {
        throw std::runtime_error("ridge: normal equations could not be solved");
    }
    const double residual = (gram * model.weights - rhs).norm();
    if (residual > 1e-6 * std::max(1.0, rhs.norm())) {
        throw std::runtime_error("ridge: solve residual " + std::to_string(residual) + " exceeds 1e-6");
    }
    model.intercept = fit_intercept ? y_mean - z_mean.dot(model.weights) : 0.0;
    const Vector r = model.predict(Z) - y;
    model.objective_value = r.squaredNorm() / n + lambda * model.weights.squaredNorm();
    return model;
}

LinearModel lasso_fit(const Matrix& X, const Vector& y, double lambda, const LassoOptions& options) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lasso lambda must be positive");
    if (X.rows() != y.size()) throw std::invalid_argument("lasso: design rows and target length differ");
    const Eigen::Index d = X.cols();
    const double n = static_cast<double>(X.rows());
    Vector factor = options.penalty_factor.value_or(Vector::Ones(d));
    if (factor.size() != d) throw std::invalid_argument("lasso: penalty_factor width mismatch");

    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(d);
    double y_mean = 0.0;
    if (options.fit_intercept) {
        x_mean = X.colwise().mean();
        y_mean = y.mean();
    }
    const Matrix Xc = X.rowwise() - x_mean;
    const Vector col_sq = Xc.colwise().squaredNorm().transpose() / n;

    Vector beta = Vector::Zero(d);
    Vector residual = y.array() - y_mean;
    double max_change = std::numeric_limits<double>::infinity();
    int sweep = 0;
    for (; sweep < options.max_sweeps && max_change > options.tol; ++sweep) {
        max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (col_sq[j] == 0.0) continue;
            const double old = beta[j];
            const double rho = Xc.col(j).dot(residual) / n + col_sq[j] * old;
            const double updated = soft_threshold(rho, lambda * factor[j]) / col_sq[j];
            if (updated != old) {
                residual.noalias() -= (updated - old) * Xc.col(j);
                beta[j] = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
    }
    if (max_change > options.tol) {
        throw std::runtime_error("lasso: no convergence after " + std::to_string(options.max_sweeps) +
                                 " sweeps (last max change " + std::to_string(max_change) + ")");
    }
    LinearModel model;
    model.weights = beta;
    model.intercept = options.fit_intercept ? y_mean - x_mean.dot(beta) : 0.0;
    model.objective_value =
        residual.squaredNorm() / (2.0 * n) + lambda * factor.cwiseProduct(beta).cwiseAbs().sum();
    return model;
}

std::vector<Eigen::Index> active_set(const LinearModel& model) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
        if (model.weights[j] != 0.0) active.push_back(j);
    }
    return active;
}

LinearModel logistic_fit(const Matrix& X, const Vector& t, double l2) {
    if (l2 < 0.0) throw std::invalid_argument("logistic l2 must be nonnegative");
    if (X.rows() != t.size()) throw std::invalid_argument("logistic: design rows and label length differ");
    const double treated = t.sum();
    if (treated < 0.5 || treated > static_cast<double>(t.size()) - 0.5) {
        throw std::invalid_argument("logistic: both classes must be present");
    }
    const Eigen::Index d = X.cols();
    const double n = static_cast<double>(X.rows());
    Matrix A(X.rows(), d + 1);
    A << X, Vector::Ones(X.rows());

    Vector theta = Vector::Zero(d + 1);
    theta[d] = std::log(treated / (n - treated));
    auto objective = [&](const Vector& th) {
        const Vector eta = A * th;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double a = eta[i];
            const double softplus = a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
            loss += softplus - t[i] * a;
        }
        return loss / n + l2 * th.head(d).squaredNorm();
    };
    auto gradient = [&](const Vector& th, Vector& prob) {
        prob = sigmoid(A * th);
        Vector g = A.transpose() * (prob - t) / n;
        g.head(d) += 2.0 * l2 * th.head(d);
        return g;
    };

    Vector prob;
    Vector grad = gradient(theta, prob);
    double f = objective(theta);
    constexpr int max_iters = 500;
    int iter = 0;
    for (; iter < max_iters && grad.norm() > 1e-6; ++iter) {
        const Vector w = prob.cwiseProduct(Vector::Ones(prob.size()) - prob);
        Matrix hessian = A.transpose() * w.asDiagonal() * A / n;
        hessian.diagonal().head(d).array() += 2.0 * l2;
        hessian.diagonal().array() += 1e-12;
        Eigen::LDLT<Matrix> solver(hessian);
        Vector step = solver.solve(grad);
        if (solver.info() != Eigen::Success || !step.allFinite() || step.dot(grad) <= 0.0) step = grad;
        double scale = 1.0;
        double f_next = objective(theta - step);
        while (f_next > f - 1e-4 * scale * step.dot(grad) && scale > 1e-12) {
            scale *= 0.5;
            f_next = objective(theta - scale * step);
        }
        if (!(f_next <= f)) break;
        theta -= scale * step;
        f = f_next;
        grad = gradient(theta, prob);
    }
    const Vector logits = A * theta;
    const bool separated = ((2.0 * t.array() - 1.0) * logits.array() > 0.0).all();
    if (l2 == 0.0 && (separated || logits.cwiseAbs().maxCoeff() > 30.0 || grad.norm() > 1e-6)) {
        throw std::runtime_error("separation; set l2 > 0");
    }
    if (grad.norm() > 1e-6) {
        throw std::runtime_error("logistic: gradient norm " + std::to_string(grad.norm()) + " after " +
                                 std::to_string(iter) + " iterations");
    }
    LinearModel model;
    model.weights = theta.head(d);
    model.intercept = theta[d];
    model.objective_value = f;
    return model;
}

LinearModel lad_fit(const Matrix& Z, const Vector& y, int iters, double step0, const LadOptions& options) {
    if (iters < 1) throw std::invalid_argument("lad: iters must be >= 1");
    if (!(step0 > 0.0)) throw std::invalid_argument("lad: step0 must be positive");
    if (Z.rows() != y.size()) throw std::invalid_argument("lad: design rows and target length differ");
    const Eigen::Index m = Z.cols();
    const double n = static_cast<double>(Z.rows());

    Vector beta = Vector::Zero(m);
    double b0 = 0.0;
    if (options.init) {
        const Vector& init = *options.init;
        if (init.size() != m + (options.fit_intercept ? 1 : 0)) throw std::invalid_argument("lad: init width mismatch");
        beta = init.head(m);
        if (options.fit_intercept) b0 = init[m];
    }

    LinearModel best;
    best.objective_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= iters; ++k) {
        const Vector r = (Z * beta).array() + b0 - y.array();
        const double objective = r.cwiseAbs().sum() / n;
        if (!std::isfinite(objective)) throw std::runtime_error("lad: non-finite objective at iteration " + std::to_string(k));
        if (options.on_iterate) options.on_iterate(beta, b0);
        if (objective < best.objective_value) {
            best.weights = beta;
            best.intercept = b0;
            best.objective_value = objective;
        }
        if (k == iters) break;
        const Vector sign = r.unaryExpr([](double a) { return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); });
        const double step = step0 / std::sqrt(static_cast<double>(k + 1));
        beta.noalias() -= step * (Z.transpose() * sign / n);
        if (options.fit_intercept) b0 -= step * sign.mean();
    }
    return best;
}

}  // namespace cfr
