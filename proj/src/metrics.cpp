#include "cfr/metrics.hpp"

#include "cfr/discrepancy.hpp"
#include "cfr/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cfr {

namespace {

double rmse(const Vector& a, const Vector& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

Matrix with_treatment(const Matrix& phi, const Vector& t) {
    Matrix Z(phi.rows(), phi.cols() + 1);
    Z << phi, t;
    return Z;
}

Matrix stack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

Vector stack(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace

Vector estimate_ite(const Vector& y_factual, const Vector& treatment, const Vector& y_cf_hat) {
    if (y_factual.size() != treatment.size() || y_cf_hat.size() != treatment.size()) {
        throw std::invalid_argument("estimate_ite: length mismatch");
    }
    Vector ite(treatment.size());
    for (Eigen::Index i = 0; i < ite.size(); ++i) {
        ite[i] = treatment[i] > 0.5 ? y_factual[i] - y_cf_hat[i] : y_cf_hat[i] - y_factual[i];
    }
    return ite;
}

Vector true_effect(const Dataset& data, std::string* source) {
    if (data.mu0 && data.mu1) {
        if (source) *source = "mu";
        return *data.mu1 - *data.mu0;
    }
    if (data.y_counterfactual) {
        if (source) *source = "realized";
        return data.y1() - data.y0();
    }
    throw std::invalid_argument("metrics require synthetic truth");
}

Metrics eval_metrics(const Vector& y0_hat, const Vector& y1_hat, const Dataset& data, std::optional<double> ate_hat) {
    if (!data.has_truth()) throw std::invalid_argument("metrics require synthetic truth");
    if (y0_hat.size() != data.n() || y1_hat.size() != data.n()) throw std::invalid_argument("eval_metrics: length mismatch");
    Metrics m;
    const Vector effect = true_effect(data, &m.truth_source);
    const Vector& t = data.treatment;
    const Vector cf_hat = (t.array() > 0.5).select(y0_hat, y1_hat);
    Vector cf_true;
    if (data.y_counterfactual) {
        cf_true = *data.y_counterfactual;
    } else {
        cf_true = (t.array() > 0.5).select(*data.mu0, *data.mu1);
    }
    const Vector effect_hat = y1_hat - y0_hat;
    m.eps_ite = rmse(estimate_ite(data.y_factual, t, cf_hat), effect);
    m.pehe = rmse(effect_hat, effect);
    m.eps_ate = std::abs(ate_hat.value_or(effect_hat.mean()) - effect.mean());
    m.rmse_cf = rmse(cf_hat, cf_true);
    return m;
}

double mu_bound(double m, double M, double lambda) {
    if (m < 0.0 || M < 0.0 || !(lambda > 0.0)) throw std::invalid_argument("mu_bound: need m, M >= 0 and lambda > 0");
    return 2.0 * M * (1.0 + m * m / lambda);
}

std::string BoundReport::csv_header() {
    return "lhs,lhs_factual,lhs_counterfactual,disc,eta_hat,g_hat,nn_term,mid_hat,rhs_hat,mu_hat,r,K0,K1,lambda";
}

std::string BoundReport::csv_row() const {
    std::ostringstream out;
    const double values[] = {lhs, lhs_factual, lhs_counterfactual, disc, eta_hat, g_hat, nn_term,
                             mid_hat, rhs_hat, mu_hat, r, K0, K1, lambda};
    for (std::size_t k = 0; k < std::size(values); ++k) out << (k ? "," : "") << format_double(values[k]);
    return out.str();
}

BoundReport bound_terms(const Dataset& data, const Matrix& phi, const NearestNeighborMap& nn, double lambda, double K0,
                        double K1, const BoundOptions& options) {
    if (!data.y_counterfactual) throw std::invalid_argument("bound_terms requires counterfactual outcomes");
    if (phi.rows() != data.n()) throw std::invalid_argument("bound_terms: representation rows mismatch");
    if (!(lambda > 0.0)) throw std::invalid_argument("bound_terms: lambda must be > 0");
    const Eigen::Index n = data.n();
    const Vector& t = data.treatment;
    const Vector& yf = data.y_factual;
    const Vector& ycf = *data.y_counterfactual;
    const Vector flipped = Vector::Ones(n) - t;
    const Matrix Zf = with_treatment(phi, t);
    const Matrix Zcf = with_treatment(phi, flipped);

    BoundReport report;
    report.K0 = K0;
    report.K1 = K1;
    report.lambda = lambda;

    // Ridge solutions of the hypothesis class (no intercept) on both samples.
    const LinearModel beta_f = ridge_fit(Zf, yf, lambda, false);
    const LinearModel beta_cf = ridge_fit(Zcf, ycf, lambda, false);
    auto loss = [](const Matrix& Z, const Vector& y, const LinearModel& b) {
        return (Z * b.weights - y).squaredNorm() / static_cast<double>(y.size());
    };
    const double delta_f = loss(Zf, yf, beta_f) - loss(Zf, yf, beta_cf);
    const double delta_cf = loss(Zcf, ycf, beta_f) - loss(Zcf, ycf, beta_cf);

    const Vector norms_f = Zf.rowwise().norm();
    const Vector norms_cf = Zcf.rowwise().norm();
    const double m = std::max(norms_f.maxCoeff(), norms_cf.maxCoeff());
    const double M = std::max(yf.cwiseAbs().maxCoeff(), ycf.cwiseAbs().maxCoeff());
    report.mu_hat = mu_bound(m, M, lambda);
    report.r = std::max(norms_f.mean(), norms_cf.mean());
    if (!(report.mu_hat > 0.0) || !(report.r > 0.0)) throw std::invalid_argument("bound_terms: degenerate outcomes or representation");
    const double scale = lambda / (report.mu_hat * report.r);
    report.lhs_factual = scale * delta_f * delta_f;
    report.lhs_counterfactual = scale * delta_cf * delta_cf;
    report.lhs = std::max(report.lhs_factual, report.lhs_counterfactual);

    report.disc = linear_disc(phi, t).value;

    Vector y_neighbor(n);
    for (Eigen::Index i = 0; i < n; ++i) y_neighbor[i] = yf[nn.j[i]];
    const Matrix Z2 = stack(Zf, Zcf);
    const Vector y_eta = stack(yf, ycf);
    const Vector y_g = stack(yf, y_neighbor);

    // Both L1 terms are means over 2n stacked rows, times 2.
    auto eta_of = [&](const Vector& h) { return 2.0 * mean_absolute_error(Z2 * h, y_eta); };

    double step0 = options.lad_step0;
    if (step0 <= 0.0) {
        const double z_sq = Z2.rowwise().squaredNorm().mean();
        step0 = 0.1 * (1.0 + y_eta.cwiseAbs().mean()) / std::max(z_sq, 1e-12);
    }
    const double warm_lambda = 1e-8;

    LadOptions eta_options;
    eta_options.init = ridge_fit(Z2, y_eta, warm_lambda, false).weights;
    const LinearModel eta_fit = lad_fit(Z2, y_eta, options.lad_budget, step0, eta_options);

    // Every g iterate h also certifies eta(h) <= g(h) + nn_term, so eta_hat
    // takes the best of both trajectories.
    double eta_along_g = std::numeric_limits<double>::infinity();
    LadOptions g_options;
    g_options.init = ridge_fit(Z2, y_g, warm_lambda, false).weights;
    g_options.on_iterate = [&](const Vector& h, double) { eta_along_g = std::min(eta_along_g, eta_of(h)); };
    const LinearModel g_fit = lad_fit(Z2, y_g, options.lad_budget, step0, g_options);

    report.eta_hat = std::min(2.0 * eta_fit.objective_value, eta_along_g);
    report.g_hat = 2.0 * g_fit.objective_value;
    report.g_hypothesis = g_fit.weights;

    double treated_sum = 0.0;
    double control_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) (t[i] > 0.5 ? treated_sum : control_sum) += nn.dist[i];
    report.nn_term = (K0 * treated_sum + K1 * control_sum) / static_cast<double>(n);

    report.mid_hat = report.disc + report.eta_hat;
    report.rhs_hat = report.disc + report.g_hat + report.nn_term;
    return report;
}

Lemma1Result lemma1_check(const Dataset& data, const NearestNeighborMap& nn, const Vector& b, double K0, double K1,
                          double tol) {
    if (!data.y_counterfactual) throw std::invalid_argument("lemma1_check requires counterfactual outcomes");
    if (b.size() != data.n()) throw std::invalid_argument("lemma1_check: prediction length mismatch");
    const Vector& ycf = *data.y_counterfactual;
    Lemma1Result result;
    result.worst_slack = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double K = data.treatment[i] > 0.5 ? K0 : K1;
        const double bound = std::abs(b[i] - data.y_factual[nn.j[i]]) + K * nn.dist[i];
        const double slack = bound - std::abs(b[i] - ycf[i]);
        result.worst_slack = std::min(result.worst_slack, slack);
        if (slack < -tol * (1.0 + std::abs(bound))) result.holds = false;
    }
    return result;
}

Lemma1Result lemma1_check(const Dataset& data, const NearestNeighborMap& nn, const Vector& h, const Matrix& phi,
                          double K0, double K1, double tol) {
    if (h.size() != phi.cols() + 1) throw std::invalid_argument("lemma1_check: hypothesis width mismatch");
    const Vector flipped = Vector::Ones(data.n()) - data.treatment;
    return lemma1_check(data, nn, with_treatment(phi, flipped) * h, K0, K1, tol);
}

}  // namespace cfr
