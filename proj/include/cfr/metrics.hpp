#pragma once

#include "cfr/data.hpp"

#include <optional>
#include <string>

namespace cfr {

struct Metrics {
    double eps_ite = 0.0;  // RMSE of the transductive ITE estimate
    double eps_ate = 0.0;
    double pehe = 0.0;
    double rmse_cf = 0.0;
    // "mu" when the true effect came from the noiseless mu0/mu1, "realized"
    // when it came from y1 - y0.
    std::string truth_source;
};

// y_i^F - y_cf_hat_i for treated units, y_cf_hat_i - y_i^F for controls.
Vector estimate_ite(const Vector& y_factual, const Vector& treatment, const Vector& y_cf_hat);

// True per-unit effect used by the metrics.
Vector true_effect(const Dataset& data, std::string* source = nullptr);

// ate_hat overrides mean(y1_hat - y0_hat) for estimators with their own
// average-effect estimate (AIPW).
Metrics eval_metrics(const Vector& y0_hat, const Vector& y1_hat, const Dataset& data,
                     std::optional<double> ate_hat = std::nullopt);

// 2 M (1 + m^2 / lambda)
double mu_bound(double m, double M, double lambda);

struct BoundReport {
    double lhs = 0.0;  // max over Q in {factual, counterfactual}
    double lhs_factual = 0.0;
    double lhs_counterfactual = 0.0;
    double disc = 0.0;
    double eta_hat = 0.0;
    double g_hat = 0.0;
    double nn_term = 0.0;
    double mid_hat = 0.0;  // disc + eta_hat
    double rhs_hat = 0.0;  // disc + g_hat + nn_term
    double mu_hat = 0.0;
    double r = 0.0;
    double K0 = 0.0;
    double K1 = 0.0;
    double lambda = 0.0;
    // Best hypothesis found for the nearest-neighbor fitting term.
    Vector g_hypothesis;

    double slack_left() const { return mid_hat - lhs; }
    double slack_right() const { return rhs_hat - mid_hat; }
    bool chain_holds(double tol = 1e-9) const { return slack_left() >= -tol && slack_right() >= -tol; }

    static std::string csv_header();
    std::string csv_row() const;
};

struct BoundOptions {
    int lad_budget = 2000;
    // Subgradient step scale; <= 0 picks one from the data.
    double lad_step0 = 0.0;
};

// Empirical evaluation of every term of the ridge-disagreement bound for a
// fixed representation phi (rows aligned with data).
BoundReport bound_terms(const Dataset& data, const Matrix& phi, const NearestNeighborMap& nn, double lambda, double K0,
                        double K1, const BoundOptions& options = {});

struct Lemma1Result {
    bool holds = true;
    double worst_slack = 0.0;
};

// |b_i - y_i^CF| <= |b_i - y_{j(i)}^F| + K_{1-t_i} d_{i,j(i)} for every unit,
// with b the per-unit counterfactual predictions.
Lemma1Result lemma1_check(const Dataset& data, const NearestNeighborMap& nn, const Vector& b, double K0, double K1,
                          double tol = 1e-9);

// Same, with b_i = h^T [phi_i, 1 - t_i].
Lemma1Result lemma1_check(const Dataset& data, const NearestNeighborMap& nn, const Vector& h, const Matrix& phi,
                          double K0, double K1, double tol = 1e-9);

}  // namespace cfr
