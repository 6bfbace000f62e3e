#pragma once

#include "cfr/bnn.hpp"
#include "cfr/data.hpp"
#include "cfr/linear_models.hpp"

#include <string>
#include <vector>

namespace cfr {

struct PotentialOutcomePredictions {
    Vector y0_hat;
    Vector y1_hat;
    double ate_hat = 0.0;
};

// [X, t] with t appended as the last column.
Matrix append_treatment(const Matrix& X, const Vector& t);

// Single regression on [x, t] (ridge 1e-8); arms by toggling t.
PotentialOutcomePredictions ols_baseline(const Dataset& train, const Matrix& test_X);

struct DoublyRobustOptions {
    double clip = 100.0;
    double propensity_l2 = 1e-3;
    double outcome_lambda = 1e-8;
    // Propensity is fit on this many principal components when d exceeds
    // pca_threshold.
    Eigen::Index pca_threshold = 500;
    Eigen::Index pca_components = 100;
};

// min(1 / e, clip)
double clipped_inverse(double e, double clip);

// Per-arm regressions m0, m1 and a logistic propensity; ate_hat is the AIPW
// average over train, the test arms are m0 and m1.
PotentialOutcomePredictions doubly_robust(const Dataset& train, const Matrix& test_X, const DoublyRobustOptions& options = {});

double aipw_ate(const Vector& t, const Vector& y, const Vector& m0, const Vector& m1, const Vector& propensity, double clip);

// Top principal directions (d x k) of centered X by power iteration with
// deflation.
Matrix principal_components(const Matrix& X, Eigen::Index k, int max_iters = 1000, double tol = 1e-10);

struct LassoRidgeStages {
    std::vector<Eigen::Index> selected;  // covariate columns kept by the lasso
    LinearModel ridge;                   // fit on [x_selected, t]
};

// Lasso on standardized [x, t] with t unpenalized, then ridge on the selection.
LassoRidgeStages lasso_select(const Dataset& train, double lasso_lambda);
LinearModel ridge_on_selection(const Dataset& train, const std::vector<Eigen::Index>& selected, double ridge_lambda);
LassoRidgeStages lasso_ridge_fit(const Dataset& train, double lasso_lambda, double ridge_lambda);
PotentialOutcomePredictions lasso_ridge(const Dataset& train, const Matrix& test_X, double lasso_lambda, double ridge_lambda);

// Plain network with t joined to the input and four hidden ReLU layers: the
// balancing network code path with alpha = 0, d_r = 0, d_o = 4.
BnnConfig nn4_config(const BnnConfig& cfg);
PotentialOutcomePredictions nn4_baseline(const Dataset& train, const BnnConfig& cfg, const Matrix& test_X,
                                         std::string* warning = nullptr);

}  // namespace cfr
