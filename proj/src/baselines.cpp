#include "cfr/baselines.hpp"

#include "cfr/random.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace cfr {

namespace {

PotentialOutcomePredictions toggle_arms(const LinearModel& model, const Matrix& test_X) {
    PotentialOutcomePredictions out;
    out.y0_hat = model.predict(append_treatment(test_X, Vector::Zero(test_X.rows())));
    out.y1_hat = model.predict(append_treatment(test_X, Vector::Ones(test_X.rows())));
    out.ate_hat = (out.y1_hat - out.y0_hat).mean();
    return out;
}

Matrix select_columns(const Matrix& X, const std::vector<Eigen::Index>& columns) {
    Matrix out(X.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(columns[k]);
    return out;
}

}  // namespace

Matrix append_treatment(const Matrix& X, const Vector& t) {
    if (t.size() != X.rows()) throw std::invalid_argument("append_treatment: length mismatch");
    Matrix Z(X.rows(), X.cols() + 1);
    Z << X, t;
    return Z;
}

PotentialOutcomePredictions ols_baseline(const Dataset& train, const Matrix& test_X) {
    const LinearModel model = ridge_fit(append_treatment(train.covariates, train.treatment), train.y_factual, 1e-8);
    return toggle_arms(model, test_X);
}

double clipped_inverse(double e, double clip) {
    if (!(e > 0.0)) return clip;
    return std::min(1.0 / e, clip);
}

double aipw_ate(const Vector& t, const Vector& y, const Vector& m0, const Vector& m1, const Vector& propensity, double clip) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double treated = t[i];
        total += m1[i] + treated * (y[i] - m1[i]) * clipped_inverse(propensity[i], clip) - m0[i] -
                 (1.0 - treated) * (y[i] - m0[i]) * clipped_inverse(1.0 - propensity[i], clip);
    }
    return total / static_cast<double>(t.size());
}

Matrix principal_components(const Matrix& X, Eigen::Index k, int max_iters, double tol) {
    const Matrix centered = X.rowwise() - X.colwise().mean();
    Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(X.rows() - 1, 1));
    k = std::min(k, X.cols());
    Matrix components(X.cols(), k);
    Rng rng(0x9ca5eedULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index c = 0; c < k; ++c) {
        Vector v(X.cols());
        for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = normal(rng);
        v.normalize();
        double eigenvalue = 0.0;
        for (int iter = 0; iter < max_iters; ++iter) {
            Vector next = cov * v;
            const double norm = next.norm();
            if (norm == 0.0) break;
            next /= norm;
            const double change = (next - v).norm();
            v = next;
            eigenvalue = norm;
            if (change < tol) break;
        }
        components.col(c) = v;
        cov -= eigenvalue * v * v.transpose();
    }
    return components;
}

PotentialOutcomePredictions doubly_robust(const Dataset& train, const Matrix& test_X, const DoublyRobustOptions& options) {
    const Eigen::Index treated = train.n_treated();
    if (treated == 0 || treated == train.n()) throw std::invalid_argument("doubly_robust: both groups must be nonempty");
    std::vector<Eigen::Index> rows0, rows1;
    for (Eigen::Index i = 0; i < train.n(); ++i) (train.treatment[i] > 0.5 ? rows1 : rows0).push_back(i);
    const Dataset control = train.subset(rows0);
    const Dataset exposed = train.subset(rows1);
    const LinearModel m0 = ridge_fit(control.covariates, control.y_factual, options.outcome_lambda);
    const LinearModel m1 = ridge_fit(exposed.covariates, exposed.y_factual, options.outcome_lambda);

    Matrix propensity_X = train.covariates;
    if (train.d() > options.pca_threshold) {
        const Matrix components = principal_components(train.covariates, options.pca_components);
        propensity_X = (train.covariates.rowwise() - train.covariates.colwise().mean()) * components;
    }
    const LinearModel propensity_model = logistic_fit(propensity_X, train.treatment, options.propensity_l2);
    const Vector propensity = sigmoid(propensity_model.predict(propensity_X));

    PotentialOutcomePredictions out;
    out.ate_hat = aipw_ate(train.treatment, train.y_factual, m0.predict(train.covariates), m1.predict(train.covariates),
                           propensity, options.clip);
    out.y0_hat = m0.predict(test_X);
    out.y1_hat = m1.predict(test_X);
    return out;
}

LassoRidgeStages lasso_select(const Dataset& train, double lasso_lambda) {
    const Matrix Z = append_treatment(train.covariates, train.treatment);
    const Eigen::Index d = train.d();
    Matrix Zs(Z.rows(), Z.cols());
    std::vector<bool> constant(static_cast<std::size_t>(Z.cols()), false);
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
        const double mean = Z.col(c).mean();
        const double sd = std::sqrt((Z.col(c).array() - mean).square().mean());
        if (sd > 0.0) {
            Zs.col(c) = (Z.col(c).array() - mean) / sd;
        } else {
            Zs.col(c).setZero();
            constant[static_cast<std::size_t>(c)] = true;
        }
    }
    LassoOptions options;
    options.penalty_factor = Vector::Ones(d + 1);
    (*options.penalty_factor)[d] = 0.0;
    const LinearModel lasso = lasso_fit(Zs, train.y_factual, lasso_lambda, options);
    LassoRidgeStages stages;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (lasso.weights[j] != 0.0 && !constant[static_cast<std::size_t>(j)]) stages.selected.push_back(j);
    }
    return stages;
}

LinearModel ridge_on_selection(const Dataset& train, const std::vector<Eigen::Index>& selected, double ridge_lambda) {
    return ridge_fit(append_treatment(select_columns(train.covariates, selected), train.treatment), train.y_factual,
                     ridge_lambda);
}

LassoRidgeStages lasso_ridge_fit(const Dataset& train, double lasso_lambda, double ridge_lambda) {
    if (!(lasso_lambda > 0.0) || !(ridge_lambda > 0.0)) throw std::invalid_argument("lasso_ridge: lambdas must be > 0");
    LassoRidgeStages stages = lasso_select(train, lasso_lambda);
    stages.ridge = ridge_on_selection(train, stages.selected, ridge_lambda);
    return stages;
}

PotentialOutcomePredictions lasso_ridge(const Dataset& train, const Matrix& test_X, double lasso_lambda, double ridge_lambda) {
    const LassoRidgeStages stages = lasso_ridge_fit(train, lasso_lambda, ridge_lambda);
    return toggle_arms(stages.ridge, select_columns(test_X, stages.selected));
}

BnnConfig nn4_config(const BnnConfig& cfg) {
    BnnConfig out = cfg;
    out.alpha = 0.0;
    out.d_r = 0;
    out.d_o = 4;
    out.hidden_out = cfg.hidden_rep;
    return out;
}

PotentialOutcomePredictions nn4_baseline(const Dataset& train, const BnnConfig& cfg, const Matrix& test_X, std::string* warning) {
    if (cfg.alpha != 0.0 && warning) *warning = "nn4: alpha is fixed to 0; configured alpha ignored";
    const BnnTrainResult trained = bnn_train(train, nn4_config(cfg));
    PotentialOutcomePredictions out;
    std::tie(out.y0_hat, out.y1_hat) = bnn_predict_both(trained.params, test_X);
    out.ate_hat = (out.y1_hat - out.y0_hat).mean();
    return out;
}

}  // namespace cfr
