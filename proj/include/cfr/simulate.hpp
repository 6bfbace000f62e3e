#pragma once

#include "cfr/data.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cfr {

struct TopicSpace {
    Matrix topics;  // V x K, columns are word distributions
    Vector z_c0;    // desktop centroid: mean topic mixture of a document pool
    Vector z_c1;    // mobile centroid: topic mixture of one random document

    Eigen::Index vocabulary() const { return topics.rows(); }
    Eigen::Index n_topics() const { return topics.cols(); }
    void validate(double tol = 1e-9) const;
};

struct TopicOptions {
    double topic_concentration = 0.1;  // symmetric Dirichlet over words
    double doc_alpha = 0.5;            // symmetric Dirichlet over topics per document
    int centroid_pool = 1000;
};

TopicSpace make_topic_space(Eigen::Index K, Eigen::Index V, std::uint64_t seed, const TopicOptions& options = {});

// Redraws the two centroids over fixed topics.
TopicSpace with_centroids(const Matrix& topics, std::uint64_t seed, const TopicOptions& options = {});

// Dense decimal text, first line "V K", then V rows of K values.
Matrix load_topic_matrix(const std::string& path, double tol = 1e-6);
void save_topic_matrix(const std::string& path, const Matrix& topics);

struct NewsConfig {
    Eigen::Index n = 5000;
    Eigen::Index K = 50;
    Eigen::Index V = 300;
    double C = 50.0;
    double kappa = 10.0;
    double doc_length_mean = 200.0;  // Poisson
    double doc_alpha = 0.5;
    double noise_sd = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimulatedData {
    Dataset data;
    // Lipschitz constants of the realized potential outcomes Y0, Y1 over the
    // emitted covariates (Euclidean).
    double K0 = 0.0;
    double K1 = 0.0;
    Vector propensity;  // p(t = 1 | x) used for assignment
};

// p(t=1|x) = e^{kappa z.zc1} / (e^{kappa z.zc0} + e^{kappa z.zc1})
double news_propensity(const Vector& z, const TopicSpace& space, double kappa);

SimulatedData gen_news(const TopicSpace& space, const NewsConfig& cfg);

struct SurfaceConfig {
    std::vector<double> coef_values{0.0, 0.1, 0.2, 0.3, 0.4};
    std::vector<double> coef_probs{0.6, 0.1, 0.1, 0.1, 0.1};
    double effect_target = 4.0;  // mean treated effect after offset calibration
    double noise_sd = 1.0;
    double assignment_strength = 1.0;  // only used when treatment is not supplied
    std::uint64_t seed = 0;
    // Fixed coefficients instead of draws from the grid.
    std::optional<Vector> beta;

    void validate() const;
};

// Column standardization; throws naming the first zero-variance column.
Matrix standardize_columns(const Matrix& X);

// mu0 = exp((X_std + 0.5) beta), mu1 = X_std beta - omega.
SimulatedData gen_loglinear_surface(const Matrix& X, const SurfaceConfig& cfg,
                                    const std::optional<Vector>& treatment = std::nullopt);

Matrix synthetic_covariates(Eigen::Index n, Eigen::Index d, std::uint64_t seed);

// max_{a != b} |y_a - y_b| / |x_a - x_b|; pairs at distance 0 with distinct
// outcomes give +infinity.
double sample_lipschitz(const Matrix& X, const Vector& y);

}  // namespace cfr
