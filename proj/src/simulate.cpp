#include "cfr/simulate.hpp"

#include "cfr/random.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cfr {

namespace {

Vector dirichlet(Eigen::Index size, double concentration, Rng& rng) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    Vector draw(size);
    for (Eigen::Index k = 0; k < size; ++k) draw[k] = gamma(rng);
    double total = draw.sum();
    if (!(total > 0.0)) {
        // All draws underflowed: fall back to a single vertex.
        std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
        draw.setZero();
        draw[pick(rng)] = 1.0;
        total = 1.0;
    }
    return draw / total;
}

double logistic(double a) { return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

void assemble(Dataset& data, const Vector& y0, const Vector& y1) {
    const auto treated = data.treatment.array() > 0.5;
    data.y_factual = treated.select(y1, y0);
    data.y_counterfactual = treated.select(y0, y1);
}

}  // namespace

void TopicSpace::validate(double tol) const {
    if (topics.rows() < 1 || topics.cols() < 1) throw std::invalid_argument("topic matrix is empty");
    if ((topics.array() < 0.0).any()) throw std::invalid_argument("topic matrix has negative entries");
    for (Eigen::Index k = 0; k < topics.cols(); ++k) {
        const double s = topics.col(k).sum();
        if (std::abs(s - 1.0) > tol) {
            throw std::invalid_argument("topic column " + std::to_string(k) + " sums to " + std::to_string(s) + ", not 1");
        }
    }
    for (const Vector* z : {&z_c0, &z_c1}) {
        if (z->size() != topics.cols() || (z->array() < 0.0).any() || std::abs(z->sum() - 1.0) > tol) {
            throw std::invalid_argument("centroid is not on the topic simplex");
        }
    }
}

TopicSpace with_centroids(const Matrix& topics, std::uint64_t seed, const TopicOptions& options) {
    const Eigen::Index K = topics.cols();
    Rng rng = make_rng(seed, 1);
    TopicSpace space;
    space.topics = topics;
    space.z_c1 = dirichlet(K, options.doc_alpha, rng);
    space.z_c0 = Vector::Zero(K);
    for (int d = 0; d < options.centroid_pool; ++d) space.z_c0 += dirichlet(K, options.doc_alpha, rng);
    space.z_c0 /= static_cast<double>(std::max(options.centroid_pool, 1));
    space.z_c0 /= space.z_c0.sum();
    return space;
}

TopicSpace make_topic_space(Eigen::Index K, Eigen::Index V, std::uint64_t seed, const TopicOptions& options) {
    if (K < 1 || V < 1) throw std::invalid_argument("topic space needs K, V >= 1");
    if (K > V) throw std::invalid_argument("topic space needs K <= V");
    Rng rng = make_rng(seed, 0);
    Matrix topics(V, K);
    for (Eigen::Index k = 0; k < K; ++k) topics.col(k) = dirichlet(V, options.topic_concentration, rng);
    return with_centroids(topics, seed, options);
}

Matrix load_topic_matrix(const std::string& path, double tol) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    Eigen::Index V = 0, K = 0;
    if (!(in >> V >> K) || V < 1 || K < 1) throw std::runtime_error("malformed topic matrix header in " + path);
    Matrix topics(V, K);
    for (Eigen::Index r = 0; r < V; ++r) {
        for (Eigen::Index c = 0; c < K; ++c) {
            std::string token;
            if (!(in >> token)) throw std::runtime_error("malformed topic matrix: truncated at row " + std::to_string(r));
            std::size_t used = 0;
            topics(r, c) = std::stod(token, &used);
            if (used != token.size()) throw std::runtime_error("malformed topic matrix cell '" + token + "'");
        }
    }
    std::string extra;
    if (in >> extra) throw std::runtime_error("malformed topic matrix: trailing data");
    TopicSpace check;
    check.topics = topics;
    check.z_c0 = check.z_c1 = Vector::Constant(K, 1.0 / static_cast<double>(K));
    check.validate(tol);
    return topics;
}

void save_topic_matrix(const std::string& path, const Matrix& topics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << topics.rows() << ' ' << topics.cols() << '\n';
    for (Eigen::Index r = 0; r < topics.rows(); ++r) {
        for (Eigen::Index c = 0; c < topics.cols(); ++c) out << (c ? " " : "") << format_double(topics(r, c));
        out << '\n';
    }
}

void NewsConfig::validate() const {
    if (n < 1 || K < 1 || V < 1) throw std::invalid_argument("news: n, K, V must be >= 1");
    if (kappa < 0.0) throw std::invalid_argument("news: kappa must be >= 0");
    if (noise_sd < 0.0 || !(doc_length_mean > 0.0) || !(doc_alpha > 0.0)) throw std::invalid_argument("news: invalid document or noise parameters");
}

double news_propensity(const Vector& z, const TopicSpace& space, double kappa) {
    return logistic(kappa * (z.dot(space.z_c1) - z.dot(space.z_c0)));
}

SimulatedData gen_news(const TopicSpace& space, const NewsConfig& cfg) {
    cfg.validate();
    space.validate(1e-6);
    if (space.n_topics() != cfg.K || space.vocabulary() != cfg.V) throw std::invalid_argument("news: topic space does not match K, V");

    Rng doc_rng = make_rng(cfg.seed, 10);
    Rng assign_rng = make_rng(cfg.seed, 11);
    Rng noise_rng = make_rng(cfg.seed, 12);
    std::poisson_distribution<int> length(cfg.doc_length_mean);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    SimulatedData out;
    Dataset& data = out.data;
    data.covariates = Matrix::Zero(cfg.n, cfg.V);
    data.treatment.resize(cfg.n);
    out.propensity.resize(cfg.n);
    Vector mu0(cfg.n), mu1(cfg.n), y0(cfg.n), y1(cfg.n);

    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        const Vector z = dirichlet(cfg.K, cfg.doc_alpha, doc_rng);
        const Vector word_probs = space.topics * z;
        std::discrete_distribution<Eigen::Index> word(word_probs.data(), word_probs.data() + word_probs.size());
        const int words = length(doc_rng);
        for (int w = 0; w < words; ++w) data.covariates(i, word(doc_rng)) += 1.0;

        mu0[i] = cfg.C * z.dot(space.z_c0);
        mu1[i] = cfg.C * (z.dot(space.z_c0) + z.dot(space.z_c1));
        out.propensity[i] = news_propensity(z, space, cfg.kappa);
        data.treatment[i] = unif(assign_rng) < out.propensity[i] ? 1.0 : 0.0;
        y0[i] = mu0[i] + cfg.noise_sd * noise(noise_rng);
        y1[i] = mu1[i] + cfg.noise_sd * noise(noise_rng);
    }
    assemble(data, y0, y1);
    data.mu0 = mu0;
    data.mu1 = mu1;
    out.K0 = sample_lipschitz(data.covariates, y0);
    out.K1 = sample_lipschitz(data.covariates, y1);
    return out;
}

void SurfaceConfig::validate() const {
    if (noise_sd < 0.0) throw std::invalid_argument("surface: noise_sd must be >= 0");
    if (coef_values.empty() || coef_values.size() != coef_probs.size()) throw std::invalid_argument("surface: coefficient grid malformed");
}

Matrix standardize_columns(const Matrix& X) {
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double mean = X.col(c).mean();
        const double var = (X.col(c).array() - mean).square().mean();
        if (!(var > 0.0)) throw std::invalid_argument("zero-variance column x" + std::to_string(c));
        out.col(c) = (X.col(c).array() - mean) / std::sqrt(var);
    }
    return out;
}

SimulatedData gen_loglinear_surface(const Matrix& X, const SurfaceConfig& cfg, const std::optional<Vector>& treatment) {
    cfg.validate();
    if (X.rows() < 2 || X.cols() < 1 || !X.allFinite()) throw std::invalid_argument("surface: covariates must be finite with n >= 2");
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const Matrix Xs = standardize_columns(X);

    Rng coef_rng = make_rng(cfg.seed, 20);
    Rng assign_rng = make_rng(cfg.seed, 21);
    Rng noise_rng = make_rng(cfg.seed, 22);

    Vector beta(d);
    if (cfg.beta) {
        if (cfg.beta->size() != d) throw std::invalid_argument("surface: beta width mismatch");
        beta = *cfg.beta;
    } else {
        std::discrete_distribution<std::size_t> pick(cfg.coef_probs.begin(), cfg.coef_probs.end());
        for (Eigen::Index k = 0; k < d; ++k) beta[k] = cfg.coef_values[pick(coef_rng)];
    }

    SimulatedData out;
    Dataset& data = out.data;
    data.covariates = X;
    if (treatment) {
        if (treatment->size() != n) throw std::invalid_argument("surface: treatment length mismatch");
        data.treatment = *treatment;
        out.propensity = Vector::Constant(n, treatment->mean());
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector direction(d);
        for (Eigen::Index k = 0; k < d; ++k) direction[k] = normal(assign_rng);
        direction /= std::max(direction.norm(), 1e-12);
        out.propensity = (cfg.assignment_strength * (Xs * direction)).unaryExpr([](double a) { return logistic(a); });
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        data.treatment.resize(n);
        for (int attempt = 0;; ++attempt) {
            for (Eigen::Index i = 0; i < n; ++i) data.treatment[i] = unif(assign_rng) < out.propensity[i] ? 1.0 : 0.0;
            const double treated = data.treatment.sum();
            if (treated > 0.5 && treated < static_cast<double>(n) - 0.5) break;
            if (attempt == 100) throw std::runtime_error("surface: could not draw both treatment groups");
        }
    }

    const Vector linear = Xs * beta;
    const Vector mu0 = ((Xs.array() + 0.5).matrix() * beta).array().exp();
    double treated_gap = 0.0;
    double treated = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.treatment[i] > 0.5) {
            treated_gap += linear[i] - mu0[i];
            treated += 1.0;
        }
    }
    const double omega = treated > 0.0 ? treated_gap / treated - cfg.effect_target : 0.0;
    const Vector mu1 = linear.array() - omega;

    std::normal_distribution<double> noise(0.0, 1.0);
    Vector y0(n), y1(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y0[i] = mu0[i] + cfg.noise_sd * noise(noise_rng);
        y1[i] = mu1[i] + cfg.noise_sd * noise(noise_rng);
    }
    assemble(data, y0, y1);
    data.mu0 = mu0;
    data.mu1 = mu1;
    out.K0 = sample_lipschitz(data.covariates, y0);
    out.K1 = sample_lipschitz(data.covariates, y1);
    return out;
}

Matrix synthetic_covariates(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Rng rng = make_rng(seed, 30);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = normal(rng);
    }
    return X;
}

double sample_lipschitz(const Matrix& X, const Vector& y) {
    if (X.rows() != y.size()) throw std::invalid_argument("sample_lipschitz: length mismatch");
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = X;
    double best = 0.0;
    for (Eigen::Index a = 0; a + 1 < rows.rows(); ++a) {
        const auto xa = rows.row(a);
        for (Eigen::Index b = a + 1; b < rows.rows(); ++b) {
            const double gap = std::abs(y[a] - y[b]);
            if (gap == 0.0) continue;
            const double dist = (rows.row(b) - xa).norm();
            if (dist == 0.0) return std::numeric_limits<double>::infinity();
            best = std::max(best, gap / dist);
        }
    }
    return best;
}

}  // namespace cfr
