#include "cfr/blr.hpp"

#include "cfr/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cfr {

namespace {

Vector sign_of(const Vector& r) {
    return r.unaryExpr([](double a) { return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); });
}

std::string join(const Vector& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
    }
    return out;
}

Vector parse_vector(const std::string& text) {
    std::istringstream in(text);
    std::vector<double> values;
    std::string token;
    while (in >> token) values.push_back(std::stod(token));
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

ReweightingRepresentation ReweightingRepresentation::uniform(Eigen::Index d) {
    return {Vector::Constant(d, 1.0 / static_cast<double>(d))};
}

Matrix ReweightingRepresentation::apply(const Matrix& X) const {
    if (X.cols() != w.size()) throw std::invalid_argument("reweighting width mismatch");
    return X * w.asDiagonal();
}

bool ReweightingRepresentation::on_simplex(double tol) const {
    return (w.array() >= -tol).all() && std::abs(w.sum() - 1.0) <= tol;
}

void BlrConfig::validate() const {
    if (outer_iters < 1 || h_iters < 1 || w_iters < 1) throw std::invalid_argument("blr: budgets must be >= 1");
    if (alpha < 0.0 || gamma < 0.0) throw std::invalid_argument("blr: alpha and gamma must be >= 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("blr: lambda must be > 0");
    if (!(step0_h > 0.0) || !(step0_w > 0.0)) throw std::invalid_argument("blr: step sizes must be > 0");
}

ReweightingRepresentation simplex_project(const Vector& v) {
    if (v.size() < 1) throw std::invalid_argument("simplex_project needs d >= 1");
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[k] - candidate > 0.0) theta = candidate;
    }
    return {(v.array() - theta).cwiseMax(0.0)};
}

Matrix reweighted_design(const Matrix& X, const Vector& w, const Vector& treatment) {
    Matrix Z(X.rows(), X.cols() + 1);
    Z.leftCols(X.cols()) = X * w.asDiagonal();
    Z.col(X.cols()) = treatment;
    return Z;
}

double blr_objective(const ReweightingRepresentation& w, const Vector& h, const Dataset& data,
                     const NearestNeighborMap& nn, double alpha, double gamma) {
    if (w.w.size() != data.d() || h.size() != data.d() + 1) throw std::invalid_argument("blr_objective: dimension mismatch");
    const Vector flipped = Vector::Ones(data.n()) - data.treatment;
    const Vector factual = reweighted_design(data.covariates, w.w, data.treatment) * h;
    double value = (factual - data.y_factual).cwiseAbs().mean();
    if (alpha != 0.0) value += alpha * weighted_linear_disc(data.covariates, data.treatment, w.w);
    if (gamma != 0.0) {
        const Vector counterfactual = reweighted_design(data.covariates, w.w, flipped) * h;
        double nn_fit = 0.0;
        for (Eigen::Index i = 0; i < data.n(); ++i) nn_fit += std::abs(counterfactual[i] - data.y_factual[nn.j[i]]);
        value += gamma * nn_fit / static_cast<double>(data.n());
    }
    return value;
}

BlrTrainResult blr_train(const Dataset& data, const NearestNeighborMap& nn, const BlrConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    if (nn.j.size() != n) throw std::invalid_argument("blr_train: neighbor map does not match data");
    const Matrix& X = data.covariates;
    const Vector& t = data.treatment;
    const Vector flipped = Vector::Ones(n) - t;
    Vector y_neighbor(n);
    for (Eigen::Index i = 0; i < n; ++i) y_neighbor[i] = data.y_factual[nn.j[i]];
    const double inv_n = 1.0 / static_cast<double>(n);

    ReweightingRepresentation w = ReweightingRepresentation::uniform(d);
    Vector h = Vector::Zero(d + 1);

    BlrTrainResult result;
    result.w = w;
    result.h = h;
    result.objective = blr_objective(w, h, data, nn, cfg.alpha, cfg.gamma);

    auto consider = [&](int round) {
        const double value = blr_objective(w, h, data, nn, cfg.alpha, cfg.gamma);
        if (!std::isfinite(value)) throw std::runtime_error("blr: non-finite objective in round " + std::to_string(round));
        if (value < result.objective) {
            result.objective = value;
            result.w = w;
            result.h = h;
        }
    };

    long h_step = 0;
    long w_step = 0;
    for (int round = 0; round < cfg.outer_iters; ++round) {
        const Matrix XW = w.apply(X);
        for (int k = 0; k < cfg.h_iters; ++k) {
            const Vector hx = h.head(d);
            const Vector s_f = sign_of(XW * hx + h[d] * t - data.y_factual);
            Vector g(d + 1);
            g.head(d) = XW.transpose() * s_f * inv_n;
            g[d] = t.dot(s_f) * inv_n;
            if (cfg.gamma != 0.0) {
                const Vector s_cf = sign_of(XW * hx + h[d] * flipped - y_neighbor);
                g.head(d) += cfg.gamma * inv_n * (XW.transpose() * s_cf);
                g[d] += cfg.gamma * inv_n * flipped.dot(s_cf);
            }
            h -= cfg.step0_h / std::sqrt(static_cast<double>(++h_step)) * g;
            consider(round);
        }
        for (int k = 0; k < cfg.w_iters; ++k) {
            const Vector hx = h.head(d);
            const Vector Xh = X * hx.asDiagonal() * w.w;  // h^T W x_i
            const Vector s_f = sign_of(Xh + h[d] * t - data.y_factual);
            Vector g = hx.cwiseProduct(X.transpose() * s_f) * inv_n;
            if (cfg.gamma != 0.0) {
                const Vector s_cf = sign_of(Xh + h[d] * flipped - y_neighbor);
                g += cfg.gamma * inv_n * hx.cwiseProduct(X.transpose() * s_cf);
            }
            if (cfg.alpha != 0.0) g += cfg.alpha * weighted_linear_disc_gradient(X, t, w.w);
            w = simplex_project(w.w - cfg.step0_w / std::sqrt(static_cast<double>(++w_step)) * g);
            consider(round);
        }
        result.best_objective_per_round.push_back(result.objective);
    }
    return result;
}

LinearModel blr_finalize(const Dataset& data, const ReweightingRepresentation& w, double lambda) {
    return ridge_fit(reweighted_design(data.covariates, w.w, data.treatment), data.y_factual, lambda);
}

std::pair<Vector, Vector> blr_predict_both(const LinearModel& model, const ReweightingRepresentation& w, const Matrix& X) {
    if (model.weights.size() != X.cols() + 1 || w.w.size() != X.cols()) {
        throw std::invalid_argument("blr_predict_both: dimension mismatch");
    }
    const Vector zeros = Vector::Zero(X.rows());
    const Vector ones = Vector::Ones(X.rows());
    return {model.predict(reweighted_design(X, w.w, zeros)), model.predict(reweighted_design(X, w.w, ones))};
}

void save_blr(const std::string& path, const ReweightingRepresentation& w, const LinearModel& model, const BlrConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "w = " << join(w.w) << '\n';
    out << "weights = " << join(model.weights) << '\n';
    out << "intercept = " << format_double(model.intercept) << '\n';
    out << "alpha = " << format_double(cfg.alpha) << '\n';
    out << "gamma = " << format_double(cfg.gamma) << '\n';
    out << "lambda = " << format_double(cfg.lambda) << '\n';
    out << "outer_iters = " << cfg.outer_iters << '\n';
    out << "h_iters = " << cfg.h_iters << '\n';
    out << "w_iters = " << cfg.w_iters << '\n';
    out << "step0_h = " << format_double(cfg.step0_h) << '\n';
    out << "step0_w = " << format_double(cfg.step0_w) << '\n';
    out << "seed = " << cfg.seed << '\n';
}

BlrModelFile load_blr(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(std::string("blr model file missing key ") + key);
        return it->second;
    };
    BlrModelFile file;
    file.w.w = parse_vector(get("w"));
    file.model.weights = parse_vector(get("weights"));
    file.model.intercept = std::stod(get("intercept"));
    file.cfg.alpha = std::stod(get("alpha"));
    file.cfg.gamma = std::stod(get("gamma"));
    file.cfg.lambda = std::stod(get("lambda"));
    file.cfg.outer_iters = std::stoi(get("outer_iters"));
    file.cfg.h_iters = std::stoi(get("h_iters"));
    file.cfg.w_iters = std::stoi(get("w_iters"));
    file.cfg.step0_h = std::stod(get("step0_h"));
    file.cfg.step0_w = std::stod(get("step0_w"));
    file.cfg.seed = std::stoull(get("seed"));
    return file;
}

}  // namespace cfr
