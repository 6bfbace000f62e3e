#pragma once

#include "cfr/data.hpp"
#include "cfr/linear_models.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cfr {

// Diagonal feature reweighting Phi(x) = diag(w) x with w on the simplex.
struct ReweightingRepresentation {
    Vector w;

    static ReweightingRepresentation uniform(Eigen::Index d);
    Matrix apply(const Matrix& X) const;
    bool on_simplex(double tol = 1e-9) const;
};

struct BlrConfig {
    double alpha = 0.0;
    double gamma = 0.0;
    double lambda = 1e-3;
    int outer_iters = 50;
    int h_iters = 20;
    int w_iters = 20;
    double step0_h = 0.1;
    double step0_w = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

// Euclidean projection onto {w >= 0, sum w = 1} (sort and threshold).
ReweightingRepresentation simplex_project(const Vector& v);

// Design [diag(w) x_i, t_i] for every row, with t optionally flipped.
Matrix reweighted_design(const Matrix& X, const Vector& w, const Vector& treatment);

// (1/n) sum |h^T [Wx_i, t_i] - yf_i| + alpha disc(XW) + (gamma/n) sum |h^T [Wx_i, 1-t_i] - yf_j(i)|
double blr_objective(const ReweightingRepresentation& w, const Vector& h, const Dataset& data,
                     const NearestNeighborMap& nn, double alpha, double gamma);

struct BlrTrainResult {
    ReweightingRepresentation w;
    Vector h;  // length d + 1, last entry multiplies t
    double objective = 0.0;
    std::vector<double> best_objective_per_round;
};

// Alternating subgradient descent: h steps with w fixed, then projected w
// steps with h fixed. Returns the best (w, h) pair seen.
BlrTrainResult blr_train(const Dataset& data, const NearestNeighborMap& nn, const BlrConfig& cfg);

// Ridge on [Wx_i, t_i] against yf.
LinearModel blr_finalize(const Dataset& data, const ReweightingRepresentation& w, double lambda);

std::pair<Vector, Vector> blr_predict_both(const LinearModel& model, const ReweightingRepresentation& w, const Matrix& X);

void save_blr(const std::string& path, const ReweightingRepresentation& w, const LinearModel& model, const BlrConfig& cfg);
struct BlrModelFile {
    ReweightingRepresentation w;
    LinearModel model;
    BlrConfig cfg;
};
BlrModelFile load_blr(const std::string& path);

}  // namespace cfr
