#pragma once

#include "cfr/data.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cfr {

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;
};

// Fully connected ReLU network: d_r representation layers over x, then d_o
// layers over [phi, t], then a linear output unit.
struct MlpParams {
    std::vector<DenseLayer> rep_layers;
    std::vector<DenseLayer> out_layers;
    Vector final_weight;
    double final_bias = 0.0;

    Eigen::Index input_width() const;
    Eigen::Index representation_width() const;
    void check_shapes() const;

    Eigen::Index parameter_count() const;
    Vector flatten() const;
    // Same layout as flatten(): 1 for weights, 0 for biases.
    Vector decay_mask() const;
    void assign(const Vector& flat);
};

struct BnnConfig {
    int d_r = 2;
    int d_o = 2;
    int hidden_rep = 25;
    int hidden_out = 25;
    double alpha = 0.0;
    double weight_decay = 1e-3;
    double lr = 1e-3;
    double rmsprop_decay = 0.9;
    double rmsprop_eps = 1e-8;
    int epochs = 3000;
    int batch = 0;  // 0 or >= n means full batch
    std::uint64_t seed = 0;

    void validate() const;
};

// Glorot-uniform weights, zero biases, drawn from the seeded stream.
MlpParams init_params(Eigen::Index input_width, const BnnConfig& cfg);

struct ForwardResult {
    Matrix phi;
    Vector y_hat;
};

ForwardResult bnn_forward(const MlpParams& params, const Matrix& X, const Vector& t);

struct LossTerms {
    double mse = 0.0;
    double disc = 0.0;
    double decay = 0.0;
    double total = 0.0;
};

LossTerms bnn_loss_terms(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                         double weight_decay);

// mse + alpha * linear_disc(phi) + weight_decay * sum of squared weights.
double bnn_loss(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                double weight_decay);

// Exact gradient of bnn_loss, shaped like params.
MlpParams bnn_grad(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                   double weight_decay, LossTerms* terms = nullptr);

struct RmspropState {
    Vector mean_square;
};

// s' = rho s + (1 - rho) g^2 ; p' = p - lr g / (sqrt(s') + eps)
void rmsprop_step(Vector& params, const Vector& grads, RmspropState& state, const BnnConfig& cfg);

struct BnnTrainResult {
    MlpParams params;
    std::vector<double> loss_history;
    std::vector<double> disc_history;
};

BnnTrainResult bnn_train(const Dataset& data, const BnnConfig& cfg);

std::pair<Vector, Vector> bnn_predict_both(const MlpParams& params, const Matrix& X);

void save_mlp(const std::string& path, const MlpParams& params);
MlpParams load_mlp(const std::string& path);

}  // namespace cfr
