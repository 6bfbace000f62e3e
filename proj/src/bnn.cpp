#include "cfr/bnn.hpp"

#include "cfr/discrepancy.hpp"
#include "cfr/random.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfr {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Affine map applied row-wise: A W^T + 1 b^T.
Matrix affine(const Matrix& A, const DenseLayer& layer) {
    Matrix z = A * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

DenseLayer glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
        for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = unif(rng);
    }
    layer.bias = Vector::Zero(fan_out);
    return layer;
}

// Every pre-activation and activation of one pass, kept for backprop.
struct Trace {
    std::vector<Matrix> rep_pre, rep_act;  // rep_act[0] = X
    std::vector<Matrix> out_pre, out_act;  // out_act[0] = [phi, t]
    Vector y_hat;
};

Trace run(const MlpParams& params, const Matrix& X, const Vector& t) {
    if (X.cols() != params.input_width()) throw std::invalid_argument("bnn: input width mismatch");
    if (t.size() != X.rows()) throw std::invalid_argument("bnn: treatment length mismatch");
    Trace trace;
    trace.rep_act.push_back(X);
    for (const auto& layer : params.rep_layers) {
        trace.rep_pre.push_back(affine(trace.rep_act.back(), layer));
        trace.rep_act.push_back(relu(trace.rep_pre.back()));
    }
    const Matrix& phi = trace.rep_act.back();
    Matrix joined(phi.rows(), phi.cols() + 1);
    joined << phi, t;
    trace.out_act.push_back(std::move(joined));
    for (const auto& layer : params.out_layers) {
        trace.out_pre.push_back(affine(trace.out_act.back(), layer));
        trace.out_act.push_back(relu(trace.out_pre.back()));
    }
    trace.y_hat = (trace.out_act.back() * params.final_weight).array() + params.final_bias;
    return trace;
}

bool both_groups(const Vector& t) {
    const double treated = t.sum();
    return treated > 0.5 && treated < static_cast<double>(t.size()) - 0.5;
}

double squared_weights(const MlpParams& params) {
    double total = params.final_weight.squaredNorm();
    for (const auto& layer : params.rep_layers) total += layer.weight.squaredNorm();
    for (const auto& layer : params.out_layers) total += layer.weight.squaredNorm();
    return total;
}

template <class Fn>
void for_each_block(const MlpParams& params, Fn&& fn) {
    for (const auto& layer : params.rep_layers) {
        fn(layer.weight.data(), layer.weight.size(), true);
        fn(layer.bias.data(), layer.bias.size(), false);
    }
    for (const auto& layer : params.out_layers) {
        fn(layer.weight.data(), layer.weight.size(), true);
        fn(layer.bias.data(), layer.bias.size(), false);
    }
    fn(params.final_weight.data(), params.final_weight.size(), true);
    fn(&params.final_bias, Eigen::Index{1}, false);
}

void shuffle(std::vector<Eigen::Index>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t k = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[k]);
    }
}

void write_layer(std::ostream& out, const char* tag, const DenseLayer& layer) {
    out << tag << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out << (c ? " " : "") << format_double(layer.weight(r, c));
        out << '\n';
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << (r ? " " : "") << format_double(layer.bias[r]);
    out << '\n';
}

double read_double(std::istream& in) {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("mlp file truncated");
    return std::stod(token);
}

DenseLayer read_layer(std::istream& in, const std::string& expected_tag) {
    std::string tag;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> rows >> cols) || tag != expected_tag) throw std::runtime_error("mlp file: expected " + expected_tag);
    DenseLayer layer;
    layer.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = read_double(in);
    }
    layer.bias.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = read_double(in);
    return layer;
}

}  // namespace

Eigen::Index MlpParams::input_width() const {
    if (!rep_layers.empty()) return rep_layers.front().weight.cols();
    if (!out_layers.empty()) return out_layers.front().weight.cols() - 1;
    return final_weight.size() - 1;
}

Eigen::Index MlpParams::representation_width() const {
    return rep_layers.empty() ? input_width() : rep_layers.back().weight.rows();
}

void MlpParams::check_shapes() const {
    Eigen::Index width = input_width();
    for (const auto& layer : rep_layers) {
        if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("bnn: representation widths do not chain");
        width = layer.weight.rows();
    }
    width += 1;
    for (const auto& layer : out_layers) {
        if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("bnn: output widths do not chain");
        width = layer.weight.rows();
    }
    if (final_weight.size() != width) throw std::invalid_argument("bnn: final layer width mismatch");
}

Eigen::Index MlpParams::parameter_count() const {
    Eigen::Index count = 0;
    for_each_block(*this, [&](const double*, Eigen::Index size, bool) { count += size; });
    return count;
}

Vector MlpParams::flatten() const {
    Vector flat(parameter_count());
    Eigen::Index offset = 0;
    for_each_block(*this, [&](const double* data, Eigen::Index size, bool) {
        flat.segment(offset, size) = Eigen::Map<const Vector>(data, size);
        offset += size;
    });
    return flat;
}

Vector MlpParams::decay_mask() const {
    Vector mask(parameter_count());
    Eigen::Index offset = 0;
    for_each_block(*this, [&](const double*, Eigen::Index size, bool is_weight) {
        mask.segment(offset, size).setConstant(is_weight ? 1.0 : 0.0);
        offset += size;
    });
    return mask;
}

void MlpParams::assign(const Vector& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("bnn: flat parameter size mismatch");
    Eigen::Index offset = 0;
    for_each_block(*this, [&](const double* data, Eigen::Index size, bool) {
        Eigen::Map<Vector>(const_cast<double*>(data), size) = flat.segment(offset, size);
        offset += size;
    });
}

void BnnConfig::validate() const {
    if (d_r < 0 || d_o < 0) throw std::invalid_argument("bnn: layer counts must be >= 0");
    if (hidden_rep < 1 || hidden_out < 1) throw std::invalid_argument("bnn: widths must be positive");
    if (alpha < 0.0 || weight_decay < 0.0) throw std::invalid_argument("bnn: alpha and weight_decay must be >= 0");
    if (!(lr > 0.0) || !(rmsprop_eps > 0.0)) throw std::invalid_argument("bnn: lr and rmsprop_eps must be > 0");
    if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) throw std::invalid_argument("bnn: rmsprop_decay must lie in (0,1)");
    if (epochs < 1 || batch < 0) throw std::invalid_argument("bnn: epochs >= 1 and batch >= 0 required");
}

MlpParams init_params(Eigen::Index input_width, const BnnConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, 0);
    MlpParams params;
    Eigen::Index width = input_width;
    for (int l = 0; l < cfg.d_r; ++l) {
        params.rep_layers.push_back(glorot(width, cfg.hidden_rep, rng));
        width = cfg.hidden_rep;
    }
    width += 1;
    for (int l = 0; l < cfg.d_o; ++l) {
        params.out_layers.push_back(glorot(width, cfg.hidden_out, rng));
        width = cfg.hidden_out;
    }
    params.final_weight = glorot(width, 1, rng).weight.row(0).transpose();
    params.final_bias = 0.0;
    return params;
}

ForwardResult bnn_forward(const MlpParams& params, const Matrix& X, const Vector& t) {
    params.check_shapes();
    Trace trace = run(params, X, t);
    return {std::move(trace.rep_act.back()), std::move(trace.y_hat)};
}

LossTerms bnn_loss_terms(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                         double weight_decay) {
    if (y.size() != X.rows()) throw std::invalid_argument("bnn: outcome length mismatch");
    if (alpha > 0.0 && !both_groups(t)) throw std::invalid_argument("batch must contain both groups");
    const ForwardResult fwd = bnn_forward(params, X, t);
    LossTerms terms;
    terms.mse = (fwd.y_hat - y).squaredNorm() / static_cast<double>(y.size());
    terms.disc = both_groups(t) ? linear_disc(fwd.phi, t).value : 0.0;
    terms.decay = weight_decay * squared_weights(params);
    terms.total = terms.mse + alpha * terms.disc + terms.decay;
    return terms;
}

double bnn_loss(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                double weight_decay) {
    return bnn_loss_terms(params, X, t, y, alpha, weight_decay).total;
}

MlpParams bnn_grad(const MlpParams& params, const Matrix& X, const Vector& t, const Vector& y, double alpha,
                   double weight_decay, LossTerms* terms) {
    params.check_shapes();
    if (y.size() != X.rows()) throw std::invalid_argument("bnn: outcome length mismatch");
    if (alpha > 0.0 && !both_groups(t)) throw std::invalid_argument("batch must contain both groups");
    const double n = static_cast<double>(X.rows());
    const Trace trace = run(params, X, t);
    const Matrix& phi = trace.rep_act.back();

    MlpParams grad = params;
    const Vector residual = trace.y_hat - y;
    const Vector d_yhat = 2.0 * residual / n;

    grad.final_weight = trace.out_act.back().transpose() * d_yhat + 2.0 * weight_decay * params.final_weight;
    grad.final_bias = d_yhat.sum();
    Matrix d_act = d_yhat * params.final_weight.transpose();

    for (std::size_t l = params.out_layers.size(); l-- > 0;) {
        const Matrix d_pre = d_act.cwiseProduct((trace.out_pre[l].array() > 0.0).cast<double>().matrix());
        grad.out_layers[l].weight = d_pre.transpose() * trace.out_act[l] + 2.0 * weight_decay * params.out_layers[l].weight;
        grad.out_layers[l].bias = d_pre.colwise().sum().transpose();
        d_act = d_pre * params.out_layers[l].weight;
    }
    Matrix d_phi = d_act.leftCols(phi.cols());
    if (alpha > 0.0) d_phi += alpha * linear_disc_gradient(phi, t);

    for (std::size_t l = params.rep_layers.size(); l-- > 0;) {
        const Matrix d_pre = d_phi.cwiseProduct((trace.rep_pre[l].array() > 0.0).cast<double>().matrix());
        grad.rep_layers[l].weight = d_pre.transpose() * trace.rep_act[l] + 2.0 * weight_decay * params.rep_layers[l].weight;
        grad.rep_layers[l].bias = d_pre.colwise().sum().transpose();
        if (l > 0) d_phi = d_pre * params.rep_layers[l].weight;
    }

    if (terms) {
        terms->mse = residual.squaredNorm() / n;
        terms->disc = both_groups(t) ? linear_disc(phi, t).value : 0.0;
        terms->decay = weight_decay * squared_weights(params);
        terms->total = terms->mse + alpha * terms->disc + terms->decay;
    }
    return grad;
}

void rmsprop_step(Vector& params, const Vector& grads, RmspropState& state, const BnnConfig& cfg) {
    if (grads.size() != params.size()) throw std::invalid_argument("rmsprop: gradient size mismatch");
    if (state.mean_square.size() == 0) state.mean_square = Vector::Zero(params.size());
    if (state.mean_square.size() != params.size()) throw std::invalid_argument("rmsprop: state size mismatch");
    state.mean_square = cfg.rmsprop_decay * state.mean_square + (1.0 - cfg.rmsprop_decay) * grads.cwiseAbs2();
    params.array() -= cfg.lr * grads.array() / (state.mean_square.array().sqrt() + cfg.rmsprop_eps);
}

BnnTrainResult bnn_train(const Dataset& data, const BnnConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index treated = data.n_treated();
    if (treated == 0 || treated == n) throw std::invalid_argument("bnn_train: both treatment groups must be nonempty");

    BnnTrainResult result;
    result.params = init_params(data.d(), cfg);
    Vector flat = result.params.flatten();
    RmspropState state;
    Rng shuffle_rng = make_rng(cfg.seed, 1);

    std::vector<Eigen::Index> treated_idx, control_idx;
    for (Eigen::Index i = 0; i < n; ++i) (data.treatment[i] > 0.5 ? treated_idx : control_idx).push_back(i);

    const bool full_batch = cfg.batch == 0 || cfg.batch >= n;
    Eigen::Index n_batches = full_batch ? 1 : (n + cfg.batch - 1) / cfg.batch;
    if (cfg.alpha > 0.0) {
        n_batches = std::min<Eigen::Index>(n_batches, std::min<Eigen::Index>(treated, n - treated));
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        double epoch_disc = 0.0;
        if (n_batches == 1) {
            LossTerms terms;
            const MlpParams grad = bnn_grad(result.params, data.covariates, data.treatment, data.y_factual, cfg.alpha,
                                            cfg.weight_decay, &terms);
            rmsprop_step(flat, grad.flatten(), state, cfg);
            result.params.assign(flat);
            epoch_loss = terms.total;
            epoch_disc = terms.disc;
        } else {
            shuffle(treated_idx, shuffle_rng);
            shuffle(control_idx, shuffle_rng);
            const auto nt = static_cast<Eigen::Index>(treated_idx.size());
            const auto nc = static_cast<Eigen::Index>(control_idx.size());
            for (Eigen::Index b = 0; b < n_batches; ++b) {
                std::vector<Eigen::Index> rows;
                for (Eigen::Index k = b * nt / n_batches; k < (b + 1) * nt / n_batches; ++k) rows.push_back(treated_idx[static_cast<std::size_t>(k)]);
                for (Eigen::Index k = b * nc / n_batches; k < (b + 1) * nc / n_batches; ++k) rows.push_back(control_idx[static_cast<std::size_t>(k)]);
                const Dataset batch = data.subset(rows);
                LossTerms terms;
                const MlpParams grad = bnn_grad(result.params, batch.covariates, batch.treatment, batch.y_factual,
                                                cfg.alpha, cfg.weight_decay, &terms);
                rmsprop_step(flat, grad.flatten(), state, cfg);
                result.params.assign(flat);
                epoch_loss += terms.total / static_cast<double>(n_batches);
                epoch_disc += terms.disc / static_cast<double>(n_batches);
            }
        }
        if (!std::isfinite(epoch_loss)) throw std::runtime_error("bnn: non-finite loss at epoch " + std::to_string(epoch));
        result.loss_history.push_back(epoch_loss);
        result.disc_history.push_back(epoch_disc);
    }
    return result;
}

std::pair<Vector, Vector> bnn_predict_both(const MlpParams& params, const Matrix& X) {
    const Vector zeros = Vector::Zero(X.rows());
    const Vector ones = Vector::Ones(X.rows());
    return {bnn_forward(params, X, zeros).y_hat, bnn_forward(params, X, ones).y_hat};
}

void save_mlp(const std::string& path, const MlpParams& params) {
    params.check_shapes();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "mlp " << params.input_width() << ' ' << params.rep_layers.size() << ' ' << params.out_layers.size() << '\n';
    for (const auto& layer : params.rep_layers) write_layer(out, "rep", layer);
    for (const auto& layer : params.out_layers) write_layer(out, "out", layer);
    out << "final " << params.final_weight.size() << '\n';
    for (Eigen::Index i = 0; i < params.final_weight.size(); ++i) out << (i ? " " : "") << format_double(params.final_weight[i]);
    out << '\n' << format_double(params.final_bias) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

MlpParams load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string tag;
    Eigen::Index input = 0;
    std::size_t n_rep = 0, n_out = 0;
    if (!(in >> tag >> input >> n_rep >> n_out) || tag != "mlp") throw std::runtime_error("not an mlp file: " + path);
    MlpParams params;
    for (std::size_t l = 0; l < n_rep; ++l) params.rep_layers.push_back(read_layer(in, "rep"));
    for (std::size_t l = 0; l < n_out; ++l) params.out_layers.push_back(read_layer(in, "out"));
    Eigen::Index width = 0;
    if (!(in >> tag >> width) || tag != "final") throw std::runtime_error("mlp file: expected final");
    params.final_weight.resize(width);
    for (Eigen::Index i = 0; i < width; ++i) params.final_weight[i] = read_double(in);
    params.final_bias = read_double(in);
    params.check_shapes();
    if (params.input_width() != input) throw std::runtime_error("mlp file: input width disagrees with layers");
    return params;
}

}  // namespace cfr
