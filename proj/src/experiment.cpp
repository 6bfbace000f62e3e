#include "cfr/experiment.hpp"

#include "cfr/discrepancy.hpp"
#include "cfr/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cfr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::set<std::string> kNewsKeys{"type", "n", "K", "V", "C", "kappa", "doc_length_mean", "doc_alpha",
                                      "noise_sd", "topic_concentration", "centroid_pool", "topics_path"};
const std::set<std::string> kSurfaceKeys{"type", "n", "d", "noise_sd", "effect_target", "assignment_strength",
                                         "covariates_path", "coef_values", "coef_probs"};
const std::set<std::string> kLoadKeys{"type", "path"};
const std::set<std::string> kHarnessKeys{"n_realizations", "n_heldout_realizations", "master_seed", "test_fraction",
                                         "jobs", "bound_lambda", "lad_budget", "bound_representations",
                                         "sweep_model", "alphas"};

const std::set<std::string>& model_keys(const std::string& type) {
    static const std::set<std::string> ols{};
    static const std::set<std::string> dr{"clip", "propensity_l2", "outcome_lambda", "pca_threshold", "pca_components"};
    static const std::set<std::string> lasso{"lasso_lambda", "ridge_lambda"};
    static const std::set<std::string> blr{"alpha", "gamma", "lambda", "outer_iters", "h_iters", "w_iters", "step0_h",
                                           "step0_w"};
    static const std::set<std::string> bnn{"d_r", "d_o", "hidden_rep", "hidden_out", "alpha", "weight_decay", "lr",
                                           "rmsprop_decay", "rmsprop_eps", "epochs", "batch", "standardize_inputs"};
    if (type == "ols") return ols;
    if (type == "dr") return dr;
    if (type == "lasso_ridge") return lasso;
    if (type == "blr") return blr;
    if (type == "bnn" || type == "nn4") return bnn;
    throw std::runtime_error("unknown model type '" + type + "'");
}

void check_keys(const IniSection& section, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : section.entries) {
        if (!allowed.count(key)) throw std::runtime_error("config: unknown key '" + key + "' in [" + section.name + "]");
    }
}

const std::string* lookup(const HyperParams& hp, const std::string& key) {
    for (const auto& [k, v] : hp) {
        if (k == key) return &v;
    }
    return nullptr;
}

double hp_real(const HyperParams& hp, const std::string& key, double fallback) {
    const std::string* v = lookup(hp, key);
    return v ? parse_real(*v, key) : fallback;
}

long long hp_int(const HyperParams& hp, const std::string& key, long long fallback) {
    const std::string* v = lookup(hp, key);
    return v ? parse_integer(*v, key) : fallback;
}

BnnConfig bnn_config(const HyperParams& hp, std::uint64_t seed) {
    BnnConfig cfg;
    cfg.d_r = static_cast<int>(hp_int(hp, "d_r", cfg.d_r));
    cfg.d_o = static_cast<int>(hp_int(hp, "d_o", cfg.d_o));
    cfg.hidden_rep = static_cast<int>(hp_int(hp, "hidden_rep", cfg.hidden_rep));
    cfg.hidden_out = static_cast<int>(hp_int(hp, "hidden_out", cfg.hidden_out));
    cfg.alpha = hp_real(hp, "alpha", cfg.alpha);
    cfg.weight_decay = hp_real(hp, "weight_decay", cfg.weight_decay);
    cfg.lr = hp_real(hp, "lr", cfg.lr);
    cfg.rmsprop_decay = hp_real(hp, "rmsprop_decay", cfg.rmsprop_decay);
    cfg.rmsprop_eps = hp_real(hp, "rmsprop_eps", cfg.rmsprop_eps);
    cfg.epochs = static_cast<int>(hp_int(hp, "epochs", cfg.epochs));
    cfg.batch = static_cast<int>(hp_int(hp, "batch", cfg.batch));
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

BlrConfig blr_config(const HyperParams& hp, std::uint64_t seed) {
    BlrConfig cfg;
    cfg.alpha = hp_real(hp, "alpha", cfg.alpha);
    cfg.gamma = hp_real(hp, "gamma", cfg.gamma);
    cfg.lambda = hp_real(hp, "lambda", cfg.lambda);
    cfg.outer_iters = static_cast<int>(hp_int(hp, "outer_iters", cfg.outer_iters));
    cfg.h_iters = static_cast<int>(hp_int(hp, "h_iters", cfg.h_iters));
    cfg.w_iters = static_cast<int>(hp_int(hp, "w_iters", cfg.w_iters));
    cfg.step0_h = hp_real(hp, "step0_h", cfg.step0_h);
    cfg.step0_w = hp_real(hp, "step0_w", cfg.step0_w);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

DoublyRobustOptions dr_options(const HyperParams& hp) {
    DoublyRobustOptions opts;
    opts.clip = hp_real(hp, "clip", opts.clip);
    opts.propensity_l2 = hp_real(hp, "propensity_l2", opts.propensity_l2);
    opts.outcome_lambda = hp_real(hp, "outcome_lambda", opts.outcome_lambda);
    opts.pca_threshold = hp_int(hp, "pca_threshold", opts.pca_threshold);
    opts.pca_components = hp_int(hp, "pca_components", opts.pca_components);
    return opts;
}

// Parses every value of a grid cell so bad numbers surface at load time.
void check_cell(const std::string& type, const HyperParams& hp) {
    if (type == "bnn" || type == "nn4") {
        bnn_config(hp, 0);
        hp_int(hp, "standardize_inputs", 0);
    } else if (type == "blr") {
        blr_config(hp, 0);
    } else if (type == "dr") {
        dr_options(hp);
    } else if (type == "lasso_ridge") {
        hp_real(hp, "lasso_lambda", 0.0);
        hp_real(hp, "ridge_lambda", 0.0);
    }
}

// Column centering and scaling fitted on training covariates; constant
// columns are only centered.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& X) {
        Standardizer s;
        const double n = static_cast<double>(X.rows());
        s.mean = X.colwise().mean().transpose();
        s.scale.resize(X.cols());
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            const double var = (X.col(c).array() - s.mean[c]).square().sum() / n;
            s.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    Matrix apply(const Matrix& X) const {
        return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

struct TrainedBnn {
    MlpParams params;
    std::optional<Standardizer> standardizer;

    Matrix inputs(const Matrix& X) const { return standardizer ? standardizer->apply(X) : X; }
};

TrainedBnn train_bnn(const Dataset& train, const HyperParams& hp, const BnnConfig& cfg) {
    TrainedBnn out;
    Dataset fit_data = train;
    if (hp_int(hp, "standardize_inputs", 0) != 0) {
        out.standardizer = Standardizer::fit(train.covariates);
        fit_data.covariates = out.standardizer->apply(train.covariates);
    }
    out.params = bnn_train(fit_data, cfg).params;
    return out;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

void ensure_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw std::runtime_error("cannot create output directory " + out_dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

// Minimal covariate table: header of x0..x{d-1} and optionally t.
std::pair<Matrix, std::optional<Vector>> load_covariates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open covariates " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty covariates file " + path);
    std::vector<std::string> header = split_list(line);
    std::vector<int> x_col;
    int t_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "t") {
            t_col = static_cast<int>(c);
        } else if (header[c].size() > 1 && header[c][0] == 'x') {
            x_col.push_back(static_cast<int>(c));
        } else {
            throw std::runtime_error("covariates: unexpected column '" + header[c] + "'");
        }
    }
    if (x_col.empty()) throw std::runtime_error("covariates: no x columns");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<std::string> cells = split_list(line);
        if (cells.size() != header.size()) throw std::runtime_error("covariates: ragged row " + std::to_string(rows.size() + 2));
        std::vector<double> row;
        for (const auto& cell : cells) row.push_back(parse_real(cell, "covariate cell"));
        rows.push_back(std::move(row));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix X(n, static_cast<Eigen::Index>(x_col.size()));
    std::optional<Vector> t;
    if (t_col >= 0) t = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < x_col.size(); ++c) X(i, static_cast<Eigen::Index>(c)) = rows[i][x_col[c]];
        if (t) {
            const double v = rows[i][t_col];
            if (v != 0.0 && v != 1.0) throw std::runtime_error("covariates: non-binary treatment");
            (*t)[i] = v;
        }
    }
    return {X, t};
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double standard_error(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const ModelSpec* find_model(const ExperimentConfig& config, const std::string& name, const std::string& type) {
    for (const auto& m : config.models) {
        if (!name.empty() ? m.name == name : m.type == type) return &m;
    }
    return nullptr;
}

}  // namespace

std::vector<HyperParams> ModelSpec::grid() const {
    std::vector<HyperParams> cells{{}};
    for (const auto& [key, values] : params) {
        std::vector<HyperParams> next;
        for (const auto& cell : cells) {
            for (const auto& v : values) {
                HyperParams extended = cell;
                extended.emplace_back(key, v);
                next.push_back(std::move(extended));
            }
        }
        cells = std::move(next);
    }
    return cells;
}

std::string format_hyperparams(const HyperParams& hp) {
    std::string out;
    for (const auto& [k, v] : hp) {
        if (!out.empty()) out += ';';
        out += k + '=' + v;
    }
    return out;
}

ExperimentConfig ExperimentConfig::from_ini(const IniFile& ini) {
    ExperimentConfig config;
    for (const auto& section : ini.sections) {
        if (section.name != "generator" && section.name != "harness" && section.name.rfind("models.", 0) != 0) {
            throw std::runtime_error("config: unknown section [" + section.name + "]");
        }
    }

    if (const IniSection* g = ini.find("generator")) {
        GeneratorSpec& gen = config.generator;
        if (g->has("type")) gen.type = g->get("type");
        auto real = [&](const char* key, double& dst) {
            if (g->has(key)) dst = parse_real(g->get(key), key);
        };
        auto index = [&](const char* key, Eigen::Index& dst) {
            if (g->has(key)) dst = parse_integer(g->get(key), key);
        };
        if (gen.type == "news") {
            check_keys(*g, kNewsKeys);
            index("n", gen.news.n);
            index("K", gen.news.K);
            index("V", gen.news.V);
            real("C", gen.news.C);
            real("kappa", gen.news.kappa);
            real("doc_length_mean", gen.news.doc_length_mean);
            real("doc_alpha", gen.news.doc_alpha);
            real("noise_sd", gen.news.noise_sd);
            real("topic_concentration", gen.topics.topic_concentration);
            gen.topics.doc_alpha = gen.news.doc_alpha;
            if (g->has("centroid_pool")) gen.topics.centroid_pool = static_cast<int>(parse_integer(g->get("centroid_pool"), "centroid_pool"));
            if (g->has("topics_path")) gen.topics_path = g->get("topics_path");
            gen.news.validate();
        } else if (gen.type == "surface") {
            check_keys(*g, kSurfaceKeys);
            index("n", gen.surface_n);
            index("d", gen.surface_d);
            real("noise_sd", gen.surface.noise_sd);
            real("effect_target", gen.surface.effect_target);
            real("assignment_strength", gen.surface.assignment_strength);
            if (g->has("covariates_path")) gen.covariates_path = g->get("covariates_path");
            auto list = [&](const char* key, std::vector<double>& dst) {
                if (!g->has(key)) return;
                dst.clear();
                for (const auto& v : split_list(g->get(key))) dst.push_back(parse_real(v, key));
            };
            list("coef_values", gen.surface.coef_values);
            list("coef_probs", gen.surface.coef_probs);
            gen.surface.validate();
            if (gen.covariates_path.empty() && (gen.surface_n < 2 || gen.surface_d < 1)) {
                throw std::runtime_error("config: surface needs n >= 2 and d >= 1");
            }
        } else if (gen.type == "load") {
            check_keys(*g, kLoadKeys);
            gen.load_path = g->get("path");
        } else {
            throw std::runtime_error("config: unknown generator type '" + gen.type + "'");
        }
    }

    if (const IniSection* h = ini.find("harness")) {
        check_keys(*h, kHarnessKeys);
        HarnessSpec& hs = config.harness;
        auto count = [&](const char* key, std::size_t& dst) {
            if (!h->has(key)) return;
            const long long v = parse_integer(h->get(key), key);
            if (v < 0) throw std::runtime_error(std::string("config: ") + key + " must be >= 0");
            dst = static_cast<std::size_t>(v);
        };
        count("n_realizations", hs.n_realizations);
        count("n_heldout_realizations", hs.n_heldout_realizations);
        if (h->has("master_seed")) hs.master_seed = static_cast<std::uint64_t>(parse_integer(h->get("master_seed"), "master_seed"));
        if (h->has("test_fraction")) hs.test_fraction = parse_real(h->get("test_fraction"), "test_fraction");
        if (h->has("jobs")) hs.jobs = static_cast<int>(parse_integer(h->get("jobs"), "jobs"));
        if (h->has("bound_lambda")) hs.bound_lambda = parse_real(h->get("bound_lambda"), "bound_lambda");
        if (h->has("lad_budget")) hs.lad_budget = static_cast<int>(parse_integer(h->get("lad_budget"), "lad_budget"));
        if (h->has("bound_representations")) hs.bound_representations = split_list(h->get("bound_representations"));
        if (h->has("sweep_model")) hs.sweep_model = h->get("sweep_model");
        if (h->has("alphas")) {
            hs.alphas.clear();
            for (const auto& v : split_list(h->get("alphas"))) hs.alphas.push_back(parse_real(v, "alphas"));
        }
    }
    const HarnessSpec& hs = config.harness;
    if (hs.n_realizations < 1) throw std::runtime_error("config: n_realizations must be >= 1");
    if (hs.test_fraction < 0.0 || hs.test_fraction >= 1.0) throw std::runtime_error("config: test_fraction must lie in [0, 1)");
    if (!(hs.bound_lambda > 0.0)) throw std::runtime_error("config: bound_lambda must be > 0");
    if (hs.lad_budget < 1) throw std::runtime_error("config: lad_budget must be >= 1");
    for (const auto& rep : hs.bound_representations) {
        if (rep != "identity" && rep != "blr" && rep != "bnn") throw std::runtime_error("config: unknown representation '" + rep + "'");
    }

    for (const auto& section : ini.sections) {
        if (section.name.rfind("models.", 0) != 0) continue;
        ModelSpec model;
        model.name = section.name.substr(7);
        if (model.name.empty()) throw std::runtime_error("config: empty model name");
        model.type = section.get("type");
        const auto& allowed = model_keys(model.type);
        for (const auto& [key, value] : section.entries) {
            if (key == "type") continue;
            if (!allowed.count(key)) throw std::runtime_error("config: unknown key '" + key + "' in [" + section.name + "]");
            std::vector<std::string> values = split_list(value);
            if (values.empty()) throw std::runtime_error("config: empty grid for '" + key + "' in [" + section.name + "]");
            model.params.emplace_back(key, std::move(values));
        }
        for (const auto& cell : model.grid()) check_cell(model.type, cell);
        config.models.push_back(std::move(model));
    }
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    ExperimentConfig config = from_ini(read_ini(path));
    // Relative paths inside the config resolve against its directory.
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
    };
    resolve(config.generator.topics_path);
    resolve(config.generator.covariates_path);
    resolve(config.generator.load_path);
    return config;
}

RealizationSource::RealizationSource(const ExperimentConfig& config)
    : config_(config), count_(config.total_realizations()) {
    const GeneratorSpec& gen = config.generator;
    if (gen.type == "news") {
        topics_ = gen.topics_path.empty()
                      ? make_topic_space(gen.news.K, gen.news.V, derive_seed(config.harness.master_seed, ~std::uint64_t{0}), gen.topics).topics
                      : load_topic_matrix(gen.topics_path);
        if (topics_.cols() != gen.news.K || topics_.rows() != gen.news.V) {
            throw std::runtime_error("topic matrix shape does not match K and V");
        }
    } else if (gen.type == "surface") {
        if (!gen.covariates_path.empty()) {
            auto [X, t] = load_covariates(gen.covariates_path);
            covariates_ = std::move(X);
            fixed_treatment_ = std::move(t);
        }
    } else if (gen.type == "load") {
        const fs::path meta_path = fs::path(gen.load_path) / "meta.json";
        std::ifstream in(meta_path);
        if (!in) throw std::runtime_error("cannot open " + meta_path.string());
        const json meta = json::parse(in);
        const auto& reals = meta.at("realizations");
        count_ = reals.size();
        for (const auto& r : reals) {
            if (r.contains("K0") && r.contains("K1") && r["K0"].is_number() && r["K1"].is_number()) {
                loaded_constants_.emplace_back(std::make_pair(r["K0"].get<double>(), r["K1"].get<double>()));
            } else {
                loaded_constants_.emplace_back(std::nullopt);
            }
        }
    }
}

std::uint64_t RealizationSource::data_seed(std::size_t index) const {
    return derive_seed(config_.harness.master_seed, 2 * static_cast<std::uint64_t>(index));
}

std::uint64_t RealizationSource::model_seed(std::size_t index) const {
    return derive_seed(config_.harness.master_seed, 2 * static_cast<std::uint64_t>(index) + 1);
}

Realization RealizationSource::get(std::size_t index) const {
    if (index >= count_) throw std::runtime_error("missing realization " + std::to_string(index));
    const GeneratorSpec& gen = config_.generator;
    Realization out;
    out.seed = data_seed(index);
    if (gen.type == "news") {
        const TopicSpace space = with_centroids(topics_, derive_seed(out.seed, 1), gen.topics);
        NewsConfig cfg = gen.news;
        cfg.seed = out.seed;
        SimulatedData sim = gen_news(space, cfg);
        out.data = std::move(sim.data);
        out.K0 = sim.K0;
        out.K1 = sim.K1;
    } else if (gen.type == "surface") {
        const Matrix X = covariates_ ? *covariates_ : synthetic_covariates(gen.surface_n, gen.surface_d, derive_seed(out.seed, 1));
        SurfaceConfig cfg = gen.surface;
        cfg.seed = out.seed;
        SimulatedData sim = gen_loglinear_surface(X, cfg, fixed_treatment_);
        out.data = std::move(sim.data);
        out.K0 = sim.K0;
        out.K1 = sim.K1;
    } else {
        const fs::path file = fs::path(gen.load_path) / ("real_" + std::to_string(index) + ".csv");
        if (!fs::exists(file)) throw std::runtime_error("missing realization file " + file.string());
        out.data = load_dataset(file.string());
        if (loaded_constants_[index]) std::tie(out.K0, out.K1) = *loaded_constants_[index];
    }
    if (out.K0 && !std::isfinite(*out.K0)) out.K0.reset();
    if (out.K1 && !std::isfinite(*out.K1)) out.K1.reset();
    return out;
}

ModelOutput fit_predict(const ModelSpec& model, const HyperParams& hp, const Dataset& train, const Matrix& test_X,
                        std::uint64_t seed) {
    if (train.has_truth()) throw std::invalid_argument("fit_predict: training data must be factual only");
    ModelOutput out;
    if (model.type == "ols") {
        out.predictions = ols_baseline(train, test_X);
    } else if (model.type == "dr") {
        out.predictions = doubly_robust(train, test_X, dr_options(hp));
    } else if (model.type == "lasso_ridge") {
        out.predictions = lasso_ridge(train, test_X, hp_real(hp, "lasso_lambda", 0.01), hp_real(hp, "ridge_lambda", 1e-3));
    } else if (model.type == "blr") {
        const BlrConfig cfg = blr_config(hp, seed);
        const NearestNeighborMap nn = nearest_cross_group(train);
        const BlrTrainResult trained = blr_train(train, nn, cfg);
        const LinearModel fitted = blr_finalize(train, trained.w, cfg.lambda);
        std::tie(out.predictions.y0_hat, out.predictions.y1_hat) = blr_predict_both(fitted, trained.w, test_X);
        out.predictions.ate_hat = (out.predictions.y1_hat - out.predictions.y0_hat).mean();
        out.representation_disc = weighted_linear_disc(train.covariates, train.treatment, trained.w.w);
    } else if (model.type == "bnn") {
        const BnnConfig cfg = bnn_config(hp, seed);
        const TrainedBnn trained = train_bnn(train, hp, cfg);
        std::tie(out.predictions.y0_hat, out.predictions.y1_hat) = bnn_predict_both(trained.params, trained.inputs(test_X));
        out.predictions.ate_hat = (out.predictions.y1_hat - out.predictions.y0_hat).mean();
        const Matrix phi = bnn_forward(trained.params, trained.inputs(train.covariates), train.treatment).phi;
        out.representation_disc = linear_disc(phi, train.treatment).value;
    } else if (model.type == "nn4") {
        const BnnConfig cfg = bnn_config(hp, seed);
        if (hp_int(hp, "standardize_inputs", 0) != 0) {
            const Standardizer s = Standardizer::fit(train.covariates);
            Dataset scaled = train;
            scaled.covariates = s.apply(train.covariates);
            out.predictions = nn4_baseline(scaled, cfg, s.apply(test_X), &out.warning);
        } else {
            out.predictions = nn4_baseline(train, cfg, test_X, &out.warning);
        }
    } else {
        throw std::invalid_argument("unknown model type '" + model.type + "'");
    }
    return out;
}

Evaluation evaluate(const ModelSpec& model, const HyperParams& hp, const Realization& realization, std::uint64_t seed,
                    double test_fraction) {
    const Dataset& data = realization.data;
    if (!data.has_truth()) throw std::invalid_argument("metrics require synthetic truth");
    Dataset train;
    Dataset test;
    if (test_fraction > 0.0) {
        std::tie(train, test) = split(data, test_fraction, derive_seed(seed, 7));
    } else {
        train = data;
        test = data;
    }
    const ModelOutput out = fit_predict(model, hp, train.factual_view(), test.covariates, seed);
    Evaluation ev;
    std::optional<double> ate;
    if (model.type == "dr") ate = out.predictions.ate_hat;
    ev.metrics = eval_metrics(out.predictions.y0_hat, out.predictions.y1_hat, test, ate);
    ev.representation_disc = out.representation_disc;
    return ev;
}

SummaryRow summarize(const std::string& model, const HyperParams& hp, const std::vector<EvalRecord>& records) {
    SummaryRow row;
    row.model = model;
    row.hyperparams = hp;
    std::vector<double> ite, ate, pehe, cf;
    for (const auto& r : records) {
        if (r.model != model || r.failed) continue;
        ite.push_back(r.metrics.eps_ite);
        ate.push_back(r.metrics.eps_ate);
        pehe.push_back(r.metrics.pehe);
        cf.push_back(r.metrics.rmse_cf);
    }
    row.count = ite.size();
    if (row.count == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.mean = {nan, nan, nan, nan, ""};
        row.standard_error = row.mean;
        return row;
    }
    row.mean = {mean_of(ite), mean_of(ate), mean_of(pehe), mean_of(cf), ""};
    row.standard_error = {standard_error(ite), standard_error(ate), standard_error(pehe), standard_error(cf), ""};
    return row;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

void cmd_simulate(const ExperimentConfig& config, const std::string& out_dir) {
    if (config.generator.type == "load") throw std::runtime_error("simulate needs a news or surface generator");
    ensure_dir(out_dir);
    const RealizationSource source(config);
    const std::size_t total = source.count();
    std::vector<Realization> reals(total);
    parallel_for(total, config.harness.jobs, [&](std::size_t i) {
        reals[i] = source.get(i);
        save_dataset(reals[i].data, (fs::path(out_dir) / ("real_" + std::to_string(i) + ".csv")).string());
    });

    const GeneratorSpec& gen = config.generator;
    json meta;
    meta["generator"] = gen.type;
    meta["master_seed"] = config.harness.master_seed;
    meta["n_heldout_realizations"] = config.harness.n_heldout_realizations;
    meta["n_realizations"] = config.harness.n_realizations;
    if (gen.type == "news") {
        meta["constants"] = {{"n", gen.news.n},
                             {"K", gen.news.K},
                             {"V", gen.news.V},
                             {"C", gen.news.C},
                             {"kappa", gen.news.kappa},
                             {"doc_length_mean", gen.news.doc_length_mean},
                             {"doc_alpha", gen.news.doc_alpha},
                             {"noise_sd", gen.news.noise_sd},
                             {"topic_concentration", gen.topics.topic_concentration},
                             {"centroid_pool", gen.topics.centroid_pool}};
        save_topic_matrix((fs::path(out_dir) / "topics.txt").string(), source.topics());
    } else {
        meta["constants"] = {{"n", reals.empty() ? 0 : reals[0].data.n()},
                             {"d", reals.empty() ? 0 : reals[0].data.d()},
                             {"noise_sd", gen.surface.noise_sd},
                             {"effect_target", gen.surface.effect_target},
                             {"assignment_strength", gen.surface.assignment_strength},
                             {"coef_values", gen.surface.coef_values},
                             {"coef_probs", gen.surface.coef_probs},
                             {"covariates", gen.covariates_path.empty() ? "synthetic N(0, 1)" : gen.covariates_path}};
        meta["note"] = "log-linear surface with the usual coefficient grid and offset calibration; the internals of the "
                       "reference simulation package are not claimed to be reproduced";
    }
    meta["lipschitz"] = "sample constants of the realized Y0 and Y1 over the emitted covariates (Euclidean)";
    json list = json::array();
    for (std::size_t i = 0; i < total; ++i) {
        const Dataset& d = reals[i].data;
        list.push_back({{"index", i},
                        {"file", "real_" + std::to_string(i) + ".csv"},
                        {"role", i < config.harness.n_heldout_realizations ? "heldout" : "eval"},
                        {"seed", reals[i].seed},
                        {"K0", reals[i].K0 ? finite_or_null(*reals[i].K0) : json(nullptr)},
                        {"K1", reals[i].K1 ? finite_or_null(*reals[i].K1) : json(nullptr)},
                        {"treated_fraction", static_cast<double>(d.n_treated()) / static_cast<double>(d.n())}});
    }
    meta["realizations"] = std::move(list);
    open_out(fs::path(out_dir) / "meta.json") << meta.dump(2) << '\n';
}

namespace {

void write_metric_cells(std::ostream& out, const Metrics& m) {
    out << format_double(m.eps_ite) << ',' << format_double(m.eps_ate) << ',' << format_double(m.pehe) << ','
        << format_double(m.rmse_cf);
}

}  // namespace

RunResult cmd_run(const ExperimentConfig& config, const std::string& out_dir) {
    if (config.models.empty()) throw std::runtime_error("run: config lists no models");
    ensure_dir(out_dir);
    const RealizationSource source(config);
    const std::size_t H = config.harness.n_heldout_realizations;
    const std::size_t R = config.harness.n_realizations;
    if (source.count() < H + R) throw std::runtime_error("missing realizations: need " + std::to_string(H + R));
    const std::size_t n_models = config.models.size();
    std::vector<std::vector<HyperParams>> grids;
    for (const auto& m : config.models) grids.push_back(m.grid());

    // Phase 1: mean held-out eps_ite per grid cell; any failure voids the cell.
    std::vector<std::vector<std::vector<double>>> scores(n_models);
    bool any_grid = false;
    for (std::size_t m = 0; m < n_models; ++m) {
        if (grids[m].size() > 1) {
            any_grid = true;
            scores[m].assign(grids[m].size(), std::vector<double>(H, std::numeric_limits<double>::quiet_NaN()));
        }
    }
    if (any_grid && H == 0) throw std::runtime_error("run: hyperparameter grids need held-out realizations");
    if (any_grid) {
        parallel_for(H, config.harness.jobs, [&](std::size_t r) {
            const Realization real = source.get(r);
            for (std::size_t m = 0; m < n_models; ++m) {
                for (std::size_t c = 0; c < scores[m].size(); ++c) {
                    try {
                        scores[m][c][r] = evaluate(config.models[m], grids[m][c], real, source.model_seed(r),
                                                   config.harness.test_fraction).metrics.eps_ite;
                    } catch (const std::exception&) {
                    }
                }
            }
        });
    }

    RunResult result;
    std::vector<std::optional<HyperParams>> chosen(n_models);
    std::ostringstream selection;
    selection << "model,hyperparameters,mean_eps_ite,status\n";
    for (std::size_t m = 0; m < n_models; ++m) {
        const std::string& name = config.models[m].name;
        if (grids[m].size() == 1) {
            chosen[m] = grids[m][0];
            selection << name << ',' << format_hyperparams(grids[m][0]) << ",,fixed\n";
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < grids[m].size(); ++c) {
            const auto& s = scores[m][c];
            const bool failed = std::any_of(s.begin(), s.end(), [](double v) { return !std::isfinite(v); });
            const double mean = failed ? std::numeric_limits<double>::quiet_NaN() : mean_of(s);
            selection << name << ',' << format_hyperparams(grids[m][c]) << ',' << (failed ? "" : format_double(mean)) << ','
                      << (failed ? "failed" : "ok") << '\n';
            if (!failed && mean < best) {
                best = mean;
                chosen[m] = grids[m][c];
            }
        }
    }
    open_out(fs::path(out_dir) / "selection.csv") << selection.str();
    for (std::size_t m = 0; m < n_models; ++m) {
        result.selected.emplace_back(config.models[m].name, chosen[m].value_or(HyperParams{}));
    }

    // Phase 2: evaluation realizations H .. H+R-1.
    std::vector<std::vector<EvalRecord>> per_real(R);
    parallel_for(R, config.harness.jobs, [&](std::size_t k) {
        const std::size_t index = H + k;
        const Realization real = source.get(index);
        for (std::size_t m = 0; m < n_models; ++m) {
            EvalRecord rec;
            rec.model = config.models[m].name;
            rec.realization = index;
            if (!chosen[m]) {
                rec.failed = true;
                rec.error = "every grid cell failed";
            } else {
                rec.hyperparams = *chosen[m];
                try {
                    rec.metrics = evaluate(config.models[m], rec.hyperparams, real, source.model_seed(index),
                                           config.harness.test_fraction).metrics;
                } catch (const std::exception& e) {
                    rec.failed = true;
                    rec.error = e.what();
                }
            }
            per_real[k].push_back(std::move(rec));
        }
    });
    for (std::size_t m = 0; m < n_models; ++m) {
        for (std::size_t k = 0; k < R; ++k) result.records.push_back(per_real[k][m]);
    }

    std::ostringstream csv;
    csv << "model,realization,eps_ite,eps_ate,pehe,rmse_cf,eps_ite_se,eps_ate_se,pehe_se,rmse_cf_se,hyperparameters,status\n";
    for (std::size_t m = 0; m < n_models; ++m) {
        const std::string& name = config.models[m].name;
        const HyperParams hp = chosen[m].value_or(HyperParams{});
        for (const auto& rec : result.records) {
            if (rec.model != name) continue;
            csv << name << ',' << rec.realization << ',';
            if (rec.failed) {
                csv << ",,,";
            } else {
                write_metric_cells(csv, rec.metrics);
            }
            csv << ",,,,," << format_hyperparams(hp) << ',' << (rec.failed ? "failed: " + csv_safe(rec.error) : "ok") << '\n';
        }
        const SummaryRow summary = summarize(name, hp, result.records);
        csv << name << ",summary,";
        write_metric_cells(csv, summary.mean);
        csv << ',';
        write_metric_cells(csv, summary.standard_error);
        csv << ',' << format_hyperparams(hp) << ",n=" << summary.count << '\n';
        result.summaries.push_back(summary);
    }
    open_out(fs::path(out_dir) / "results.csv") << csv.str();

    json meta;
    meta["selection_metric"] = "mean eps_ite over held-out realizations";
    meta["heldout_realizations"] = H;
    meta["eval_realizations"] = R;
    meta["master_seed"] = config.harness.master_seed;
    meta["test_fraction"] = config.harness.test_fraction;
    std::string truth;
    for (const auto& rec : result.records) {
        if (!rec.failed) {
            truth = rec.metrics.truth_source;
            break;
        }
    }
    meta["truth_source"] = truth;
    json notes = json::array();
    for (const auto& m : config.models) {
        if (m.type == "dr") notes.push_back(m.name + ": ITE and PEHE use the per-arm regressions; eps_ate uses the AIPW average");
        if (m.type == "nn4") notes.push_back(m.name + ": alpha fixed to 0");
    }
    meta["notes"] = notes;
    open_out(fs::path(out_dir) / "results_meta.json") << meta.dump(2) << '\n';
    return result;
}

std::vector<SweepRow> cmd_sweep_alpha(const ExperimentConfig& config, const std::vector<double>& alphas,
                                      const std::string& out_dir) {
    if (alphas.empty()) throw std::runtime_error("sweep-alpha: no alphas");
    const ModelSpec* model = find_model(config, config.harness.sweep_model, "bnn");
    if (!model) throw std::runtime_error("sweep-alpha: no model to sweep");
    if (model->type != "bnn" && model->type != "blr") throw std::runtime_error("sweep-alpha: model must be bnn or blr");
    ensure_dir(out_dir);
    const RealizationSource source(config);
    const std::size_t H = config.harness.n_heldout_realizations;
    const std::size_t R = config.harness.n_realizations;
    if (source.count() < H + R) throw std::runtime_error("missing realizations: need " + std::to_string(H + R));

    HyperParams base;
    for (const auto& [key, values] : model->params) {
        if (key != "alpha") base.emplace_back(key, values.front());
    }
    const std::size_t A = alphas.size();
    // [alpha][realization] -> {eps_ite, pehe, rmse_cf, disc}
    std::vector<std::vector<std::optional<std::array<double, 4>>>> cells(A, std::vector<std::optional<std::array<double, 4>>>(R));
    parallel_for(R, config.harness.jobs, [&](std::size_t k) {
        const std::size_t index = H + k;
        const Realization real = source.get(index);
        for (std::size_t a = 0; a < A; ++a) {
            HyperParams hp = base;
            hp.emplace_back("alpha", format_double(alphas[a]));
            try {
                const Evaluation ev = evaluate(*model, hp, real, source.model_seed(index), config.harness.test_fraction);
                cells[a][k] = std::array<double, 4>{ev.metrics.eps_ite, ev.metrics.pehe, ev.metrics.rmse_cf,
                                                    ev.representation_disc.value_or(std::numeric_limits<double>::quiet_NaN())};
            } catch (const std::exception&) {
            }
        }
    });

    static const char* names[] = {"eps_ite", "pehe", "rmse_cf", "disc"};
    std::vector<SweepRow> rows;
    std::ostringstream csv;
    csv << "alpha,metric,mean,se,count\n";
    for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t q = 0; q < 4; ++q) {
            std::vector<double> xs;
            for (const auto& c : cells[a]) {
                if (c && std::isfinite((*c)[q])) xs.push_back((*c)[q]);
            }
            SweepRow row;
            row.alpha = alphas[a];
            row.metric = names[q];
            row.mean = xs.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(xs);
            row.standard_error = standard_error(xs);
            csv << format_double(row.alpha) << ',' << row.metric << ',' << format_double(row.mean) << ','
                << format_double(row.standard_error) << ',' << xs.size() << '\n';
            rows.push_back(row);
        }
    }
    open_out(fs::path(out_dir) / "sweep.csv") << csv.str();
    return rows;
}

std::vector<BoundRow> cmd_bound(const ExperimentConfig& config, const std::string& out_dir) {
    ensure_dir(out_dir);
    const RealizationSource source(config);
    const std::size_t H = config.harness.n_heldout_realizations;
    const std::size_t R = config.harness.n_realizations;
    if (source.count() < H + R) throw std::runtime_error("missing realizations: need " + std::to_string(H + R));
    const auto& reps = config.harness.bound_representations;
    const ModelSpec* blr_model = find_model(config, "", "blr");
    const ModelSpec* bnn_model = find_model(config, "", "bnn");
    const HyperParams blr_hp = blr_model ? blr_model->grid().front() : HyperParams{};
    const HyperParams bnn_hp = bnn_model ? bnn_model->grid().front() : HyperParams{};

    std::vector<std::vector<BoundRow>> per_real(R);
    parallel_for(R, config.harness.jobs, [&](std::size_t k) {
        const std::size_t index = H + k;
        const Realization real = source.get(index);
        if (!real.K0 || !real.K1) throw std::runtime_error("bound: missing K constants for realization " + std::to_string(index));
        const Dataset& data = real.data;
        const Dataset factual = data.factual_view();
        const NearestNeighborMap nn = nearest_cross_group(data);
        for (const auto& rep : reps) {
            Matrix phi;
            if (rep == "identity") {
                phi = data.covariates;
            } else if (rep == "blr") {
                const BlrTrainResult trained = blr_train(factual, nn, blr_config(blr_hp, source.model_seed(index)));
                phi = trained.w.apply(data.covariates);
            } else {
                const TrainedBnn trained = train_bnn(factual, bnn_hp, bnn_config(bnn_hp, source.model_seed(index)));
                phi = bnn_forward(trained.params, trained.inputs(data.covariates), data.treatment).phi;
            }
            BoundRow row;
            row.realization = index;
            row.representation = rep;
            BoundOptions opts;
            opts.lad_budget = config.harness.lad_budget;
            row.report = bound_terms(data, phi, nn, config.harness.bound_lambda, *real.K0, *real.K1, opts);
            row.lemma = lemma1_check(data, nn, row.report.g_hypothesis, phi, *real.K0, *real.K1);
            row.ok = row.report.chain_holds() && row.lemma.holds;
            per_real[k].push_back(std::move(row));
        }
    });

    std::vector<BoundRow> rows;
    std::ostringstream csv;
    csv << "realization,representation," << BoundReport::csv_header() << ",lemma1_worst_slack,ok\n";
    for (auto& block : per_real) {
        for (auto& row : block) {
            csv << row.realization << ',' << row.representation << ',' << row.report.csv_row() << ','
                << format_double(row.lemma.worst_slack) << ',' << (row.ok ? 1 : 0) << '\n';
            rows.push_back(std::move(row));
        }
    }
    open_out(fs::path(out_dir) / "bound.csv") << csv.str();
    return rows;
}

}  // namespace cfr
