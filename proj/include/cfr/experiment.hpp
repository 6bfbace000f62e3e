#pragma once

#include "cfr/baselines.hpp"
#include "cfr/blr.hpp"
#include "cfr/bnn.hpp"
#include "cfr/config.hpp"
#include "cfr/data.hpp"
#include "cfr/metrics.hpp"
#include "cfr/simulate.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cfr {

struct GeneratorSpec {
    std::string type = "news";  // news | surface | load
    NewsConfig news;
    TopicOptions topics;
    std::string topics_path;
    Eigen::Index surface_n = 200;
    Eigen::Index surface_d = 10;
    SurfaceConfig surface;
    std::string covariates_path;
    std::string load_path;
};

using HyperParams = std::vector<std::pair<std::string, std::string>>;

struct ModelSpec {
    std::string name;
    std::string type;  // ols | dr | lasso_ridge | blr | bnn | nn4
    std::vector<std::pair<std::string, std::vector<std::string>>> params;

    // Cartesian product of every listed value, in key order.
    std::vector<HyperParams> grid() const;
};

std::string format_hyperparams(const HyperParams& hp);

struct HarnessSpec {
    std::size_t n_realizations = 20;
    std::size_t n_heldout_realizations = 10;
    std::uint64_t master_seed = 0;
    double test_fraction = 0.0;  // 0: evaluate in-sample on every unit
    int jobs = 1;
    double bound_lambda = 1.0;
    int lad_budget = 2000;
    std::vector<std::string> bound_representations{"identity", "blr", "bnn"};
    std::string sweep_model;
    std::vector<double> alphas{0.0, 0.1, 1.0, 10.0};
};

struct ExperimentConfig {
    GeneratorSpec generator;
    std::vector<ModelSpec> models;
    HarnessSpec harness;

    static ExperimentConfig from_ini(const IniFile& ini);
    static ExperimentConfig load(const std::string& path);

    std::size_t total_realizations() const { return harness.n_heldout_realizations + harness.n_realizations; }
};

struct Realization {
    Dataset data;
    std::optional<double> K0;
    std::optional<double> K1;
    std::uint64_t seed = 0;
};

// Realization i is reproducible from (master_seed, i) alone.
class RealizationSource {
public:
    explicit RealizationSource(const ExperimentConfig& config);

    Realization get(std::size_t index) const;
    std::size_t count() const { return count_; }
    std::uint64_t data_seed(std::size_t index) const;
    std::uint64_t model_seed(std::size_t index) const;
    const Matrix& topics() const { return topics_; }

private:
    const ExperimentConfig& config_;
    std::size_t count_;
    Matrix topics_;
    std::optional<Matrix> covariates_;
    std::optional<Vector> fixed_treatment_;
    std::vector<std::optional<std::pair<double, double>>> loaded_constants_;
};

struct ModelOutput {
    PotentialOutcomePredictions predictions;
    std::optional<double> representation_disc;  // learned-representation models only
    std::string warning;
};

// Trains on a factual-only dataset (throws if counterfactual columns are
// present) and predicts both arms for test_X.
ModelOutput fit_predict(const ModelSpec& model, const HyperParams& hp, const Dataset& train, const Matrix& test_X,
                        std::uint64_t seed);

struct Evaluation {
    Metrics metrics;
    std::optional<double> representation_disc;
};

Evaluation evaluate(const ModelSpec& model, const HyperParams& hp, const Realization& realization, std::uint64_t seed,
                    double test_fraction);

struct EvalRecord {
    std::string model;
    std::size_t realization = 0;
    HyperParams hyperparams;
    bool failed = false;
    std::string error;
    Metrics metrics;
};

struct SummaryRow {
    std::string model;
    HyperParams hyperparams;
    std::size_t count = 0;
    Metrics mean;
    Metrics standard_error;
};

SummaryRow summarize(const std::string& model, const HyperParams& hp, const std::vector<EvalRecord>& records);

struct RunResult {
    std::vector<EvalRecord> records;
    std::vector<SummaryRow> summaries;
    std::vector<std::pair<std::string, HyperParams>> selected;
};

void cmd_simulate(const ExperimentConfig& config, const std::string& out_dir);
RunResult cmd_run(const ExperimentConfig& config, const std::string& out_dir);

struct SweepRow {
    double alpha = 0.0;
    std::string metric;
    double mean = 0.0;
    double standard_error = 0.0;
};
std::vector<SweepRow> cmd_sweep_alpha(const ExperimentConfig& config, const std::vector<double>& alphas,
                                      const std::string& out_dir);

struct BoundRow {
    std::size_t realization = 0;
    std::string representation;
    BoundReport report;
    Lemma1Result lemma;
    bool ok = true;
};
// Returns every row; the caller exits nonzero when any row is not ok.
std::vector<BoundRow> cmd_bound(const ExperimentConfig& config, const std::string& out_dir);

// Runs fn(i) for i in [0, count) on `jobs` worker threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cfr
