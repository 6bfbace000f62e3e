#include "cfr/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <iostream>

namespace {

struct CommonArgs {
    std::string config;
    std::string out = ".";
    int jobs = 0;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--jobs", args.jobs, "worker threads (realization-level)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "override harness master_seed");
}

cfr::ExperimentConfig load(const CommonArgs& args) {
    cfr::ExperimentConfig config = cfr::ExperimentConfig::load(args.config);
    if (args.jobs > 0) config.harness.jobs = args.jobs;
    if (args.seed) config.harness.master_seed = *args.seed;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual representation experiments"};
    app.require_subcommand(1);
    CommonArgs args;

    auto* simulate = app.add_subcommand("simulate", "write real_{i}.csv and meta.json");
    add_common(simulate, args);
    auto* run = app.add_subcommand("run", "select on held-out realizations, evaluate on the rest");
    add_common(run, args);
    auto* sweep = app.add_subcommand("sweep-alpha", "imbalance penalty sweep");
    add_common(sweep, args);
    std::vector<double> alphas;
    sweep->add_option("--alphas", alphas, "alpha values (default: harness alphas)")->delimiter(',');
    auto* bound = app.add_subcommand("bound", "empirical bound report; exits 2 on a violation");
    add_common(bound, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const cfr::ExperimentConfig config = load(args);
        if (*simulate) {
            cfr::cmd_simulate(config, args.out);
        } else if (*run) {
            const cfr::RunResult result = cfr::cmd_run(config, args.out);
            for (const auto& s : result.summaries) {
                std::printf("%-16s eps_ite %.4f +- %.4f  pehe %.4f +- %.4f  (n=%zu)\n", s.model.c_str(), s.mean.eps_ite,
                            s.standard_error.eps_ite, s.mean.pehe, s.standard_error.pehe, s.count);
            }
        } else if (*sweep) {
            const auto rows = cfr::cmd_sweep_alpha(config, alphas.empty() ? config.harness.alphas : alphas, args.out);
            for (const auto& r : rows) std::printf("alpha %-8g %-8s %.6g +- %.3g\n", r.alpha, r.metric.c_str(), r.mean, r.standard_error);
        } else if (*bound) {
            const auto rows = cfr::cmd_bound(config, args.out);
            std::size_t bad = 0;
            for (const auto& r : rows) {
                if (r.ok) continue;
                ++bad;
                std::fprintf(stderr, "violation: realization %zu, %s: slack_left %.3g, slack_right %.3g, lemma %.3g\n",
                             r.realization, r.representation.c_str(), r.report.slack_left(), r.report.slack_right(),
                             r.lemma.worst_slack);
            }
            std::printf("%zu rows, %zu violations\n", rows.size(), bad);
            if (bad) return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
