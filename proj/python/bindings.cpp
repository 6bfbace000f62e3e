#include "cfr/experiment.hpp"
#include "cfr/discrepancy.hpp"
#include "cfr/random.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cfr;

namespace {

py::dict to_dict(const Dataset& d) {
    py::dict out;
    out["x"] = d.covariates;
    out["t"] = d.treatment;
    out["yf"] = d.y_factual;
    if (d.y_counterfactual) out["ycf"] = *d.y_counterfactual;
    if (d.mu0) out["mu0"] = *d.mu0;
    if (d.mu1) out["mu1"] = *d.mu1;
    return out;
}

Dataset from_dict(const py::dict& in) {
    Dataset d;
    d.covariates = in["x"].cast<Matrix>();
    d.treatment = in["t"].cast<Vector>();
    d.y_factual = in["yf"].cast<Vector>();
    if (in.contains("ycf")) d.y_counterfactual = in["ycf"].cast<Vector>();
    if (in.contains("mu0")) d.mu0 = in["mu0"].cast<Vector>();
    if (in.contains("mu1")) d.mu1 = in["mu1"].cast<Vector>();
    d.validate();
    return d;
}

py::dict metrics_dict(const Metrics& m) {
    py::dict out;
    out["eps_ite"] = m.eps_ite;
    out["eps_ate"] = m.eps_ate;
    out["pehe"] = m.pehe;
    out["rmse_cf"] = m.rmse_cf;
    out["truth_source"] = m.truth_source;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Balanced representations for counterfactual inference";

    m.def("linear_disc", [](const Matrix& phi, const Vector& t) { return linear_disc(phi, t).value; }, py::arg("phi"),
          py::arg("t"));
    m.def("disc_oracle_spectral", &disc_oracle_spectral, py::arg("phi"), py::arg("t"));
    m.def("simplex_project", [](const Vector& v) { return simplex_project(v).w; }, py::arg("v"));

    m.def("gen_news",
          [](Eigen::Index n, Eigen::Index K, Eigen::Index V, double C, double kappa, double noise_sd, std::uint64_t seed) {
              NewsConfig cfg;
              cfg.n = n;
              cfg.K = K;
              cfg.V = V;
              cfg.C = C;
              cfg.kappa = kappa;
              cfg.noise_sd = noise_sd;
              cfg.seed = seed;
              const TopicSpace space = with_centroids(make_topic_space(K, V, derive_seed(seed, 1)).topics, derive_seed(seed, 2));
              SimulatedData sim = gen_news(space, cfg);
              py::dict out = to_dict(sim.data);
              out["K0"] = sim.K0;
              out["K1"] = sim.K1;
              return out;
          },
          py::arg("n") = 500, py::arg("K") = 10, py::arg("V") = 300, py::arg("C") = 50.0, py::arg("kappa") = 10.0,
          py::arg("noise_sd") = 1.0, py::arg("seed") = 0);

    m.def("gen_surface",
          [](const Matrix& X, double noise_sd, std::uint64_t seed) {
              SurfaceConfig cfg;
              cfg.noise_sd = noise_sd;
              cfg.seed = seed;
              SimulatedData sim = gen_loglinear_surface(X, cfg);
              py::dict out = to_dict(sim.data);
              out["K0"] = sim.K0;
              out["K1"] = sim.K1;
              return out;
          },
          py::arg("x"), py::arg("noise_sd") = 1.0, py::arg("seed") = 0);

    m.def("nearest_cross_group",
          [](const py::dict& data) {
              const NearestNeighborMap nn = nearest_cross_group(from_dict(data));
              return py::make_tuple(nn.j, nn.dist);
          },
          py::arg("data"));

    m.def("eval_metrics",
          [](const Vector& y0_hat, const Vector& y1_hat, const py::dict& data) {
              return metrics_dict(eval_metrics(y0_hat, y1_hat, from_dict(data)));
          },
          py::arg("y0_hat"), py::arg("y1_hat"), py::arg("data"));

    m.def("fit_predict",
          [](const std::string& type, const std::map<std::string, std::string>& params, const py::dict& train,
             const Matrix& test_x, std::uint64_t seed) {
              ModelSpec spec;
              spec.name = type;
              spec.type = type;
              HyperParams hp(params.begin(), params.end());
              const ModelOutput out = fit_predict(spec, hp, from_dict(train).factual_view(), test_x, seed);
              return py::make_tuple(out.predictions.y0_hat, out.predictions.y1_hat);
          },
          py::arg("model"), py::arg("params"), py::arg("train"), py::arg("test_x"), py::arg("seed") = 0);

    m.def("bound_terms",
          [](const py::dict& data, const Matrix& phi, double lambda, double K0, double K1, int lad_budget) {
              const Dataset d = from_dict(data);
              BoundOptions opts;
              opts.lad_budget = lad_budget;
              const BoundReport r = bound_terms(d, phi, nearest_cross_group(d), lambda, K0, K1, opts);
              py::dict out;
              out["lhs"] = r.lhs;
              out["disc"] = r.disc;
              out["eta_hat"] = r.eta_hat;
              out["g_hat"] = r.g_hat;
              out["nn_term"] = r.nn_term;
              out["mid_hat"] = r.mid_hat;
              out["rhs_hat"] = r.rhs_hat;
              out["holds"] = r.chain_holds();
              return out;
          },
          py::arg("data"), py::arg("phi"), py::arg("lam") = 1.0, py::arg("K0") = 0.0, py::arg("K1") = 0.0,
          py::arg("lad_budget") = 2000);

    m.def("simulate", [](const std::string& config, const std::string& out) { cmd_simulate(ExperimentConfig::load(config), out); },
          py::arg("config"), py::arg("out"));
    m.def("run",
          [](const std::string& config, const std::string& out) {
              const RunResult result = cmd_run(ExperimentConfig::load(config), out);
              py::dict summary;
              for (const auto& s : result.summaries) summary[py::str(s.model)] = metrics_dict(s.mean);
              return summary;
          },
          py::arg("config"), py::arg("out"));
    m.def("bound",
          [](const std::string& config, const std::string& out) {
              const auto rows = cmd_bound(ExperimentConfig::load(config), out);
              return std::all_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.ok; });
          },
          py::arg("config"), py::arg("out"));
}
