#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

namespace cfr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 1>;

// Units with covariates, binary treatment and factual outcomes. Synthetic
// data additionally carries the counterfactual outcome and the noiseless
// potential outcomes mu0/mu1.
struct Dataset {
    Matrix covariates;  // n x d
    Vector treatment;   // entries exactly 0 or 1
    Vector y_factual;
    std::optional<Vector> y_counterfactual;
    std::optional<Vector> mu0;
    std::optional<Vector> mu1;

    Eigen::Index n() const { return covariates.rows(); }
    Eigen::Index d() const { return covariates.cols(); }
    Eigen::Index n_treated() const;

    bool has_truth() const { return y_counterfactual.has_value() || (mu0 && mu1); }

    // Throws std::invalid_argument when an invariant is broken.
    void validate() const;

    // Copy with every counterfactual / noiseless column dropped. Models are
    // only ever handed this view.
    Dataset factual_view() const;

    // Potential outcomes Y0, Y1 as realized (from yf/ycf and t).
    Vector y0() const;
    Vector y1() const;

    Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

// FNV-1a over the factual columns (covariates, t, yf).
std::uint64_t factual_checksum(const Dataset& data);

struct NearestNeighborMap {
    IndexVector j;
    Vector dist;
};

Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

// For every unit, the closest unit (Euclidean, raw covariates) in the opposite
// treatment group. Ties go to the lowest index.
NearestNeighborMap nearest_cross_group(const Dataset& data);

// Deterministic row partition into (train, test).
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace cfr
