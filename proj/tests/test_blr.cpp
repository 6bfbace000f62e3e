#include "doctest.h"
#include "helpers.hpp"

#include "cfr/blr.hpp"
#include "cfr/discrepancy.hpp"

using namespace cfr;

namespace {

Dataset random_dataset(Eigen::Index n, Eigen::Index d, Rng& rng) {
    Dataset data;
    data.covariates = testing::normal_matrix(n, d, rng);
    data.treatment = testing::two_group_treatment(n, rng);
    data.y_factual = testing::normal_matrix(n, 1, rng).col(0);
    return data;
}

// Feature 0 tracks t and nothing else; y depends on features 1.. only.
Dataset nuisance_instance(std::uint64_t seed, Eigen::Index n = 200, Eigen::Index d = 5) {
    Rng rng(seed);
    Dataset data;
    data.treatment = testing::two_group_treatment(n, rng);
    data.covariates = testing::normal_matrix(n, d, rng);
    data.covariates.col(0) += 3.0 * data.treatment;
    Vector beta = Vector::Ones(d);
    beta[0] = 0.0;
    data.y_factual = data.covariates * beta + 0.1 * testing::normal_matrix(n, 1, rng).col(0);
    return data;
}

}  // namespace

TEST_SUITE("blr") {

TEST_CASE("simplex projection") {
    Vector on(3);
    on << 0.2, 0.3, 0.5;
    CHECK((simplex_project(on).w - on).norm() < 1e-15);
    Vector v(2);
    v << 0.8, 0.8;
    CHECK(simplex_project(v).w[0] == doctest::Approx(0.5));
    CHECK(simplex_project(v).w[1] == doctest::Approx(0.5));
    v << 1.2, 0.2;
    CHECK(simplex_project(v).w[0] == doctest::Approx(1.0));
    CHECK(simplex_project(v).w[1] == doctest::Approx(0.0));
}

TEST_CASE("simplex projection satisfies KKT against every active set") {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const Vector v = 2.0 * testing::normal_matrix(4, 1, rng).col(0);
        const Vector w = simplex_project(v).w;
        CHECK(ReweightingRepresentation{w}.on_simplex());
        // Brute force: over every support set S, the candidate w_S = v_S - theta.
        double best = std::numeric_limits<double>::infinity();
        for (int mask = 1; mask < 16; ++mask) {
            double sum = 0.0;
            int k = 0;
            for (int j = 0; j < 4; ++j) {
                if (mask & (1 << j)) {
                    sum += v[j];
                    ++k;
                }
            }
            const double theta = (sum - 1.0) / k;
            Vector cand = Vector::Zero(4);
            bool ok = true;
            for (int j = 0; j < 4; ++j) {
                if (mask & (1 << j)) {
                    cand[j] = v[j] - theta;
                    ok = ok && cand[j] >= 0.0;
                }
            }
            if (ok) best = std::min(best, (cand - v).squaredNorm());
        }
        CHECK((w - v).squaredNorm() == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("objective examples") {
    Rng rng(4);
    Dataset data = random_dataset(4, 2, rng);
    const NearestNeighborMap nn = nearest_cross_group(data);
    const auto w = ReweightingRepresentation::uniform(2);
    CHECK(blr_objective(w, Vector::Zero(3), data, nn, 0.0, 0.0) == doctest::Approx(data.y_factual.cwiseAbs().mean()));

    Dataset balanced;
    balanced.covariates = Matrix(4, 2);
    balanced.covariates << 1, 2, 1, 2, 3, 0, 3, 0;
    balanced.treatment = Vector(4);
    balanced.treatment << 1, 0, 1, 0;
    balanced.y_factual = Vector(4);
    balanced.y_factual << 1, -2, 3, 0.5;
    const NearestNeighborMap nnb = nearest_cross_group(balanced);
    CHECK(blr_objective(w, Vector::Zero(3), balanced, nnb, 1.0, 0.0) == doctest::Approx(6.5 / 4));

    // Term-by-term recomposition with a random h.
    Vector h(3);
    h << 0.3, -0.7, 1.1;
    Vector wv(2);
    wv << 0.25, 0.75;
    const ReweightingRepresentation wr{wv};
    double factual = 0.0, cf = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double base = h[0] * wv[0] * data.covariates(i, 0) + h[1] * wv[1] * data.covariates(i, 1);
        factual += std::abs(base + h[2] * data.treatment[i] - data.y_factual[i]);
        cf += std::abs(base + h[2] * (1 - data.treatment[i]) - data.y_factual[nn.j[i]]);
    }
    const double expected = factual / 4 + 0.5 * weighted_linear_disc(data.covariates, data.treatment, wv) + 2.0 * cf / 4;
    CHECK(blr_objective(wr, h, data, nn, 0.5, 2.0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("training descends, stays on the simplex and is deterministic") {
    Rng rng(5);
    Dataset data = random_dataset(40, 4, rng);
    data.y_factual = data.covariates * Vector::LinSpaced(4, 1, 4) + 2.0 * data.treatment;
    const NearestNeighborMap nn = nearest_cross_group(data);
    BlrConfig cfg;
    const BlrTrainResult r = blr_train(data, nn, cfg);
    const double initial = blr_objective(ReweightingRepresentation::uniform(4), Vector::Zero(5), data, nn, 0, 0);
    CHECK(r.objective < initial);
    CHECK(r.w.on_simplex());
    CHECK(r.objective == doctest::Approx(blr_objective(r.w, r.h, data, nn, 0, 0)));
    for (std::size_t k = 1; k < r.best_objective_per_round.size(); ++k) {
        CHECK(r.best_objective_per_round[k] <= r.best_objective_per_round[k - 1]);
    }
    const BlrTrainResult again = blr_train(data, nn, cfg);
    CHECK(again.w.w == r.w.w);
    CHECK(again.h == r.h);

    cfg.alpha = 1.0;
    cfg.gamma = 0.5;
    const BlrTrainResult pen = blr_train(data, nn, cfg);
    CHECK(pen.w.on_simplex());
}

TEST_CASE("diverging steps report the round") {
    Rng rng(6);
    Dataset data = random_dataset(10, 2, rng);
    data.y_factual *= 1e300;
    BlrConfig cfg;
    cfg.step0_h = 1e300;
    CHECK_THROWS_WITH_AS(blr_train(data, nearest_cross_group(data), cfg), doctest::Contains("non-finite objective in round"),
                         std::exception);
}

TEST_CASE("imbalance penalty suppresses a nuisance feature") {
    int below = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset data = nuisance_instance(seed);
        BlrConfig cfg;
        cfg.alpha = 10.0;
        cfg.seed = seed;
        const BlrTrainResult r = blr_train(data, nearest_cross_group(data), cfg);
        if (r.w.w[0] < 1.0 / 5.0) ++below;
    }
    CHECK(below >= 8);
}

TEST_CASE("weighted disc at the learned w responds to alpha") {
    std::vector<double> mean_disc;
    for (double alpha : {0.0, 0.1, 1.0, 10.0}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Dataset data = nuisance_instance(100 + seed, 80, 4);
            BlrConfig cfg;
            cfg.alpha = alpha;
            cfg.outer_iters = 20;
            const BlrTrainResult r = blr_train(data, nearest_cross_group(data), cfg);
            total += weighted_linear_disc(data.covariates, data.treatment, r.w.w);
        }
        mean_disc.push_back(total / 20);
    }
    for (std::size_t k = 1; k < mean_disc.size(); ++k) CHECK(mean_disc[k] <= mean_disc[k - 1] + 1e-12);
}

TEST_CASE("finalize and predict") {
    Rng rng(7);
    Dataset data = random_dataset(30, 3, rng);
    const Vector w = Vector::Constant(3, 1.0 / 3);
    Vector beta(3);
    beta << 1, 2, 3;
    data.y_factual = data.covariates * beta / 3.0 + 1.5 * data.treatment + Vector::Constant(30, 0.5);
    const auto rep = ReweightingRepresentation::uniform(3);
    const LinearModel m = blr_finalize(data, rep, 1e-12);
    CHECK((m.weights.head(3) - beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.weights[3] == doctest::Approx(1.5));

    const LinearModel direct = ridge_fit(reweighted_design(data.covariates, w, data.treatment), data.y_factual, 1e-12);
    CHECK((direct.weights - m.weights).norm() < 1e-12);

    const auto [y0, y1] = blr_predict_both(m, rep, data.covariates);
    CHECK(((y1 - y0).array() - m.weights[3]).abs().maxCoeff() < 1e-12);

    LinearModel manual;
    manual.weights = Vector(4);
    manual.weights << 1, -1, 0.5, 2.0;
    manual.intercept = 0.25;
    Matrix X(3, 3);
    X << 1, 2, 3, -1, 0, 1, 4, 4, 4;
    Vector wv(3);
    wv << 0.5, 0.25, 0.25;
    const auto [a0, a1] = blr_predict_both(manual, ReweightingRepresentation{wv}, X);
    for (int i = 0; i < 3; ++i) {
        const double base = 0.25 + 0.5 * X(i, 0) - 0.25 * X(i, 1) + 0.125 * X(i, 2);
        CHECK(a0[i] == doctest::Approx(base));
        CHECK(a1[i] == doctest::Approx(base + 2.0));
    }

    LinearModel zero;
    zero.weights = Vector::Zero(4);
    zero.intercept = -3.0;
    const auto [z0, z1] = blr_predict_both(zero, rep, X);
    CHECK((z0.array() == -3.0).all());
    CHECK((z1.array() == -3.0).all());
}

TEST_CASE("rescaled covariates leave the tiny-ridge finalize predictions unchanged") {
    Rng rng(8);
    Dataset data = random_dataset(30, 3, rng);
    const auto rep = ReweightingRepresentation::uniform(3);
    Dataset scaled = data;
    scaled.covariates *= 7.0;
    const auto [a0, a1] = blr_predict_both(blr_finalize(data, rep, 1e-12), rep, data.covariates);
    const auto [b0, b1] = blr_predict_both(blr_finalize(scaled, rep, 1e-12), rep, scaled.covariates);
    CHECK((a0 - b0).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a1 - b1).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("model file round-trip") {
    Rng rng(9);
    Dataset data = random_dataset(20, 3, rng);
    BlrConfig cfg;
    cfg.alpha = 0.3;
    cfg.outer_iters = 3;
    const BlrTrainResult r = blr_train(data, nearest_cross_group(data), cfg);
    const LinearModel m = blr_finalize(data, r.w, cfg.lambda);
    const auto dir = testing::temp_dir("blr_file");
    save_blr((dir / "m.txt").string(), r.w, m, cfg);
    const BlrModelFile back = load_blr((dir / "m.txt").string());
    CHECK(back.w.w == r.w.w);
    CHECK(back.model.weights == m.weights);
    CHECK(back.model.intercept == m.intercept);
    CHECK(back.cfg.alpha == cfg.alpha);
    CHECK(back.cfg.outer_iters == 3);
}

}
