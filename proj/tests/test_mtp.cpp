// Max-type multiple testing on the proportion scale: contrast matrices,
// studentized statistics, critical values, and rejection behaviour.

#include <doctest.h>

#include <sae/area_model.hpp>
#include <sae/bootstrap.hpp>
#include <sae/errors.hpp>
#include <sae/rng.hpp>
#include <sae/unit_model.hpp>

#include <cmath>
#include <string>
#include <vector>

using namespace sae;

namespace {

AreaDataset simulate_area(int D, const Eigen::VectorXd& beta, double delta,
                          std::uint64_t seed) {
    AreaDataset d;
    d.X.resize(D, beta.size());
    d.y.resize(D);
    d.N.resize(D);
    d.covariates.assign(static_cast<std::size_t>(beta.size()), "");
    d.covariates[0] = "intercept";
    for (int k = 1; k < beta.size(); ++k) d.covariates[k] = "x" + std::to_string(k);
    RngStream rng(seed, 0, 11);
    for (int i = 0; i < D; ++i) {
        d.area.push_back("a" + std::to_string(i + 1));
        d.X(i, 0) = 1.0;
        for (int k = 1; k < beta.size(); ++k) d.X(i, k) = rng.uniform() * 2.0 - 1.0;
        const double lambda = std::exp(d.X.row(i) * beta);
        d.y[i] = rng.poisson(lambda * rng.gamma(delta, delta));
        d.N[i] = 400.0 + 10.0 * i;
    }
    return d;
}

UnitDataset simulate_units(int D, const Eigen::VectorXd& beta, double delta,
                           std::uint64_t seed, int units_per_class = 12) {
    const int L = 4;
    UnitDataset d;
    d.Z.resize(L, 3);
    d.Z << 1, 0, 0,
           1, 1, 0,
           1, 0, 1,
           1, 1, 2;
    d.covariates = {"intercept", "x1", "x2"};
    d.class_label = {"0_0", "1_0", "0_1", "1_2"};
    d.Npop = Eigen::MatrixXd::Zero(D, L);
    d.ysum = Eigen::MatrixXd::Zero(D, L);
    d.msum = Eigen::MatrixXd::Zero(D, L);
    d.nsamp = Eigen::MatrixXd::Zero(D, L);

    RngStream rng(seed, 0, 21);
    std::vector<double> ys, ms, ws;
    for (int a = 0; a < D; ++a) {
        d.area.push_back("a" + std::to_string(a + 1));
        const double u = rng.normal();
        for (int l = 0; l < L; ++l) {
            const double p = 1.0 / (1.0 + std::exp(-(d.Z.row(l) * beta)(0) - delta * u));
            const int nl = units_per_class;
            d.Npop(a, l) = 5.0 * nl;
            d.nsamp(a, l) = nl;
            for (int j = 0; j < nl; ++j) {
                const double y = rng.uniform() < p ? 1.0 : 0.0;
                d.unit_area.push_back(a);
                d.unit_class.push_back(l);
                ys.push_back(y);
                ms.push_back(1.0);
                ws.push_back(5.0);
                d.ysum(a, l) += y;
                d.msum(a, l) += 1.0;
            }
        }
    }
    d.unit_y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<long>(ys.size()));
    d.unit_m = Eigen::Map<Eigen::VectorXd>(ms.data(), static_cast<long>(ms.size()));
    d.unit_w = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<long>(ws.size()));
    return d;
}

struct MtpFixture {
    AreaDataset data;
    AreaFit fit;
    PredictionSet pred;
    BootstrapEnsemble ens;
    BootstrapConfig cfg;

    explicit MtpFixture(int B1 = 150, std::uint64_t seed = 303) {
        const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 3.0, 0.8, -0.5).finished();
        data = simulate_area(20, beta, 2.48, 20260802);
        fit = fit_area_model(data);
        REQUIRE(fit.converged);
        pred = predict_area(data, fit.params);
        cfg.B1 = B1;
        cfg.B2 = 0;
        cfg.seed = seed;
        ens = bootstrap_area(data, fit, cfg);
    }
};

}  // namespace

TEST_CASE("paired difference contrasts have the documented layout") {
    const Eigen::MatrixXd c4 = paired_difference_contrast(4);
    REQUIRE(c4.rows() == 2);
    REQUIRE(c4.cols() == 4);
    Eigen::MatrixXd want(2, 4);
    want << 1, -1, 0, 0,
            0, 0, 1, -1;
    CHECK(c4 == want);

    const Eigen::MatrixXd c10 = paired_difference_contrast(10);
    REQUIRE(c10.rows() == 5);
    REQUIRE(c10.cols() == 10);
    // Every row is one +1/-1 pair and rows cover disjoint columns.
    CHECK(c10.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
    CHECK(c10.cwiseAbs().rowwise().sum().maxCoeff() == 2.0);
    CHECK(c10.cwiseAbs().colwise().sum().maxCoeff() == 1.0);

    CHECK_THROWS_AS(paired_difference_contrast(5), OddLength);
    CHECK_THROWS_AS(paired_difference_contrast(0), OddLength);
    CHECK_THROWS_AS(paired_difference_contrast(-2), OddLength);
}

TEST_CASE("testing the fitted proportions themselves never rejects") {
    MtpFixture f;
    const int D = f.data.D();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(D, D);
    const MtpResult r = mtp_from_ensemble(f.ens, f.pred, id, f.pred.prop, f.cfg);

    REQUIRE(r.t_stat.size() == D);
    REQUIRE(r.sigma.size() == D);
    CHECK(r.sigma.minCoeff() > 0.0);
    CHECK(r.t_stat.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.t_max == 0.0);
    CHECK(r.q_crit > 0.0);
    CHECK_FALSE(r.reject);
    CHECK(r.contrast == id);
    CHECK(r.target == f.pred.prop);
}

TEST_CASE("rejection matches the comparison of the max statistic with its critical value") {
    MtpFixture f;
    const int D = f.data.D();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(D, D);

    // Perturb one hypothesized proportion by a modest multiple of its scale
    // and verify the bookkeeping, whatever the verdict.
    for (const double shift : {0.5, 1.5, 3.0, 10.0}) {
        Eigen::VectorXd target = f.pred.prop;
        target[3] += shift * 0.01;
        const MtpResult r = mtp_from_ensemble(f.ens, f.pred, id, target, f.cfg);
        CHECK(r.t_max == doctest::Approx(r.t_stat.cwiseAbs().maxCoeff()));
        CHECK(r.reject == (r.t_max >= r.q_crit));
        // Only coordinate 3 moved, so it carries the extreme statistic.
        CHECK(std::abs(r.t_stat[3]) == doctest::Approx(r.t_max));
        CHECK(r.t_stat[3] < 0.0);  // target above the estimate
    }
}

TEST_CASE("gross departures from the hypothesis are rejected, tiny ones are not") {
    MtpFixture f;
    const int D = f.data.D();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(D, D);

    // Hypothesized proportions shifted far beyond any plausible scale.
    const Eigen::VectorXd far = f.pred.prop.array() + 1.0;
    const MtpResult alt = mtp_from_ensemble(f.ens, f.pred, id, far, f.cfg);
    CHECK(alt.reject);
    CHECK(alt.t_max > alt.q_crit);

    // A perturbation orders of magnitude below the bootstrap scales.
    const Eigen::VectorXd near = f.pred.prop.array() + 1e-12;
    const MtpResult null_ish = mtp_from_ensemble(f.ens, f.pred, id, near, f.cfg);
    CHECK_FALSE(null_ish.reject);
    CHECK(null_ish.t_max < null_ish.q_crit);
}

TEST_CASE("paired differences of the fitted proportions behave like a null") {
    MtpFixture f;
    const int D = f.data.D();
    const Eigen::MatrixXd pairs = paired_difference_contrast(D);

    // Hypothesize exactly the fitted differences: statistic is identically 0.
    const Eigen::VectorXd b0 = pairs * f.pred.prop;
    const MtpResult r0 = mtp_from_ensemble(f.ens, f.pred, pairs, b0, f.cfg);
    CHECK(r0.t_max == 0.0);
    CHECK_FALSE(r0.reject);
    CHECK(r0.sigma.minCoeff() > 0.0);
    REQUIRE(r0.t_stat.size() == D / 2);

    // Hypothesize wildly wrong differences: rejected.
    const Eigen::VectorXd b1 = b0.array() + 0.5;
    const MtpResult r1 = mtp_from_ensemble(f.ens, f.pred, pairs, b1, f.cfg);
    CHECK(r1.reject);
}

TEST_CASE("contrast and target dimension errors are reported") {
    MtpFixture f;
    const int D = f.data.D();

    // Wrong number of columns.
    const Eigen::MatrixXd narrow = Eigen::MatrixXd::Identity(D - 1, D - 1);
    CHECK_THROWS_AS(
        mtp_from_ensemble(f.ens, f.pred, narrow,
                          Eigen::VectorXd::Zero(D - 1), f.cfg),
        DimensionMismatch);

    // More contrasts than areas.
    Eigen::MatrixXd tall = Eigen::MatrixXd::Zero(D + 1, D);
    for (int i = 0; i <= D; ++i) tall(i, i % D) = 1.0;
    CHECK_THROWS_AS(
        mtp_from_ensemble(f.ens, f.pred, tall,
                          Eigen::VectorXd::Zero(D + 1), f.cfg),
        DimensionMismatch);

    // Target length disagrees with the number of contrasts.
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(D, D);
    CHECK_THROWS_AS(
        mtp_from_ensemble(f.ens, f.pred, id, Eigen::VectorXd::Zero(D - 2), f.cfg),
        DimensionMismatch);

    // A contrast that annihilates every replicate has no scale.
    Eigen::MatrixXd with_zero_row = Eigen::MatrixXd::Identity(D, D);
    with_zero_row.row(4).setZero();
    CHECK_THROWS_AS(
        mtp_from_ensemble(f.ens, f.pred, with_zero_row, f.pred.prop, f.cfg),
        ZeroSigma);
}

TEST_CASE("the one-call test equals the composed pipeline") {
    MtpFixture f;
    const int D = f.data.D();
    const Eigen::MatrixXd pairs = paired_difference_contrast(D);
    Eigen::VectorXd target = (pairs * f.pred.prop).array() + 0.02;

    const MtpResult whole = mtp(f.data, f.fit, pairs, target, f.cfg);
    const MtpResult parts = mtp_from_ensemble(f.ens, f.pred, pairs, target, f.cfg);
    CHECK(whole.t_stat == parts.t_stat);
    CHECK(whole.sigma == parts.sigma);
    CHECK(whole.t_max == parts.t_max);
    CHECK(whole.q_crit == parts.q_crit);
    CHECK(whole.reject == parts.reject);
}

TEST_CASE("unit model hypotheses run through the same machinery") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << -1.0, 0.6, 0.2).finished();
    const UnitDataset d = simulate_units(10, beta, 0.4, 1177);
    const UnitFit fit = fit_unit_model(d);
    REQUIRE(fit.converged);

    BootstrapConfig cfg;
    cfg.B1 = 100;
    cfg.B2 = 0;
    cfg.seed = 23;

    const PredictionSet pred = predict_unit(d, fit.params);
    const Eigen::MatrixXd pairs = paired_difference_contrast(d.D());
    const Eigen::VectorXd b0 = pairs * pred.prop;

    const MtpResult r0 = mtp(d, fit, pairs, b0, cfg);
    CHECK(r0.t_max == 0.0);
    CHECK_FALSE(r0.reject);
    CHECK(r0.q_crit > 0.0);
    CHECK(r0.sigma.minCoeff() > 0.0);

    const Eigen::VectorXd b1 = b0.array() + 0.9;
    const MtpResult r1 = mtp(d, fit, pairs, b1, cfg);
    CHECK(r1.reject);
}
