// Parametric bootstrap ensembles, bootstrap MSE estimators, and the
// simultaneous/individual interval construction, for both models.

#include <doctest.h>

#include <sae/area_model.hpp>
#include <sae/bootstrap.hpp>
#include <sae/errors.hpp>
#include <sae/gauss_hermite.hpp>
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

// Shared area-model fixture: one dataset, one fit, one ensemble.
struct AreaFixture {
    AreaDataset data;
    AreaFit fit;
    PredictionSet pred;
    BootstrapEnsemble ens;

    explicit AreaFixture(int B1 = 200, int B2 = 1, std::uint64_t seed = 99) {
        const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 3.0, 0.8, -0.5).finished();
        data = simulate_area(20, beta, 2.48, 20260802);
        fit = fit_area_model(data);
        REQUIRE(fit.converged);
        pred = predict_area(data, fit.params);
        BootstrapConfig cfg;
        cfg.B1 = B1;
        cfg.B2 = B2;
        cfg.seed = seed;
        ens = bootstrap_area(data, fit, cfg);
    }
};

}  // namespace

TEST_CASE("order statistic rank matches the interval definition") {
    CHECK(order_statistic_index(0.05, 1000) == 951);
    CHECK(order_statistic_index(0.05, 200) == 191);
    CHECK(order_statistic_index(0.05, 500) == 476);
    // Exact-integer products must not be pushed up by floating-point drift.
    CHECK(order_statistic_index(0.10, 100) == 91);
    CHECK(order_statistic_index(0.05, 100) == 96);
    // Rank is capped at the sample size.
    CHECK(order_statistic_index(0.001, 100) == 100);

    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(static_cast<double>(i));
    CHECK(order_statistic(v, 0.05) == doctest::Approx(96.0));
}

TEST_CASE("bootstrap resamples match the fitted model's moments") {
    AreaFixture f(400, 0, 7);
    const int B = static_cast<int>(f.ens.mu_star.rows());
    REQUIRE(B == 400);
    CHECK(f.ens.failed == 0);

    const Eigen::VectorXd lam = (f.data.X * f.fit.params.beta).array().exp();
    const double delta = f.fit.params.delta;

    // mu*_d / lambda_d are the gamma multipliers: mean 1, variance 1/delta.
    const Eigen::MatrixXd w = f.ens.mu_star * lam.cwiseInverse().asDiagonal();
    const double n = static_cast<double>(w.size());
    const double wbar = w.mean();
    CHECK(std::abs(wbar - 1.0) < 3.0 * std::sqrt(1.0 / delta / n));
    const double wvar = (w.array() - wbar).square().sum() / (n - 1.0);
    // Var of the sample variance of a gamma: use a generous 6 SE bound with
    // the normal-theory approximation 2 sigma^4 / n inflated for skewness.
    CHECK(std::abs(wvar - 1.0 / delta) < 6.0 * std::sqrt(2.0 / n) / delta);

    // E*(y*_d) = lambda_hat_d, Var*(y*_d) = lambda + lambda^2/delta.
    for (int d = 0; d < f.data.D(); ++d) {
        const double se = std::sqrt((lam[d] + lam[d] * lam[d] / delta) / B);
        CHECK(std::abs(f.ens.y_star.col(d).mean() - lam[d]) < 4.0 * se);
    }
}

TEST_CASE("bootstrap ensembles are reproducible and carry a PSD covariance") {
    AreaFixture a(150, 1, 4242), b(150, 1, 4242);
    CHECK(a.ens.mu_star == b.ens.mu_star);
    CHECK(a.ens.mu_hat == b.ens.mu_hat);
    CHECK(a.ens.y_star == b.ens.y_star);
    CHECK(a.ens.theta_star == b.ens.theta_star);
    CHECK(a.ens.inner_sq == b.ens.inner_sq);
    CHECK(a.ens.vcov == b.ens.vcov);

    AreaFixture c(150, 1, 4243);
    CHECK(a.ens.mu_star != c.ens.mu_star);

    CHECK((a.ens.vcov - a.ens.vcov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.ens.vcov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("bootstrap mse estimators obey their defining identities") {
    AreaFixture f(200, 1, 31);
    const MseResult mse = mse_bootstrap(f.ens);
    REQUIRE(mse.mse_b.size() == f.data.D());
    REQUIRE(mse.mse_bc.size() == f.data.D());

    const Eigen::VectorXd direct =
        (f.ens.mu_hat - f.ens.mu_star).cwiseAbs2().colwise().mean();
    CHECK((mse.mse_b - direct).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(mse.mse_b.minCoeff() >= 0.0);
    for (int d = 0; d < mse.mse_b.size(); ++d) {
        CHECK(mse.mse_bc[d] >= 0.0);
        CHECK(mse.mse_bc[d] <= 2.0 * mse.mse_b[d] + 1e-12);
        if (mse.bc_floored[static_cast<std::size_t>(d)]) CHECK(mse.mse_bc[d] == 0.0);
    }

    AreaFixture g(120, 0, 31);
    CHECK_NOTHROW(mse_bootstrap(g.ens, false));
    CHECK_THROWS_AS(mse_bootstrap(g.ens, true), MissingSecondStage);
}

TEST_CASE("simultaneous intervals dominate the individual ones for every scale kind") {
    AreaFixture f(200, 1, 55);
    BootstrapConfig cfg;
    cfg.B1 = 200;
    cfg.B2 = 1;
    cfg.seed = 55;
    for (const SigmaKind kind : {SigmaKind::G1, SigmaKind::MsePlugin,
                                 SigmaKind::MseBoot, SigmaKind::MseBootBC}) {
        cfg.sigma_kind = kind;
        const SimultaneousResult r = sci(f.ens, f.pred, cfg);
        CHECK(r.q_sci > 0.0);
        CHECK(r.sigma.minCoeff() > 0.0);
        for (int d = 0; d < f.data.D(); ++d) {
            CHECK(r.q_sci >= r.q_ici[d]);
            CHECK(r.sci_lo[d] <= r.ici_lo[d]);
            CHECK(r.sci_hi[d] >= r.ici_hi[d]);
            // Intervals are centered at the EBP on both scales.
            CHECK(0.5 * (r.sci_lo[d] + r.sci_hi[d]) ==
                  doctest::Approx(f.pred.mu[d]).epsilon(1e-10));
            CHECK(0.5 * (r.sci_lo_prop[d] + r.sci_hi_prop[d]) ==
                  doctest::Approx(f.pred.prop[d]).epsilon(1e-10));
        }
    }
}

TEST_CASE("wider confidence level gives narrower intervals") {
    AreaFixture f(200, 0, 77);
    BootstrapConfig cfg;
    cfg.B1 = 200;
    cfg.B2 = 0;
    cfg.seed = 77;
    cfg.sigma_kind = SigmaKind::G1;
    cfg.alpha = 0.05;
    const SimultaneousResult tight = sci(f.ens, f.pred, cfg);
    cfg.alpha = 0.5;
    const SimultaneousResult loose = sci(f.ens, f.pred, cfg);
    CHECK(loose.q_sci < tight.q_sci);
    // Same per-area scales, smaller quantile: strictly narrower area by area.
    CHECK(((loose.sci_hi - loose.sci_lo).array() <
           (tight.sci_hi - tight.sci_lo).array()).all());
}

TEST_CASE("plug-in scales dominate the first-order scales") {
    AreaFixture f(150, 0, 13);
    // The plug-in MSE adds a PSD quadratic form to g1.
    CHECK((f.ens.center_plugin.array() >= f.ens.center_g1.array() - 1e-12).all());

    PredictionSet pred = f.pred;
    attach_mse(pred, f.ens);
    REQUIRE(pred.mse_plugin.size() == f.data.D());
    REQUIRE(pred.mse_b.size() == f.data.D());
    CHECK(pred.mse_bc.size() == 0);  // built with B2 = 0
    CHECK((pred.mse_plugin.array() >= pred.g1.array() - 1e-12).all());
}

TEST_CASE("diagnostic statistics accompany the studentized ones on request") {
    AreaFixture f(150, 0, 21);
    BootstrapConfig cfg;
    cfg.B1 = 150;
    cfg.B2 = 0;
    cfg.seed = 21;
    cfg.sigma_kind = SigmaKind::G1;
    cfg.raw_statistic = true;
    cfg.bonferroni = true;
    const SimultaneousResult r = sci(f.ens, f.pred, cfg);
    CHECK(r.q_raw > 0.0);
    REQUIRE(r.q_bonf.size() == f.data.D());
    // Per-area quantiles at level 1 - alpha/D sit above those at 1 - alpha.
    for (int d = 0; d < f.data.D(); ++d) CHECK(r.q_bonf[d] >= r.q_ici[d]);
}

TEST_CASE("degenerate ensembles and invalid configurations are rejected") {
    AreaFixture f(120, 0, 3);
    BootstrapConfig cfg;
    cfg.B1 = 120;
    cfg.seed = 3;

    BootstrapConfig bad = cfg;
    bad.B1 = 50;
    CHECK_THROWS_AS(bootstrap_area(f.data, f.fit, bad), ValidationError);
    bad = cfg;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bootstrap_area(f.data, f.fit, bad), ValidationError);
    bad = cfg;
    bad.alpha = 1.0;
    CHECK_THROWS_AS(bootstrap_area(f.data, f.fit, bad), ValidationError);
    bad = cfg;
    bad.B2 = -1;
    CHECK_THROWS_AS(bootstrap_area(f.data, f.fit, bad), ValidationError);

    AreaFit unconverged = f.fit;
    unconverged.converged = false;
    CHECK_THROWS_AS(bootstrap_area(f.data, unconverged, cfg), ValidationError);

    // All deviations zero -> zero bootstrap scale.
    BootstrapEnsemble flat = f.ens;
    flat.mu_hat = flat.mu_star;
    cfg.sigma_kind = SigmaKind::MseBoot;
    CHECK_THROWS_AS(sci(flat, f.pred, cfg), ZeroSigma);
}

TEST_CASE("unit model bootstrap reproduces its generator moments") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << -1.0, 0.6, 0.2).finished();
    const double delta = 0.5;
    const UnitDataset d = simulate_units(12, beta, delta, 606);
    const UnitFit fit = fit_unit_model(d);
    REQUIRE(fit.converged);

    BootstrapConfig cfg;
    cfg.B1 = 150;
    cfg.B2 = 0;
    cfg.seed = 17;
    const BootstrapEnsemble ens = bootstrap_unit(d, fit, cfg);
    CHECK(ens.failed == 0);
    REQUIRE(ens.mu_star.rows() == 150);

    // Quadrature oracle for E*(mu*_d) and Var*(mu*_d) under the fitted model.
    const GaussHermiteRule rule = gauss_hermite(80);
    const Eigen::VectorXd eta = d.Z * fit.params.beta;
    for (int a = 0; a < d.D(); ++a) {
        double m1 = 0.0, m2 = 0.0;
        for (int r = 0; r < rule.nodes.size(); ++r) {
            const double u = std::sqrt(2.0) * rule.nodes[r];
            double mu = 0.0;
            for (int l = 0; l < d.L(); ++l)
                mu += d.Npop(a, l) /
                      (1.0 + std::exp(-eta[l] - fit.params.delta * u));
            const double wq = rule.weights[r] / std::sqrt(M_PI);
            m1 += wq * mu;
            m2 += wq * mu * mu;
        }
        const double se = std::sqrt((m2 - m1 * m1) / 150.0);
        CHECK(std::abs(ens.mu_star.col(a).mean() - m1) < 4.0 * se + 1e-9);
    }

    // Reproducibility and the restriction to bootstrap scale kinds.
    const BootstrapEnsemble again = bootstrap_unit(d, fit, cfg);
    CHECK(ens.mu_star == again.mu_star);
    CHECK(ens.mu_hat == again.mu_hat);
    CHECK(ens.theta_star == again.theta_star);

    const PredictionSet pred = predict_unit(d, fit.params);
    cfg.sigma_kind = SigmaKind::G1;
    CHECK_THROWS_AS(sci(ens, pred, cfg), ValidationError);
    cfg.sigma_kind = SigmaKind::MsePlugin;
    CHECK_THROWS_AS(sci(ens, pred, cfg), ValidationError);

    cfg.sigma_kind = SigmaKind::MseBoot;
    const SimultaneousResult r = sci(ens, pred, cfg);
    for (int a = 0; a < d.D(); ++a) {
        CHECK(r.q_sci >= r.q_ici[a]);
        CHECK(0.5 * (r.sci_lo[a] + r.sci_hi[a]) ==
              doctest::Approx(pred.mu[a]).epsilon(1e-10));
    }
}

TEST_CASE("unit model second stage supports the bias-corrected scale") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << -0.8, 0.5, 0.3).finished();
    const UnitDataset d = simulate_units(8, beta, 0.4, 909, 10);
    const UnitFit fit = fit_unit_model(d);
    REQUIRE(fit.converged);

    BootstrapConfig cfg;
    cfg.B1 = 100;
    cfg.B2 = 1;
    cfg.seed = 5;
    cfg.sigma_kind = SigmaKind::MseBootBC;
    const BootstrapEnsemble ens = bootstrap_unit(d, fit, cfg);
    const PredictionSet pred = predict_unit(d, fit.params);
    const SimultaneousResult r = sci(ens, pred, cfg);
    CHECK(r.q_sci > 0.0);
    CHECK(r.sigma.minCoeff() > 0.0);
}
