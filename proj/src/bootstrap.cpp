#include "sae/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sae/direct.hpp"
#include "sae/errors.hpp"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

namespace sae {

namespace {

void check_config(const BootstrapConfig& cfg) {
  if (cfg.B1 < 100)
    throw ValidationError("bootstrap: B1 must be at least 100, got " + std::to_string(cfg.B1));
  if (cfg.B2 < 0)
    throw ValidationError("bootstrap: B2 must be nonnegative");
  if (!(cfg.alpha > 0.0) || !(cfg.alpha < 1.0))
    throw ValidationError("bootstrap: alpha must lie strictly between 0 and 1");
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Replicate refits start from the parent estimates.
AreaFit refit_area(const AreaDataset& data, const AreaParams& start) {
  AreaFitOptions opts;
  opts.warm_start = start;
  return fit_area_model(data, opts);
}

UnitFit refit_unit(const UnitDataset& data, const UnitParams& start, const AgqConfig& agq) {
  UnitFitOptions opts;
  opts.warm_start = start;
  return fit_unit_model(data, agq, opts);
}

// Discards the rows of failed replicates, keeping the surviving ones in
// replicate order so results do not depend on the execution schedule.
void compress_rows(Eigen::MatrixXd& m, const std::vector<char>& ok, int survivors) {
  if (m.size() == 0) return;
  Eigen::MatrixXd out(survivors, m.cols());
  int r = 0;
  for (int b = 0; b < static_cast<int>(ok.size()); ++b)
    if (ok[b]) out.row(r++) = m.row(b);
  m = std::move(out);
}

void finalize_ensemble(BootstrapEnsemble& ens, const std::vector<char>& ok,
                       const BootstrapConfig& cfg) {
  const int B1 = cfg.B1;
  int survivors = 0;
  for (int b = 0; b < B1; ++b) {
    if (ok[b])
      ++survivors;
    else
      ens.failed_ids.push_back(b);
  }
  ens.failed = B1 - survivors;
  if (ens.failed > 0.05 * B1)
    throw BootstrapFailureRate("bootstrap: " + std::to_string(ens.failed) + " of " +
                               std::to_string(B1) + " replicate refits failed");
  compress_rows(ens.mu_star, ok, survivors);
  compress_rows(ens.mu_hat, ok, survivors);
  compress_rows(ens.y_star, ok, survivors);
  compress_rows(ens.theta_star, ok, survivors);
  compress_rows(ens.inner_sq, ok, survivors);

  const int q = static_cast<int>(ens.theta_star.cols());
  const Eigen::VectorXd mean = ens.theta_star.colwise().mean();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(q, q);
  for (int b = 0; b < survivors; ++b) {
    const Eigen::VectorXd c = ens.theta_star.row(b).transpose() - mean;
    v += c * c.transpose();
  }
  v /= static_cast<double>(survivors);
  ens.vcov = 0.5 * (v + v.transpose());
}

Eigen::VectorXd bc_variances(const MseResult& mse) {
  // Flagged areas (negative bias correction) fall back to the single
  // bootstrap MSE so the scale stays strictly positive.
  Eigen::VectorXd out(mse.mse_b.size());
  for (int d = 0; d < out.size(); ++d)
    out[d] = mse.bc_floored[static_cast<std::size_t>(d)] ? mse.mse_b[d] : mse.mse_bc[d];
  return out;
}

}  // namespace

int order_statistic_index(double alpha, int B) {
  const double x = (1.0 - alpha) * static_cast<double>(B) + 1.0;
  // Guard the exact-integer case against floating-point drift before ceil.
  const double r = std::nearbyint(x);
  int k = (std::abs(x - r) < 1e-8) ? static_cast<int>(r)
                                   : static_cast<int>(std::ceil(x));
  return std::min(std::max(k, 1), B);
}

double order_statistic(std::vector<double> v, double alpha) {
  if (v.empty()) throw ValidationError("order_statistic: empty sample");
  const int k = order_statistic_index(alpha, static_cast<int>(v.size()));
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(k - 1)];
}

PredictionSet predict_area(const AreaDataset& data, const AreaParams& params) {
  PredictionSet out;
  out.area = data.area;
  out.mu = area_bp(data, params);
  out.denom = data.N;
  out.prop = out.mu.cwiseQuotient(out.denom);
  out.g1 = area_g1(data, params);
  return out;
}

PredictionSet predict_unit(const UnitDataset& data, const UnitParams& params,
                           const AgqConfig& agq, bool use_estimated_N) {
  const UnitEbp ebp = unit_ebp_quadrature(data, params, agq);
  PredictionSet out;
  out.area = data.area;
  if (use_estimated_N) {
    const Eigen::MatrixXd nhat = direct_estimators(data).Nhat_class;
    out.mu = (nhat.array() * ebp.r.array()).rowwise().sum();
    out.denom = nhat.rowwise().sum();
  } else {
    out.mu = ebp.mu;
    out.denom = data.N();
  }
  out.prop = out.mu.cwiseQuotient(out.denom);
  return out;
}

BootstrapEnsemble bootstrap_area(const AreaDataset& data, const AreaFit& fit,
                                 const BootstrapConfig& cfg) {
  check_config(cfg);
  if (!fit.converged)
    throw ValidationError("bootstrap_area: parent fit did not converge");
  const int D = data.D();
  const int p = data.p();
  const int B1 = cfg.B1;
  const Eigen::VectorXd lam_hat = (data.X * fit.params.beta).array().exp();
  const double delta_hat = fit.params.delta;

  BootstrapEnsemble ens;
  ens.model = ModelKind::Area;
  ens.requested = B1;
  ens.inner = cfg.B2;
  ens.denom = data.N;
  ens.mu_star.resize(B1, D);
  ens.mu_hat.resize(B1, D);
  ens.y_star.resize(B1, D);
  ens.theta_star.resize(B1, p + 1);
  if (cfg.B2 > 0) ens.inner_sq.resize(B1, D);
  std::vector<char> ok(B1, 0);

  parallel_for(static_cast<std::size_t>(B1), cfg.threads, [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    try {
      RngStream g(cfg.seed, static_cast<std::uint64_t>(b) + 1, 1);
      AreaDataset rep = data;
      for (int d = 0; d < D; ++d) {
        const double w = g.gamma(delta_hat, delta_hat);
        const double mu = lam_hat[d] * w;
        ens.mu_star(b, d) = mu;
        rep.y[d] = static_cast<double>(g.poisson(mu));
      }
      ens.y_star.row(b) = rep.y.transpose();
      const AreaFit rf = refit_area(rep, fit.params);
      if (!rf.converged) throw ReplicateFitFailure("replicate refit did not converge");
      ens.mu_hat.row(b) = area_bp(rep, rf.params).transpose();
      ens.theta_star.row(b).head(p) = rf.params.beta.transpose();
      ens.theta_star(b, p) = rf.params.delta;

      if (cfg.B2 > 0) {
        const Eigen::VectorXd lam_b = (data.X * rf.params.beta).array().exp();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
        for (int b2 = 0; b2 < cfg.B2; ++b2) {
          RngStream gi(cfg.seed, static_cast<std::uint64_t>(b) + 1,
                       1000 + static_cast<std::uint64_t>(b2));
          AreaDataset rep2 = data;
          Eigen::VectorXd mu2(D);
          for (int d = 0; d < D; ++d) {
            const double w = gi.gamma(rf.params.delta, rf.params.delta);
            mu2[d] = lam_b[d] * w;
            rep2.y[d] = static_cast<double>(gi.poisson(mu2[d]));
          }
          const AreaFit rf2 = refit_area(rep2, rf.params);
          if (!rf2.converged) throw ReplicateFitFailure("second-stage refit did not converge");
          const Eigen::VectorXd psi2 = area_bp(rep2, rf2.params);
          acc += (psi2 - mu2).cwiseAbs2();
        }
        ens.inner_sq.row(b) = (acc / static_cast<double>(cfg.B2)).transpose();
      }
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });

  finalize_ensemble(ens, ok, cfg);

  // Closed-form scales per replicate and at the parent fit; the plug-in kind
  // reuses the ensemble covariance of theta* for every replicate.
  const int B = static_cast<int>(ens.theta_star.rows());
  ens.sigma_g1.resize(B, D);
  ens.sigma_plugin.resize(B, D);
  for (int b = 0; b < B; ++b) {
    AreaParams pb{ens.theta_star.row(b).head(p).transpose(), ens.theta_star(b, p)};
    ens.sigma_g1.row(b) = area_g1(data, pb).cwiseSqrt().transpose();
    ens.sigma_plugin.row(b) = area_mse_plugin(data, pb, ens.vcov).cwiseSqrt().transpose();
  }
  ens.center_g1 = area_g1(data, fit.params).cwiseSqrt();
  ens.center_plugin = area_mse_plugin(data, fit.params, ens.vcov).cwiseSqrt();
  return ens;
}

BootstrapEnsemble bootstrap_unit(const UnitDataset& data, const UnitFit& fit,
                                 const BootstrapConfig& cfg, const AgqConfig& agq,
                                 bool use_estimated_N) {
  check_config(cfg);
  if (!fit.converged)
    throw ValidationError("bootstrap_unit: parent fit did not converge");
  const int D = data.D();
  const int L = data.L();
  const int p = data.p();
  const int B1 = cfg.B1;
  const Eigen::VectorXd eta_hat = data.Z * fit.params.beta;
  const double delta_hat = fit.params.delta;
  const Eigen::MatrixXd nmat =
      use_estimated_N ? direct_estimators(data).Nhat_class : data.Npop;

  BootstrapEnsemble ens;
  ens.model = ModelKind::Unit;
  ens.requested = B1;
  ens.inner = cfg.B2;
  ens.denom = nmat.rowwise().sum();
  ens.mu_star.resize(B1, D);
  ens.mu_hat.resize(B1, D);
  ens.theta_star.resize(B1, p + 1);
  if (cfg.B2 > 0) ens.inner_sq.resize(B1, D);
  std::vector<char> ok(B1, 0);

  // Generates one bootstrap world from (eta, delta): class-level binomial
  // responses for the sample and the realized mixed parameter as truth.
  const auto generate = [&](RngStream& g, const Eigen::VectorXd& eta, double delta,
                            Eigen::MatrixXd& ysum, Eigen::VectorXd& mu) {
    for (int d = 0; d < D; ++d) {
      const double u = g.normal();
      double total = 0.0;
      for (int l = 0; l < L; ++l) {
        const double pl = logistic(eta[l] + delta * u);
        const auto m = static_cast<std::int64_t>(std::llround(data.msum(d, l)));
        ysum(d, l) = (m > 0) ? static_cast<double>(g.binomial(m, pl)) : 0.0;
        total += nmat(d, l) * pl;
      }
      mu[d] = total;
    }
  };

  parallel_for(static_cast<std::size_t>(B1), cfg.threads, [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    try {
      RngStream g(cfg.seed, static_cast<std::uint64_t>(b) + 1, 1);
      UnitDataset rep = data;  // class counts change; design stays fixed
      Eigen::VectorXd mu(D);
      generate(g, eta_hat, delta_hat, rep.ysum, mu);
      ens.mu_star.row(b) = mu.transpose();
      const UnitFit rf = refit_unit(rep, fit.params, agq);
      if (!rf.converged) throw ReplicateFitFailure("replicate refit did not converge");
      const UnitEbp ebp = unit_ebp_quadrature(rep, rf.params, agq);
      ens.mu_hat.row(b) = (nmat.array() * ebp.r.array()).rowwise().sum().transpose();
      ens.theta_star.row(b).head(p) = rf.params.beta.transpose();
      ens.theta_star(b, p) = rf.params.delta;

      if (cfg.B2 > 0) {
        const Eigen::VectorXd eta_b = data.Z * rf.params.beta;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
        for (int b2 = 0; b2 < cfg.B2; ++b2) {
          RngStream gi(cfg.seed, static_cast<std::uint64_t>(b) + 1,
                       1000 + static_cast<std::uint64_t>(b2));
          UnitDataset rep2 = data;
          Eigen::VectorXd mu2(D);
          generate(gi, eta_b, rf.params.delta, rep2.ysum, mu2);
          const UnitFit rf2 = refit_unit(rep2, rf.params, agq);
          if (!rf2.converged) throw ReplicateFitFailure("second-stage refit did not converge");
          const UnitEbp ebp2 = unit_ebp_quadrature(rep2, rf2.params, agq);
          const Eigen::VectorXd mu2_hat =
              (nmat.array() * ebp2.r.array()).rowwise().sum();
          acc += (mu2_hat - mu2).cwiseAbs2();
        }
        ens.inner_sq.row(b) = (acc / static_cast<double>(cfg.B2)).transpose();
      }
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });

  finalize_ensemble(ens, ok, cfg);
  return ens;
}

MseResult mse_bootstrap(const BootstrapEnsemble& ensemble, bool with_bc) {
  const int B = static_cast<int>(ensemble.mu_star.rows());
  if (B == 0) throw ValidationError("mse_bootstrap: empty ensemble");
  MseResult out;
  out.mse_b = (ensemble.mu_hat - ensemble.mu_star).cwiseAbs2().colwise().mean();
  if (!with_bc) return out;
  if (ensemble.inner_sq.size() == 0)
    throw MissingSecondStage("mse_bootstrap: ensemble was built with B2 = 0");
  const Eigen::VectorXd inner = ensemble.inner_sq.colwise().mean();
  out.mse_bc.resize(out.mse_b.size());
  out.bc_floored.assign(static_cast<std::size_t>(out.mse_b.size()), 0);
  for (int d = 0; d < out.mse_b.size(); ++d) {
    const double v = 2.0 * out.mse_b[d] - inner[d];
    if (v < 0.0) {
      out.mse_bc[d] = 0.0;
      out.bc_floored[static_cast<std::size_t>(d)] = 1;
    } else {
      out.mse_bc[d] = v;
    }
  }
  return out;
}

void attach_mse(PredictionSet& predictions, const BootstrapEnsemble& ensemble) {
  if (ensemble.center_plugin.size() > 0)
    predictions.mse_plugin = ensemble.center_plugin.cwiseAbs2();
  const MseResult mse = mse_bootstrap(ensemble, ensemble.inner > 0);
  predictions.mse_b = mse.mse_b;
  if (mse.mse_bc.size() > 0) predictions.mse_bc = mse.mse_bc;
}

SimultaneousResult sci(const BootstrapEnsemble& ensemble, const PredictionSet& predictions,
                       const BootstrapConfig& cfg) {
  check_config(cfg);
  const int B = static_cast<int>(ensemble.mu_star.rows());
  const int D = static_cast<int>(ensemble.mu_star.cols());
  if (B == 0) throw ValidationError("sci: empty ensemble");
  if (predictions.mu.size() != D || predictions.denom.size() != D)
    throw DimensionMismatch("sci: predictions do not match the ensemble");

  Eigen::MatrixXd sigma_star(B, D);
  Eigen::VectorXd sigma_center(D);
  switch (cfg.sigma_kind) {
    case SigmaKind::G1:
      if (ensemble.sigma_g1.size() == 0)
        throw ValidationError("sci: no closed-form scales for this model; use a bootstrap kind");
      sigma_star = ensemble.sigma_g1;
      sigma_center = ensemble.center_g1;
      break;
    case SigmaKind::MsePlugin:
      if (ensemble.sigma_plugin.size() == 0)
        throw ValidationError("sci: no plug-in scales for this model; use a bootstrap kind");
      sigma_star = ensemble.sigma_plugin;
      sigma_center = ensemble.center_plugin;
      break;
    case SigmaKind::MseBoot: {
      const MseResult mse = mse_bootstrap(ensemble, false);
      sigma_center = mse.mse_b.cwiseSqrt();
      sigma_star = sigma_center.transpose().replicate(B, 1);
      break;
    }
    case SigmaKind::MseBootBC: {
      const MseResult mse = mse_bootstrap(ensemble, true);
      sigma_center = bc_variances(mse).cwiseSqrt();
      sigma_star = sigma_center.transpose().replicate(B, 1);
      break;
    }
  }
  if (!(sigma_star.array() > 0.0).all() || !(sigma_center.array() > 0.0).all())
    throw ZeroSigma("sci: nonpositive scale encountered");

  const Eigen::MatrixXd ad = (ensemble.mu_hat - ensemble.mu_star).cwiseAbs();
  const Eigen::MatrixXd ratio = ad.cwiseQuotient(sigma_star);

  SimultaneousResult out;
  out.sigma_kind = cfg.sigma_kind;
  out.sigma = sigma_center;
  out.vcov = ensemble.vcov;

  const Eigen::VectorXd smax = ratio.rowwise().maxCoeff();
  out.q_sci = order_statistic({smax.data(), smax.data() + B}, cfg.alpha);
  out.q_ici.resize(D);
  for (int d = 0; d < D; ++d) {
    const auto col = ratio.col(d);
    out.q_ici[d] = order_statistic({col.data(), col.data() + B}, cfg.alpha);
  }

  const Eigen::VectorXd half_sci = out.q_sci * sigma_center;
  const Eigen::VectorXd half_ici = out.q_ici.cwiseProduct(sigma_center);
  out.sci_lo = predictions.mu - half_sci;
  out.sci_hi = predictions.mu + half_sci;
  out.ici_lo = predictions.mu - half_ici;
  out.ici_hi = predictions.mu + half_ici;
  out.sci_lo_prop = out.sci_lo.cwiseQuotient(predictions.denom);
  out.sci_hi_prop = out.sci_hi.cwiseQuotient(predictions.denom);
  out.ici_lo_prop = out.ici_lo.cwiseQuotient(predictions.denom);
  out.ici_hi_prop = out.ici_hi.cwiseQuotient(predictions.denom);

  if (cfg.raw_statistic) {
    const Eigen::VectorXd rmax = ad.rowwise().maxCoeff();
    out.q_raw = order_statistic({rmax.data(), rmax.data() + B}, cfg.alpha);
  }
  if (cfg.bonferroni) {
    out.q_bonf.resize(D);
    for (int d = 0; d < D; ++d) {
      const auto col = ratio.col(d);
      out.q_bonf[d] =
          order_statistic({col.data(), col.data() + B}, cfg.alpha / static_cast<double>(D));
    }
  }
  return out;
}

MtpResult mtp_from_ensemble(const BootstrapEnsemble& ensemble,
                            const PredictionSet& predictions,
                            const Eigen::MatrixXd& contrast, const Eigen::VectorXd& target,
                            const BootstrapConfig& cfg) {
  check_config(cfg);
  const int B = static_cast<int>(ensemble.mu_star.rows());
  const int D = static_cast<int>(ensemble.mu_star.cols());
  const int Dp = static_cast<int>(contrast.rows());
  if (contrast.cols() != D)
    throw DimensionMismatch("mtp: contrast has " + std::to_string(contrast.cols()) +
                            " columns for " + std::to_string(D) + " areas");
  if (Dp > D) throw DimensionMismatch("mtp: more contrasts than areas");
  if (target.size() != Dp)
    throw DimensionMismatch("mtp: target length does not match the contrast rows");
  if (predictions.prop.size() != D)
    throw DimensionMismatch("mtp: predictions do not match the ensemble");

  // Contrasts act on the proportion scale so that targets are comparable
  // across areas of different size.
  const Eigen::VectorXd inv_denom = ensemble.denom.cwiseInverse();
  const Eigen::MatrixXd zeta_hat = ensemble.mu_hat * inv_denom.asDiagonal();
  const Eigen::MatrixXd zeta_star = ensemble.mu_star * inv_denom.asDiagonal();
  const Eigen::MatrixXd dev = (zeta_hat - zeta_star) * contrast.transpose();  // B x D'

  MtpResult out;
  out.contrast = contrast;
  out.target = target;
  out.sigma.resize(Dp);
  const Eigen::VectorXd mean = dev.colwise().mean();
  for (int i = 0; i < Dp; ++i) {
    const double ss = (dev.col(i).array() - mean[i]).square().sum();
    out.sigma[i] = std::sqrt(ss / static_cast<double>(B - 1));
  }
  if (!(out.sigma.array() > 0.0).all())
    throw ZeroSigma("mtp: a contrast has zero bootstrap variability");

  const Eigen::MatrixXd snull = dev.cwiseAbs().array().rowwise() / out.sigma.transpose().array();
  const Eigen::VectorXd smax = snull.rowwise().maxCoeff();
  out.q_crit = order_statistic({smax.data(), smax.data() + B}, cfg.alpha);

  out.t_stat = (contrast * predictions.prop - target).cwiseQuotient(out.sigma);
  out.t_max = out.t_stat.cwiseAbs().maxCoeff();
  out.reject = out.t_max >= out.q_crit;
  return out;
}

MtpResult mtp(const AreaDataset& data, const AreaFit& fit, const Eigen::MatrixXd& contrast,
              const Eigen::VectorXd& target, const BootstrapConfig& cfg) {
  const BootstrapEnsemble ens = bootstrap_area(data, fit, cfg);
  const PredictionSet pred = predict_area(data, fit.params);
  return mtp_from_ensemble(ens, pred, contrast, target, cfg);
}

MtpResult mtp(const UnitDataset& data, const UnitFit& fit, const Eigen::MatrixXd& contrast,
              const Eigen::VectorXd& target, const BootstrapConfig& cfg,
              const AgqConfig& agq) {
  const BootstrapEnsemble ens = bootstrap_unit(data, fit, cfg, agq);
  const PredictionSet pred = predict_unit(data, fit.params, agq);
  return mtp_from_ensemble(ens, pred, contrast, target, cfg);
}

Eigen::MatrixXd paired_difference_contrast(int n_params) {
  if (n_params <= 0 || n_params % 2 != 0)
    throw OddLength("paired_difference_contrast: parameter length must be a positive even number");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n_params / 2, n_params);
  for (int i = 0; i < n_params / 2; ++i) {
    c(i, 2 * i) = 1.0;
    c(i, 2 * i + 1) = -1.0;
  }
  return c;
}

}  // namespace sae
