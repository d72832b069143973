#include "sae/unit_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "sae/errors.hpp"
#include "sae/linalg.hpp"
#include "sae/rng.hpp"
#include "sae/special.hpp"

namespace sae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_config(const AgqConfig& cfg) {
  if (cfg.q < 3) throw ValidationError("agq config: need at least 3 quadrature nodes");
  if (cfg.mc_draws < 100)
    throw ValidationError("agq config: need at least 100 Monte Carlo draws");
}

void check_params(const UnitDataset& d, const UnitParams& params) {
  if (params.beta.size() != d.p())
    throw DimensionMismatch("unit model: beta size does not match the design");
  if (!(params.delta >= 0.0))
    throw DomainError("unit model: delta must be nonnegative");
}

double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Per-area pieces of the conditional log-likelihood, aggregated over
// covariate classes: with eta_l = z_l' beta,
//   k_d(u) = delta y_d. u - sum_l msum_dl log(1 + exp(eta_l + delta u))
// and the full integrand is exp(c_d + sum_l ysum_dl eta_l + k_d(u) - u^2/2)
// where c_d collects the binomial coefficients.
struct AreaKernel {
  const Eigen::VectorXd* eta;   // L linear predictors
  Eigen::VectorXd msum;         // L class trial counts in this area
  double ysum_total = 0.0;      // y_d.
  double delta = 0.0;

  double value(double u) const {
    const double du = delta * u;
    double acc = delta * ysum_total * u;
    for (int l = 0; l < eta->size(); ++l) {
      if (msum[l] > 0.0) acc -= msum[l] * log1p_exp((*eta)[l] + du);
    }
    return acc;
  }
  // First and second derivatives of k_d(u) - u^2/2.
  void derivs(double u, double& d1, double& d2) const {
    const double du = delta * u;
    double sp = 0.0, spq = 0.0;
    for (int l = 0; l < eta->size(); ++l) {
      if (msum[l] > 0.0) {
        const double p = logistic((*eta)[l] + du);
        sp += msum[l] * p;
        spq += msum[l] * p * (1.0 - p);
      }
    }
    d1 = delta * (ysum_total - sp) - u;
    d2 = -delta * delta * spq - 1.0;
  }
};

// Mode of k_d(u) - u^2/2.  The objective is strictly concave (second
// derivative <= -1), so its gradient is strictly decreasing and the mode is
// the unique root of the gradient: locate it by bracketed Newton with a
// bisection fallback.  Root-finding on the analytic gradient avoids the
// plateau the objective value hits near the mode, where improvements of
// order d1^2/|d2| round to zero long before the gradient tolerance is met.
void area_mode(const AreaKernel& k, double& u_hat, double& sigma_hat) {
  double u = 0.0;
  double d1 = 0.0, d2 = -1.0;
  k.derivs(u, d1, d2);
  double lo = 0.0, hi = 0.0;
  if (d1 > 0.0) {  // mode is to the right
    lo = 0.0;
    for (double w = 1.0;; w *= 2.0) {
      hi = w;
      double g, h;
      k.derivs(hi, g, h);
      if (g <= 0.0) break;
      lo = hi;
      if (w > 1e12)
        throw ModeSearchFailure("unit model: conditional mode bracket diverged");
    }
  } else if (d1 < 0.0) {
    hi = 0.0;
    for (double w = 1.0;; w *= 2.0) {
      lo = -w;
      double g, h;
      k.derivs(lo, g, h);
      if (g >= 0.0) break;
      hi = lo;
      if (w > 1e12)
        throw ModeSearchFailure("unit model: conditional mode bracket diverged");
    }
  }
  for (int it = 0; it < 200; ++it) {
    if (std::abs(d1) <= 1e-10 * std::max(1.0, std::abs(u))) break;
    const double width = hi - lo;
    if (width <= 8.0 * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, std::abs(u)))
      break;  // bracket exhausted: gradient is as small as representable
    double uc = u - d1 / d2;
    if (!(uc > lo && uc < hi)) uc = 0.5 * (lo + hi);
    double g, h;
    k.derivs(uc, g, h);
    if (g > 0.0)
      lo = uc;
    else
      hi = uc;
    u = uc;
    d1 = g;
    d2 = h;
  }
  if (!std::isfinite(d1) || std::abs(d1) > 1e-6)
    throw ModeSearchFailure("unit model: conditional mode gradient " +
                            std::to_string(d1));
  u_hat = u;
  sigma_hat = 1.0 / std::sqrt(-d2);
}

struct AreaContext {
  AreaKernel kernel;
  Eigen::VectorXd ysum;  // L
  double binom_const = 0.0;
  double N = 0.0;
};

// Shared setup for the likelihood, score, and predictor paths.
std::vector<AreaContext> build_contexts(const UnitDataset& d, const UnitParams& params,
                                        const Eigen::VectorXd& eta) {
  std::vector<AreaContext> ctx(static_cast<std::size_t>(d.D()));
  for (int a = 0; a < d.D(); ++a) {
    AreaContext& c = ctx[static_cast<std::size_t>(a)];
    c.kernel.eta = &eta;
    c.kernel.msum = d.msum.row(a).transpose();
    c.kernel.ysum_total = d.ysum.row(a).sum();
    c.kernel.delta = params.delta;
    c.ysum = d.ysum.row(a).transpose();
    c.N = d.Npop.row(a).sum();
  }
  for (int j = 0; j < d.n(); ++j) {
    const int a = d.unit_area[static_cast<std::size_t>(j)];
    const double m = d.unit_m[static_cast<std::size_t>(j)];
    const double y = d.unit_y[static_cast<std::size_t>(j)];
    // log C(m, y); zero in the Bernoulli case.
    ctx[static_cast<std::size_t>(a)].binom_const +=
        log_gamma(m + 1.0) - log_gamma(y + 1.0) - log_gamma(m - y + 1.0);
  }
  return ctx;
}

}  // namespace

double logit_loglik_agq(const UnitDataset& d, const UnitParams& params,
                        const AgqConfig& cfg) {
  check_config(cfg);
  check_params(d, params);
  const GaussHermiteRule rule = gauss_hermite(cfg.q);
  const Eigen::VectorXd eta = d.Z * params.beta;
  const std::vector<AreaContext> ctx = build_contexts(d, params, eta);

  double total = 0.0;
  std::vector<double> terms(static_cast<std::size_t>(cfg.q));
  for (const AreaContext& c : ctx) {
    double u_hat = 0.0, sigma_hat = 1.0;
    area_mode(c.kernel, u_hat, sigma_hat);
    for (int r = 0; r < cfg.q; ++r) {
      const double t = u_hat + sigma_hat * std::numbers::sqrt2 * rule.nodes[r];
      terms[static_cast<std::size_t>(r)] =
          std::log(rule.weights[r]) + rule.nodes[r] * rule.nodes[r] +
          c.kernel.value(t) - 0.5 * t * t;
    }
    const double lse = log_sum_exp(terms);
    const double lf = -0.5 * kLog2Pi + 0.5 * std::numbers::ln2 +
                      std::log(sigma_hat) + c.binom_const + c.ysum.dot(eta) + lse;
    if (!std::isfinite(lf))
      throw NonFiniteResult("logit_loglik_agq: non-finite area contribution");
    total += lf;
  }
  return total;
}

Eigen::VectorXd logit_score_agq(const UnitDataset& d, const UnitParams& params,
                                const AgqConfig& cfg) {
  check_config(cfg);
  check_params(d, params);
  const int p = static_cast<int>(d.p());
  const GaussHermiteRule rule = gauss_hermite(cfg.q);
  const Eigen::VectorXd eta = d.Z * params.beta;
  const std::vector<AreaContext> ctx = build_contexts(d, params, eta);

  Eigen::VectorXd score = Eigen::VectorXd::Zero(p + 1);
  std::vector<double> terms(static_cast<std::size_t>(cfg.q));
  std::vector<double> nodes(static_cast<std::size_t>(cfg.q));
  for (const AreaContext& c : ctx) {
    double u_hat = 0.0, sigma_hat = 1.0;
    area_mode(c.kernel, u_hat, sigma_hat);
    for (int r = 0; r < cfg.q; ++r) {
      const double t = u_hat + sigma_hat * std::numbers::sqrt2 * rule.nodes[r];
      nodes[static_cast<std::size_t>(r)] = t;
      terms[static_cast<std::size_t>(r)] =
          std::log(rule.weights[r]) + rule.nodes[r] * rule.nodes[r] +
          c.kernel.value(t) - 0.5 * t * t;
    }
    const double lse = log_sum_exp(terms);
    // Posterior-weighted conditional score at the nodes.
    for (int r = 0; r < cfg.q; ++r) {
      const double w = std::exp(terms[static_cast<std::size_t>(r)] - lse);
      const double t = nodes[static_cast<std::size_t>(r)];
      const double du = params.delta * t;
      double sp = 0.0;
      Eigen::VectorXd sb = Eigen::VectorXd::Zero(p);
      for (int l = 0; l < d.L(); ++l) {
        const double mdl = c.kernel.msum[l];
        const double pdl = logistic(eta[l] + du);
        if (mdl > 0.0 || c.ysum[l] != 0.0)
          sb += (c.ysum[l] - mdl * pdl) * d.Z.row(l).transpose();
        sp += mdl * pdl;
      }
      score.head(p) += w * sb;
      score(p) += w * t * (c.kernel.ysum_total - sp);
    }
  }
  return score;
}

Eigen::VectorXd pooled_logistic_fit(const UnitDataset& d, int max_iter, double tol) {
  const int p = static_cast<int>(d.p());
  const int L = static_cast<int>(d.L());
  const int D = static_cast<int>(d.D());
  // Aggregate successes and trials per class across areas.
  Eigen::VectorXd ysum = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd msum = Eigen::VectorXd::Zero(L);
  for (int a = 0; a < D; ++a) {
    ysum += d.ysum.row(a).transpose();
    msum += d.msum.row(a).transpose();
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  // Intercept start at the empirical logit of the overall rate.
  const double rate =
      std::min(1.0 - 1e-6, std::max(1e-6, ysum.sum() / std::max(1.0, msum.sum())));
  beta(0) = std::log(rate / (1.0 - rate));

  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    for (int l = 0; l < L; ++l) {
      if (msum[l] <= 0.0) continue;
      const double e = d.Z.row(l) * beta;
      const double pl = logistic(e);
      const Eigen::VectorXd zl = d.Z.row(l).transpose();
      g += (ysum[l] - msum[l] * pl) * zl;
      H += msum[l] * std::max(pl * (1.0 - pl), 1e-10) * (zl * zl.transpose());
    }
    const Eigen::VectorXd step = cholesky_solve(H, g);
    beta += step;
    if (step.cwiseAbs().maxCoeff() <= tol * std::max(1.0, beta.cwiseAbs().maxCoeff()))
      return beta;
  }
  return beta;
}

UnitFit fit_unit_model(const UnitDataset& d, const AgqConfig& cfg,
                       const UnitFitOptions& opts) {
  check_config(cfg);
  if (d.D() < 2)
    throw ValidationError("fit_unit_model: need at least 2 areas");
  const int p = static_cast<int>(d.p());

  UnitParams th;
  if (opts.warm_start) {
    th = *opts.warm_start;
    if (th.beta.size() != p)
      throw DimensionMismatch("fit_unit_model: warm start beta size");
    if (!(th.delta >= 0.0))
      throw DomainError("fit_unit_model: warm start delta must be nonnegative");
  } else {
    th.beta = pooled_logistic_fit(d);  // throws SingularMatrix if rank deficient
    th.delta = 0.5;
  }

  const int n = p + 1;
  auto pack = [&](const UnitParams& t) {
    Eigen::VectorXd x(n);
    x.head(p) = t.beta;
    x(p) = t.delta;
    return x;
  };
  auto unpack = [&](const Eigen::VectorXd& x) {
    UnitParams t;
    t.beta = x.head(p);
    t.delta = std::max(0.0, x(p));
    return t;
  };

  Eigen::VectorXd x = pack(th);
  double f = logit_loglik_agq(d, unpack(x), cfg);
  Eigen::VectorXd g = logit_score_agq(d, unpack(x), cfg);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);  // inverse-Hessian proxy

  UnitFit fit;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() <= opts.score_tol) break;
    Eigen::VectorXd dir = H * g;
    if (dir.dot(g) <= 0.0) {  // lost positive definiteness: reset
      H.setIdentity();
      dir = g;
    }
    // Backtracking ascent with projection of delta onto [0, inf).
    double steplen = 1.0;
    Eigen::VectorXd xn = x;
    double fn = f;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = x + steplen * dir;
      cand(p) = std::max(0.0, cand(p));
      const double fc = logit_loglik_agq(d, unpack(cand), cfg);
      if (std::isfinite(fc) &&
          fc >= f + 1e-4 * g.dot(cand - x) - 1e-14 * std::abs(f)) {
        xn = cand;
        fn = fc;
        accepted = true;
        break;
      }
      steplen *= 0.5;
    }
    if (!accepted) break;  // no ascent direction left: report the best point
    const Eigen::VectorXd gn = logit_score_agq(d, unpack(xn), cfg);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = g - gn;  // = -(grad f_n - grad f) for ascent
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      // BFGS update of the inverse Hessian proxy (ascent convention).
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    x = xn;
    f = fn;
    g = gn;
  }

  fit.params = unpack(x);
  fit.loglik = f;
  fit.iterations = it;
  fit.score_max = g.cwiseAbs().maxCoeff();
  // At the delta = 0 boundary the delta-score vanishes by symmetry, so the
  // plain max-norm criterion covers the boundary case as well.
  fit.converged = fit.score_max <= opts.score_tol;
  if (!fit.converged)
    throw NonConvergence("fit_unit_model: score tolerance not reached (max |score| = " +
                         std::to_string(fit.score_max) + ")");
  return fit;
}

namespace {

UnitEbp ebp_shell(const UnitDataset& d) {
  UnitEbp e;
  e.r.resize(d.D(), d.L());
  e.mu.resize(d.D());
  e.prop.resize(d.D());
  e.u.resize(d.D());
  return e;
}

void ebp_finalize(const UnitDataset& d, int a, const Eigen::VectorXd& r_row,
                  double u_mean, UnitEbp& out) {
  out.r.row(a) = r_row.transpose();
  out.u(a) = u_mean;
  double mu = 0.0;
  for (int l = 0; l < d.L(); ++l) mu += d.Npop(a, l) * r_row[l];
  out.mu(a) = mu;
  out.prop(a) = mu / d.Npop.row(a).sum();
}

}  // namespace

UnitEbp unit_ebp(const UnitDataset& d, const UnitParams& params, const AgqConfig& cfg,
                 std::uint64_t seed) {
  check_config(cfg);
  check_params(d, params);
  const Eigen::VectorXd eta = d.Z * params.beta;
  const std::vector<AreaContext> ctx = build_contexts(d, params, eta);
  UnitEbp out = ebp_shell(d);

  const int pairs = (cfg.mc_draws + 1) / 2;
  std::vector<double> us(static_cast<std::size_t>(2 * pairs));
  std::vector<double> logw(static_cast<std::size_t>(2 * pairs));
  for (int a = 0; a < d.D(); ++a) {
    const AreaContext& c = ctx[static_cast<std::size_t>(a)];
    RngStream rng(seed, static_cast<std::uint64_t>(a), 5);
    for (int s = 0; s < pairs; ++s) {
      const double u = rng.normal();
      us[static_cast<std::size_t>(2 * s)] = u;
      us[static_cast<std::size_t>(2 * s + 1)] = -u;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < us.size(); ++s) {
      logw[s] = c.kernel.value(us[s]);
      mx = std::max(mx, logw[s]);
    }
    if (!std::isfinite(mx))
      throw DegenerateWeights("unit_ebp: all Monte Carlo weights underflow in area " +
                              d.area[static_cast<std::size_t>(a)]);
    double wsum = 0.0, usum = 0.0;
    Eigen::VectorXd racc = Eigen::VectorXd::Zero(d.L());
    for (std::size_t s = 0; s < us.size(); ++s) {
      const double w = std::exp(logw[s] - mx);
      wsum += w;
      usum += w * us[s];
      const double du = params.delta * us[s];
      for (int l = 0; l < d.L(); ++l) racc[l] += w * logistic(eta[l] + du);
    }
    ebp_finalize(d, a, racc / wsum, usum / wsum, out);
  }
  return out;
}

UnitEbp unit_ebp_quadrature(const UnitDataset& d, const UnitParams& params,
                            const AgqConfig& cfg) {
  check_config(cfg);
  check_params(d, params);
  const GaussHermiteRule rule = gauss_hermite(cfg.q);
  const Eigen::VectorXd eta = d.Z * params.beta;
  const std::vector<AreaContext> ctx = build_contexts(d, params, eta);
  UnitEbp out = ebp_shell(d);

  std::vector<double> terms(static_cast<std::size_t>(cfg.q));
  for (int a = 0; a < d.D(); ++a) {
    const AreaContext& c = ctx[static_cast<std::size_t>(a)];
    double u_hat = 0.0, sigma_hat = 1.0;
    area_mode(c.kernel, u_hat, sigma_hat);
    double mx = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.q; ++r) {
      const double t = u_hat + sigma_hat * std::numbers::sqrt2 * rule.nodes[r];
      terms[static_cast<std::size_t>(r)] =
          std::log(rule.weights[r]) + rule.nodes[r] * rule.nodes[r] +
          c.kernel.value(t) - 0.5 * t * t;
      mx = std::max(mx, terms[static_cast<std::size_t>(r)]);
    }
    double wsum = 0.0, usum = 0.0;
    Eigen::VectorXd racc = Eigen::VectorXd::Zero(d.L());
    for (int r = 0; r < cfg.q; ++r) {
      const double t = u_hat + sigma_hat * std::numbers::sqrt2 * rule.nodes[r];
      const double w = std::exp(terms[static_cast<std::size_t>(r)] - mx);
      wsum += w;
      usum += w * t;
      const double du = params.delta * t;
      for (int l = 0; l < d.L(); ++l) racc[l] += w * logistic(eta[l] + du);
    }
    ebp_finalize(d, a, racc / wsum, usum / wsum, out);
  }
  return out;
}

}  // namespace sae
