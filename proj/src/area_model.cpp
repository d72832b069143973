#include "sae/area_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sae/errors.hpp"
#include "sae/linalg.hpp"
#include "sae/special.hpp"

namespace sae {

namespace {

constexpr double kAlphaMin = 1e-6;
constexpr double kAlphaMax = 1e3;
constexpr double kDeltaCap = 1e6;
constexpr double kEtaCap = 690.0;  // exp() overflow guard
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct LinPred {
  Eigen::VectorXd eta, lam;
  bool ok;
};

LinPred linpred(const AreaDataset& d, const Eigen::VectorXd& beta) {
  LinPred lp;
  lp.eta = d.X * beta;
  lp.ok = (lp.eta.array().abs() < kEtaCap).all() && lp.eta.allFinite();
  if (lp.ok) lp.lam = lp.eta.array().exp();
  return lp;
}

long long count_of(double y) { return static_cast<long long>(std::llround(y)); }

// Log-likelihood given precomputed linear predictors; -inf when predictors
// overflow (lets line searches reject wild steps without throwing).
double loglik_impl(const AreaDataset& d, const LinPred& lp, double alpha) {
  if (!lp.ok) return kNegInf;
  const double log_alpha = std::log(alpha);
  const double delta = 1.0 / alpha;
  double ll = 0.0;
  for (int i = 0; i < d.D(); ++i) {
    const long long y = count_of(d.y[i]);
    const double yd = d.y[i];
    ll += nb_sum_log(y, alpha) + yd * lp.eta[i] -
          (yd + delta) * log1p_exp(log_alpha + lp.eta[i]);
  }
  return ll;
}

Eigen::VectorXd score_impl(const AreaDataset& d, const LinPred& lp, double alpha) {
  const int p = d.p();
  const double log_alpha = std::log(alpha);
  const double delta = 1.0 / alpha;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p + 1);
  for (int i = 0; i < d.D(); ++i) {
    const double lam = lp.lam[i];
    const double yd = d.y[i];
    const double denom = 1.0 + alpha * lam;
    s.head(p) += d.X.row(i).transpose() * ((yd - lam) / denom);
    s[p] += nb_sum_score(count_of(yd), alpha) +
            log1p_exp(log_alpha + lp.eta[i]) / (alpha * alpha) -
            (yd + delta) * lam / denom;
  }
  return s;
}

Eigen::MatrixXd observed_info_impl(const AreaDataset& d, const LinPred& lp, double alpha) {
  const int p = d.p();
  const double log_alpha = std::log(alpha);
  const double delta = 1.0 / alpha;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (int i = 0; i < d.D(); ++i) {
    const double lam = lp.lam[i];
    const double yd = d.y[i];
    const double denom = 1.0 + alpha * lam;
    const double denom2 = denom * denom;
    const Eigen::VectorXd x = d.X.row(i).transpose();
    J.topLeftCorner(p, p) += (1.0 + alpha * yd) * lam / denom2 * (x * x.transpose());
    const double cross = lam * (yd - lam) / denom2;
    J.block(0, p, p, 1) += cross * x;
    const double lterm = log1p_exp(log_alpha + lp.eta[i]);
    J(p, p) += nb_sum_info(count_of(yd), alpha) + 2.0 * lterm / (alpha * alpha * alpha) -
               2.0 * lam / (denom * alpha * alpha) -
               (yd + delta) * lam * lam / denom2;
  }
  J.block(p, 0, 1, p) = J.block(0, p, p, 1).transpose();
  return J;
}

// E[ sum_{j=1}^{y-1} (j/(1+alpha j))^2 ] = sum_{j>=1} (j/(1+alpha j))^2 P(y > j),
// accumulated with the NB pmf recurrence in log space.
double expected_inner_info(double lam, double alpha) {
  const double delta = 1.0 / alpha;
  const double lr = std::log(alpha * lam) - log1p_exp(std::log(alpha) + std::log(lam));
  // log p_0 = -delta log(1+alpha lam)
  double logp = -delta * log1p_exp(std::log(alpha) + std::log(lam));
  double cum = std::exp(logp);  // after j terms: P(y <= j)
  const double sd = std::sqrt(lam * (1.0 + alpha * lam));
  const double jstop = lam + 12.0 * sd + 50.0;
  double acc = 0.0;
  for (double j = 1.0; j <= 2e7; j += 1.0) {
    logp += std::log((j - 1.0 + delta) / j) + lr;  // log p_j
    cum += std::exp(logp);
    const double surv = std::max(0.0, 1.0 - cum);  // P(y > j)
    const double t = j / (1.0 + alpha * j);
    acc += t * t * surv;
    if (surv < 1e-15 && j > jstop) break;
  }
  return acc;
}

}  // namespace

double nb_loglik(const AreaDataset& d, const Eigen::VectorXd& beta, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw DomainError("nb_loglik: alpha must be positive");
  if (beta.size() != d.p()) throw DimensionMismatch("nb_loglik: beta size");
  const LinPred lp = linpred(d, beta);
  if (!lp.ok) throw NonFiniteResult("nb_loglik: linear predictor overflows");
  return loglik_impl(d, lp, alpha);
}

Eigen::VectorXd nb_score(const AreaDataset& d, const Eigen::VectorXd& beta, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw DomainError("nb_score: alpha must be positive");
  if (beta.size() != d.p()) throw DimensionMismatch("nb_score: beta size");
  const LinPred lp = linpred(d, beta);
  if (!lp.ok) throw NonFiniteResult("nb_score: linear predictor overflows");
  return score_impl(d, lp, alpha);
}

Eigen::MatrixXd nb_information(const AreaDataset& d, const Eigen::VectorXd& beta,
                               double alpha, InfoKind kind) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw DomainError("nb_information: alpha must be positive");
  if (beta.size() != d.p()) throw DimensionMismatch("nb_information: beta size");
  const LinPred lp = linpred(d, beta);
  if (!lp.ok) throw NonFiniteResult("nb_information: linear predictor overflows");
  if (kind == InfoKind::Observed) return observed_info_impl(d, lp, alpha);

  const int p = d.p();
  Eigen::MatrixXd I = Eigen::MatrixXd::Zero(p + 1, p + 1);
  const double a2 = alpha * alpha;
  for (int i = 0; i < d.D(); ++i) {
    const double lam = lp.lam[i];
    const double denom = 1.0 + alpha * lam;
    const Eigen::VectorXd x = d.X.row(i).transpose();
    // E[(1+alpha y)] = 1 + alpha lam collapses the beta block; the
    // beta/alpha block has expectation zero since E[y] = lam.
    I.topLeftCorner(p, p) += lam / denom * (x * x.transpose());
    const double lterm = log1p_exp(std::log(alpha) + lp.eta[i]);
    I(p, p) += expected_inner_info(lam, alpha) + 2.0 * lterm / (a2 * alpha) -
               2.0 * lam / (a2 * denom) -
               (lam + 1.0 / alpha) * lam * lam / (denom * denom);
  }
  return I;
}

double nb_logpmf(double j, double lambda, double delta) {
  if (!(lambda > 0.0) || !(delta > 0.0))
    throw DomainError("nb_logpmf: lambda and delta must be positive");
  if (j < 0.0 || j != std::floor(j)) throw DomainError("nb_logpmf: j must be a whole number");
  return std::lgamma(j + delta) - std::lgamma(delta) - std::lgamma(j + 1.0) +
         delta * std::log(delta / (delta + lambda)) + j * std::log(lambda / (delta + lambda));
}

// --------------------------------------------------------------------- fit

namespace {

struct InnerResult {
  Eigen::VectorXd beta;
  double loglik;   // full nb log-likelihood at (beta, alpha)
  int iterations;
};

// Maximize over beta at fixed alpha.  The beta-problem is strictly concave
// (both the Fisher and the observed weights are positive), so damped
// Newton/Fisher steps converge from any start.
InnerResult maximize_beta(const AreaDataset& d, double alpha, Eigen::VectorXd beta,
                          AreaAlgorithm algo, int max_iter = 80) {
  const int p = d.p();
  LinPred lp = linpred(d, beta);
  double ll = loglik_impl(d, lp, alpha);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (!lp.ok) break;
    Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < d.D(); ++i) {
      const double lam = lp.lam[i];
      const double denom = 1.0 + alpha * lam;
      const Eigen::VectorXd x = d.X.row(i).transpose();
      s += x * ((d.y[i] - lam) / denom);
      const double w = (algo == AreaAlgorithm::FisherScoring)
                           ? lam / denom
                           : (1.0 + alpha * d.y[i]) * lam / (denom * denom);
      M += w * (x * x.transpose());
    }
    if (s.array().abs().maxCoeff() <= 1e-10 * std::max(1.0, std::abs(ll))) break;
    Eigen::VectorXd step;
    try {
      step = cholesky_solve(M, s);
    } catch (const SingularMatrix&) {
      M.diagonal().array() += 1e-8 * M.diagonal().maxCoeff() + 1e-300;
      step = lu_solve(M, s);
    }
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const LinPred lpc = linpred(d, cand);
      const double llc = loglik_impl(d, lpc, alpha);
      if (llc > ll || (h == 0 && llc == ll)) {
        beta = cand;
        lp = lpc;
        const bool tiny = std::abs(llc - ll) <= 1e-14 * std::max(1.0, std::abs(ll));
        ll = llc;
        accepted = true;
        if (tiny) it = max_iter;  // no further progress possible
        break;
      }
    }
    if (!accepted) break;
  }
  return {beta, ll, it};
}

Eigen::VectorXd poisson_irls(const AreaDataset& d) {
  const int p = d.p();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = std::log(std::max(d.y.mean(), 0.1));
  for (int it = 0; it < 50; ++it) {
    const LinPred lp = linpred(d, beta);
    if (!lp.ok) break;
    Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < d.D(); ++i) {
      const Eigen::VectorXd x = d.X.row(i).transpose();
      s += x * (d.y[i] - lp.lam[i]);
      M += lp.lam[i] * (x * x.transpose());
    }
    if (s.array().abs().maxCoeff() <= 1e-9 * std::max(1.0, d.y.sum())) break;
    Eigen::VectorXd step;
    try {
      step = cholesky_solve(M, s);
    } catch (const SingularMatrix&) {
      throw SingularMatrix("fit_area_model: design matrix is rank deficient");
    }
    // plain damped update; the Poisson problem is concave as well
    double t = 1.0;
    const double ll0 = d.y.dot(lp.eta) - lp.lam.sum();
    for (int h = 0; h < 30; ++h, t *= 0.5) {
      const LinPred lpc = linpred(d, beta + t * step);
      if (lpc.ok && d.y.dot(lpc.eta) - lpc.lam.sum() >= ll0) {
        beta += t * step;
        break;
      }
    }
  }
  return beta;
}

struct PolishResult {
  Eigen::VectorXd beta;
  double alpha, loglik, score_max;
  int iterations;
  bool converged, at_lower_boundary;
};

// Joint Newton ascent on (beta, alpha) with the observed information,
// backtracking on the log-likelihood; alpha is clamped into its domain and a
// persistent pin at the lower bound is reported as a boundary optimum.
PolishResult polish(const AreaDataset& d, Eigen::VectorXd beta, double alpha,
                    const AreaFitOptions& opts, int budget) {
  const int p = d.p();
  LinPred lp = linpred(d, beta);
  double ll = loglik_impl(d, lp, alpha);
  PolishResult r{beta, alpha, ll, std::numeric_limits<double>::infinity(), 0, false, false};
  for (int it = 0; it < budget; ++it) {
    r.iterations = it + 1;
    if (!lp.ok) break;
    const Eigen::VectorXd s = score_impl(d, lp, alpha);
    const double smax_beta = s.head(p).array().abs().maxCoeff();
    r.score_max = s.array().abs().maxCoeff();

    // KKT at the small-alpha edge: no admissible ascent direction in alpha.
    if (!r.at_lower_boundary && alpha <= kAlphaMin * (1.0 + 1e-12) && s[p] < 0.0)
      r.at_lower_boundary = true;

    if (r.at_lower_boundary ? smax_beta <= opts.score_tol : r.score_max <= opts.score_tol) {
      r.converged = true;
      break;
    }

    if (r.at_lower_boundary) {
      // alpha is pinned: polish beta alone
      const InnerResult ir = maximize_beta(d, alpha, beta, AreaAlgorithm::NewtonRaphson, 40);
      beta = ir.beta;
      lp = linpred(d, beta);
      ll = ir.loglik;
      continue;
    }
    Eigen::MatrixXd J = observed_info_impl(d, lp, alpha);
    Eigen::VectorXd step;
    try {
      step = lu_solve(J, s);
    } catch (const SingularMatrix&) {
      J.diagonal().array() += 1e-8 * J.diagonal().array().abs().maxCoeff() + 1e-300;
      step = lu_solve(J, s);
    }
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      Eigen::VectorXd cb = beta + t * step.head(p);
      const double ca = std::clamp(alpha + t * step[p], kAlphaMin, kAlphaMax);
      const LinPred lpc = linpred(d, cb);
      const double llc = loglik_impl(d, lpc, ca);
      if (lpc.ok && llc >= ll - 1e-14 * std::max(1.0, std::abs(ll))) {
        beta = std::move(cb);
        alpha = ca;
        lp = lpc;
        ll = llc;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Newton direction failed entirely; try a pure alpha line move before
      // giving up (guards rare indefinite-Hessian corners).
      const double ca = std::clamp(alpha * (s[p] > 0 ? 1.1 : 0.9), kAlphaMin, kAlphaMax);
      const double llc = loglik_impl(d, lp, ca);
      if (llc > ll) {
        alpha = ca;
        ll = llc;
      } else {
        break;
      }
    }
  }
  // final score snapshot
  lp = linpred(d, beta);
  if (lp.ok) {
    const Eigen::VectorXd s = score_impl(d, lp, alpha);
    r.score_max = r.at_lower_boundary ? s.head(p).array().abs().maxCoeff()
                                      : s.array().abs().maxCoeff();
    r.converged = r.score_max <= opts.score_tol;
    r.loglik = loglik_impl(d, lp, alpha);
  }
  r.beta = beta;
  r.alpha = alpha;
  return r;
}

}  // namespace

AreaFit fit_area_model(const AreaDataset& d, const AreaFitOptions& opts) {
  const int p = d.p();
  if (d.D() <= p)
    throw ValidationError("fit_area_model: need more areas than regression parameters");

  AreaFit fit;
  int spent = 0;

  // Warm path: polish straight from the supplied parameters; fall back to
  // the full profile if that stalls.
  if (opts.warm_start) {
    Eigen::VectorXd b0 = opts.warm_start->beta;
    const double a0 = std::clamp(opts.warm_start->alpha(), kAlphaMin, kAlphaMax);
    if (b0.size() != p) throw DimensionMismatch("fit_area_model: warm start beta size");
    const PolishResult r = polish(d, b0, a0, opts, std::min(opts.max_iter, 60));
    spent = r.iterations;
    if (r.converged) {
      fit.params.beta = r.beta;
      fit.params.delta = r.at_lower_boundary ? kDeltaCap : 1.0 / r.alpha;
      fit.boundary_dispersion = r.at_lower_boundary;
      fit.loglik = r.loglik;
      fit.iterations = spent;
      fit.converged = true;
      fit.score_max = r.score_max;
      return fit;
    }
  }

  // Cold path: Poisson start, moment start for alpha, profile grid.
  const Eigen::VectorXd beta_pois = poisson_irls(d);
  double alpha0;
  {
    const LinPred lp = linpred(d, beta_pois);
    double s2 = 0.0;
    for (int i = 0; i < d.D(); ++i) {
      const double logy = std::log(std::max(d.y[i], 0.5));
      const double r = lp.ok ? lp.eta[i] - logy : 0.0;
      s2 += r * r;
    }
    s2 /= d.D();
    const double m = std::max(d.y.mean(), 1e-3);
    alpha0 = std::clamp((s2 - m) / (m * m), kAlphaMin, kAlphaMax);
  }

  std::vector<double> grid;
  const int n_grid = 31;
  for (int i = 0; i < n_grid; ++i) {
    const double t = static_cast<double>(i) / (n_grid - 1);
    grid.push_back(std::exp(std::log(kAlphaMin) * (1.0 - t) + std::log(kAlphaMax) * t));
  }
  grid.push_back(alpha0);
  std::sort(grid.begin(), grid.end());

  Eigen::VectorXd beta_warm = beta_pois;
  std::vector<Eigen::VectorXd> betas(grid.size());
  std::vector<double> lls(grid.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const InnerResult ir = maximize_beta(d, grid[i], beta_warm, opts.algorithm);
    beta_warm = ir.beta;
    betas[i] = ir.beta;
    lls[i] = ir.loglik;
    if (lls[i] > lls[best]) best = i;
    if (opts.keep_profile) fit.profile.emplace_back(grid[i], ir.loglik);
  }

  // Golden-section refinement on log(alpha) inside the bracketing interval.
  const double lo = std::log(grid[best == 0 ? 0 : best - 1]);
  const double hi = std::log(grid[std::min(best + 1, grid.size() - 1)]);
  double a = lo, b = hi;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  Eigen::VectorXd beta_g = betas[best];
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  InnerResult r1 = maximize_beta(d, std::exp(x1), beta_g, opts.algorithm);
  InnerResult r2 = maximize_beta(d, std::exp(x2), r1.beta, opts.algorithm);
  for (int it = 0; it < 40 && (b - a) > 1e-4; ++it) {
    if (r1.loglik >= r2.loglik) {
      b = x2;
      x2 = x1;
      r2 = r1;
      x1 = b - gr * (b - a);
      r1 = maximize_beta(d, std::exp(x1), r2.beta, opts.algorithm);
    } else {
      a = x1;
      x1 = x2;
      r1 = r2;
      x2 = a + gr * (b - a);
      r2 = maximize_beta(d, std::exp(x2), r1.beta, opts.algorithm);
    }
  }
  double alpha_star;
  Eigen::VectorXd beta_star;
  if (lls[best] >= std::max(r1.loglik, r2.loglik)) {
    alpha_star = grid[best];
    beta_star = betas[best];
  } else if (r1.loglik >= r2.loglik) {
    alpha_star = std::exp(x1);
    beta_star = r1.beta;
  } else {
    alpha_star = std::exp(x2);
    beta_star = r2.beta;
  }

  const PolishResult r = polish(d, beta_star, alpha_star, opts,
                                std::max(10, opts.max_iter - spent));
  fit.params.beta = r.beta;
  fit.params.delta = r.at_lower_boundary ? kDeltaCap : 1.0 / r.alpha;
  fit.boundary_dispersion = r.at_lower_boundary;
  fit.loglik = r.loglik;
  fit.iterations = spent + r.iterations;
  fit.converged = r.converged;
  fit.score_max = r.score_max;
  if (!fit.converged)
    throw NonConvergence("fit_area_model: score tolerance not reached (max |score| = " +
                         std::to_string(fit.score_max) + ")");
  return fit;
}

// ------------------------------------------------------------- prediction

Eigen::VectorXd area_bp(const AreaDataset& d, const AreaParams& params) {
  if (params.beta.size() != d.p()) throw DimensionMismatch("area_bp: beta size");
  if (!(params.delta > 0.0)) throw DomainError("area_bp: delta must be positive");
  const LinPred lp = linpred(d, params.beta);
  if (!lp.ok) throw NonFiniteResult("area_bp: linear predictor overflows");
  Eigen::VectorXd psi(d.D());
  for (int i = 0; i < d.D(); ++i)
    psi[i] = lp.lam[i] * (d.y[i] + params.delta) / (lp.lam[i] + params.delta);
  return psi;
}

Eigen::VectorXd area_g1(const AreaDataset& d, const AreaParams& params) {
  if (params.beta.size() != d.p()) throw DimensionMismatch("area_g1: beta size");
  if (!(params.delta > 0.0)) throw DomainError("area_g1: delta must be positive");
  const LinPred lp = linpred(d, params.beta);
  if (!lp.ok) throw NonFiniteResult("area_g1: linear predictor overflows");
  Eigen::VectorXd g(d.D());
  for (int i = 0; i < d.D(); ++i)
    g[i] = lp.lam[i] * lp.lam[i] / (lp.lam[i] + params.delta);
  return g;
}

double area_g1_series(double lambda, double delta, double rel_tol) {
  if (!(lambda > 0.0) || !(delta > 0.0))
    throw DomainError("area_g1_series: lambda and delta must be positive");
  const double kappa1 = lambda * lambda * (delta + 1.0) / delta;
  // kappa2 = sum_j psi(j)^2 p_j with the NB pmf recurrence (log space).
  // The recurrence runs for ~1e6 steps at extreme parameters and the
  // kappa1 - kappa2 cancellation amplifies rounding by several orders of
  // magnitude, so the log-pmf update needs per-step errors proportional to
  // the (tiny) increments: log1p forms plus Kahan-compensated accumulation.
  const double lr = -std::log1p(delta / lambda);
  double logp = -delta * std::log1p(lambda / delta);
  double logp_c = 0.0;
  double kappa2 = 0.0, comp = 0.0;
  for (double j = 0.0; j <= 5e7; j += 1.0) {
    if (j > 0.0) {
      const double inc = (std::log1p((delta - 1.0) / j) + lr) - logp_c;
      const double lt = logp + inc;
      logp_c = (lt - logp) - inc;
      logp = lt;
    }
    const double pj = std::exp(logp);
    const double psi = lambda * (j + delta) / (lambda + delta);
    // Kahan accumulation: kappa1 - kappa2 cancels several digits for large
    // lambda, so kappa2 itself must carry full precision.
    const double term = psi * psi * pj - comp;
    const double t = kappa2 + term;
    comp = (t - kappa2) - term;
    kappa2 = t;
    // Rigorous tail bound.  Past j the pmf ratio p_{k+1}/p_k is at most
    // rb = (1 + delta/j) lambda/(lambda+delta) (< 1 once j > lambda), and
    // psi(k)^2 <= psi(j)^2 (1 + m/(j+delta))^2 at k = j+m, so the remaining
    // sum is bounded by a quadratic-weighted geometric series.
    if (j > lambda + delta) {
      const double rb = (1.0 + delta / j) * lambda / (lambda + delta);
      if (rb < 1.0) {
        const double q = rb / (1.0 - rb);
        const double a = 1.0 / (j + delta);
        const double geo = q + 2.0 * a * q / (1.0 - rb) +
                           a * a * rb * (1.0 + rb) / ((1.0 - rb) * (1.0 - rb) * (1.0 - rb));
        const double tail = psi * psi * pj * geo;
        if (tail <= rel_tol * std::max(1.0, std::abs(kappa1 - kappa2))) break;
      }
    }
  }
  return kappa1 - kappa2;
}

Eigen::VectorXd area_bp_gradient(const Eigen::VectorXd& x_d, double lambda, double delta,
                                 double j) {
  const int p = static_cast<int>(x_d.size());
  const double r2 = (lambda + delta) * (lambda + delta);
  Eigen::VectorXd g(p + 1);
  g.head(p) = x_d * (lambda * delta * (j + delta) / r2);
  g[p] = lambda * (lambda - j) / r2;
  return g;
}

Eigen::VectorXd area_mse_plugin(const AreaDataset& d, const AreaParams& params,
                                const Eigen::MatrixXd& vcov) {
  const int p = d.p();
  if (vcov.rows() != p + 1 || vcov.cols() != p + 1)
    throw DimensionMismatch("area_mse_plugin: vcov must be (p+1) x (p+1)");
  const LinPred lp = linpred(d, params.beta);
  if (!lp.ok) throw NonFiniteResult("area_mse_plugin: linear predictor overflows");
  const double delta = params.delta;
  Eigen::VectorXd mse(d.D());
  for (int i = 0; i < d.D(); ++i) {
    const double lam = lp.lam[i];
    const double r2 = (lam + delta) * (lam + delta);
    // grad psi(j) = v0 + j v1 is linear in j, so E[grad' V grad] needs only
    // E[y] and E[y^2] of the NB marginal.
    Eigen::VectorXd v0(p + 1), v1(p + 1);
    v0.head(p) = d.X.row(i).transpose() * (lam * delta * delta / r2);
    v0[p] = lam * lam / r2;
    v1.head(p) = d.X.row(i).transpose() * (lam * delta / r2);
    v1[p] = -lam / r2;
    const double ey = lam;
    const double ey2 = lam + lam * lam / delta + lam * lam;
    const double cd = v0.dot(vcov * v0) + 2.0 * ey * v0.dot(vcov * v1) +
                      ey2 * v1.dot(vcov * v1);
    mse[i] = lam * lam / (lam + delta) + cd;
  }
  return mse;
}

double area_cd_series(const Eigen::VectorXd& x_d, double lambda, double delta,
                      const Eigen::MatrixXd& vcov, double rel_tol) {
  if (!(lambda > 0.0) || !(delta > 0.0))
    throw DomainError("area_cd_series: lambda and delta must be positive");
  const double lr = std::log(lambda / (delta + lambda));
  double logp = delta * std::log(delta / (delta + lambda));
  double acc = 0.0, cum = 0.0;
  const double sd = std::sqrt(lambda * (1.0 + lambda / delta));
  const double jstop = lambda + 12.0 * sd + 50.0;
  for (double j = 0.0; j <= 5e7; j += 1.0) {
    if (j > 0.0) logp += std::log((j - 1.0 + delta) / j) + lr;
    const double pj = std::exp(logp);
    const Eigen::VectorXd g = area_bp_gradient(x_d, lambda, delta, j);
    const double term = g.dot(vcov * g) * pj;
    acc += term;
    cum += pj;
    if (j > jstop && term < rel_tol * std::max(acc, 1e-300) && 1.0 - cum < 1e-13) break;
  }
  return acc;
}

}  // namespace sae
