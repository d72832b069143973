#pragma once

#include <cstdint>
#include <optional>

#include "sae/gauss_hermite.hpp"
#include "sae/types.hpp"

namespace sae {

// Tuning for the adaptive Gauss-Hermite likelihood and the Monte-Carlo
// predictor integrals.
struct AgqConfig {
  int q = 15;          // quadrature nodes (>= 3)
  int mc_draws = 2000; // MC sample size for predictor integrals (>= 100)
};

struct UnitFitOptions {
  int max_iter = 200;
  double score_tol = 1e-6;  // max-norm of the (beta, delta) score
  // Start the quasi-Newton iteration from these parameters instead of the
  // pooled logistic regression (bootstrap refits start from the parent fit).
  std::optional<UnitParams> warm_start;
};

struct UnitFit {
  UnitParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double score_max = 0.0;
};

// Adaptive Gauss-Hermite approximation of the marginal log-likelihood of the
// logit-normal model.  Per area the integrand exp(k_d(u) - u^2/2) is
// recentered at its mode u-hat (safeguarded Newton; the function is strictly
// concave) and rescaled by the curvature sigma-hat, then integrated with the
// q-point Gauss-Hermite rule:
//
//   log f_d = -log(2 pi)/2 + log(sqrt(2) sigma-hat_d)
//             + logsumexp_r [ log w_r + t_r^2 + i_d(u-hat_d + sigma-hat_d sqrt(2) t_r) ]
//
// where i_d(u) is the complete conditional log-density of area d's counts
// plus log h(u) (constants included).  delta = 0 collapses the integral and
// reproduces the plain logistic-regression log-likelihood exactly.
// Throws DomainError (delta < 0), ValidationError (bad config),
// ModeSearchFailure, NonFiniteResult.
double logit_loglik_agq(const UnitDataset& data, const UnitParams& params,
                        const AgqConfig& cfg = {});

// Gradient of the AGQ log-likelihood in (beta, delta): the posterior-weighted
// average of the conditional score at the quadrature nodes,
//   S_d(theta; u) = [ sum_l (ysum_dl - msum_dl p_l(u)) z_l ;
//                     u (y_d. - sum_l msum_dl p_l(u)) ].
// Nodes and weights are re-solved at the given theta (same construction as
// logit_loglik_agq), so this matches finite differences of the AGQ surface
// up to the (second-order small) dependence of the mode on theta.
Eigen::VectorXd logit_score_agq(const UnitDataset& data, const UnitParams& params,
                                const AgqConfig& cfg = {});

// Maximum likelihood for (beta, delta) by BFGS ascent on the AGQ
// log-likelihood with delta projected onto [0, inf).  Starting values: beta
// from the pooled (no random effect) logistic regression, delta = 0.5.
// Throws ValidationError (fewer than 2 areas), SingularMatrix (rank-deficient
// design), NonConvergence.
UnitFit fit_unit_model(const UnitDataset& data, const AgqConfig& cfg = {},
                       const UnitFitOptions& opts = {});

// Empirical best predictors given fitted parameters.
struct UnitEbp {
  Eigen::MatrixXd r;     // D x L posterior class probabilities r-hat_dl
  Eigen::VectorXd mu;    // per-area predicted count sum_l N_dl r-hat_dl
  Eigen::VectorXd prop;  // mu / N_d
  Eigen::VectorXd u;     // posterior mean of the standardized random effect
};

// Monte-Carlo evaluation of the predictor integrals: draws u ~ N(0,1) in
// antithetic pairs (u, -u) from a dedicated stream per area (seed, area
// index), weights each draw by the conditional likelihood of the observed
// counts, and returns the weighted averages
//   r-hat_dl = E[p_l(u) | y_d],  u-hat_d = E[u | y_d].
// mc_draws is rounded up to an even number of draws.  Throws
// DegenerateWeights when every weight underflows.
UnitEbp unit_ebp(const UnitDataset& data, const UnitParams& params,
                 const AgqConfig& cfg = {}, std::uint64_t seed = 0);

// Deterministic cross-check path: the same posterior ratios evaluated by
// mode-recentered Gauss-Hermite quadrature with cfg.q nodes instead of Monte
// Carlo.  Used by tests and available for diagnostics.
UnitEbp unit_ebp_quadrature(const UnitDataset& data, const UnitParams& params,
                            const AgqConfig& cfg = {});

// Pooled logistic regression ignoring the random effect (the fit starting
// value and the delta = 0 reference model).  Returns beta.
Eigen::VectorXd pooled_logistic_fit(const UnitDataset& data, int max_iter = 50,
                                    double tol = 1e-12);

}  // namespace sae
