#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "sae/types.hpp"

namespace sae {

enum class InfoKind { Observed, Fisher };
enum class AreaAlgorithm { FisherScoring, NewtonRaphson };

// Marginal negative binomial log-likelihood of the Poisson-gamma model, up
// to the additive constant -sum_d log(y_d!) which involves neither beta nor
// alpha:
//
//   l(beta, alpha) = sum_d [ sum_{j=1}^{y_d-1} log(1 + alpha j)
//                            + y_d log lambda_d
//                            - (y_d + 1/alpha) log(1 + alpha lambda_d) ],
//   lambda_d = exp(x_d' beta),  alpha = 1/delta > 0.
//
// Throws DomainError for alpha <= 0, NonFiniteResult if some lambda_d
// overflows.
double nb_loglik(const AreaDataset& data, const Eigen::VectorXd& beta, double alpha);

// Gradient of nb_loglik in (beta, alpha); the last component is d/d alpha:
//   s_beta = sum_d x_d (y_d - lambda_d) / (1 + alpha lambda_d)
//   s_alpha = sum_d [ sum_{j<y_d} j/(1+alpha j) + log(1+alpha lambda_d)/alpha^2
//                     - (y_d + 1/alpha) lambda_d/(1+alpha lambda_d) ]
Eigen::VectorXd nb_score(const AreaDataset& data, const Eigen::VectorXd& beta, double alpha);

// Information matrix in (beta, alpha).  Observed = negative Hessian of
// nb_loglik; Fisher = its expectation under the fitted model (the
// beta/alpha block of the Fisher form is exactly zero, and the alpha-alpha
// entry needs the expectation of the inner sum, evaluated by summing the
// NB survival function).
Eigen::MatrixXd nb_information(const AreaDataset& data, const Eigen::VectorXd& beta,
                               double alpha, InfoKind kind);

struct AreaFitOptions {
  AreaAlgorithm algorithm = AreaAlgorithm::FisherScoring;
  int max_iter = 200;        // total budget across grid, refinement and polish
  double score_tol = 1e-8;   // max-norm of the (beta, alpha) score
  double loglik_tol = 1e-10; // relative log-likelihood change
  // Skip the global alpha profile and polish from these parameters
  // (bootstrap refits start from the parent fit).  Falls back to the full
  // profile when the polish stalls.
  std::optional<AreaParams> warm_start;
  bool keep_profile = false;
};

struct AreaFit {
  AreaParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  // Profile optimum pinned at the alpha -> 0 boundary: the data carry no
  // overdispersion; delta is reported at the 1e6 cap and `converged`
  // reflects the beta score only.
  bool boundary_dispersion = false;
  double score_max = 0.0;
  std::vector<std::pair<double, double>> profile;  // (alpha, profile loglik)
};

// Maximum likelihood: alpha is profiled on a log grid over [1e-6, 1e3],
// refined by golden section, then the full (beta, alpha) vector is polished
// by Newton steps on the observed information.  Throws ValidationError when
// D <= p and SingularMatrix for a rank-deficient design.
AreaFit fit_area_model(const AreaDataset& data, const AreaFitOptions& opts = {});

// Best predictor of the mixed parameter mu_d = lambda_d w_d given y_d:
//   psi_d = lambda_d (y_d + delta) / (lambda_d + delta).
Eigen::VectorXd area_bp(const AreaDataset& data, const AreaParams& params);

// First-order prediction error g1_d = kappa1_d - kappa2_d:
//   kappa1 = lambda^2 (delta+1)/delta,
//   kappa2 = sum_j psi(j)^2 Pr(y = j).
// The series telescopes to the closed form lambda^2/(lambda + delta), which
// area_g1 uses; area_g1_series keeps the defining truncated series as the
// reference path (the two agree to the truncation tolerance).
Eigen::VectorXd area_g1(const AreaDataset& data, const AreaParams& params);
double area_g1_series(double lambda, double delta, double rel_tol = 1e-12);

// Plug-in MSE estimator: g1_d plus the delta-method parameter-uncertainty
// term E_j[ grad psi(j)' V grad psi(j) ] with V = vcov(beta-hat, delta-hat).
// The psi gradient is linear in j, so the expectation reduces to the first
// two NB moments; area_cd_series keeps the defining series for tests.
Eigen::VectorXd area_mse_plugin(const AreaDataset& data, const AreaParams& params,
                                const Eigen::MatrixXd& vcov);
double area_cd_series(const Eigen::VectorXd& x_d, double lambda, double delta,
                      const Eigen::MatrixXd& vcov, double rel_tol = 1e-12);

// Gradient of psi_d(j) in theta = (beta, delta) at integer outcome j.
Eigen::VectorXd area_bp_gradient(const Eigen::VectorXd& x_d, double lambda, double delta,
                                 double j);

// log Pr(y = j) under the negative binomial marginal.
double nb_logpmf(double j, double lambda, double delta);

}  // namespace sae
