#pragma once

#include <cstdint>
#include <vector>

#include "sae/area_model.hpp"
#include "sae/types.hpp"
#include "sae/unit_model.hpp"

namespace sae {

// How the per-area scale sigma_d for the studentized statistics is obtained:
// the closed-form first-order term, the plug-in MSE (first-order term plus
// the delta-method parameter-uncertainty correction), the single bootstrap
// MSE, or the double-bootstrap bias-corrected MSE.
enum class SigmaKind { G1, MsePlugin, MseBoot, MseBootBC };

enum class ModelKind { Area, Unit };

struct BootstrapConfig {
  int B1 = 1000;       // first-stage replicates
  int B2 = 1;          // second-stage replicates per first-stage replicate
  double alpha = 0.05; // significance level of the bands / tests
  std::uint64_t seed = 0;
  SigmaKind sigma_kind = SigmaKind::MseBoot;
  int threads = 1;     // worker parallelism; results identical for any value
  // Also record the critical value of the non-studentized max statistic
  // max_d |muhat*_d - mu*_d| (diagnostic only; intervals always studentize).
  bool raw_statistic = false;
  // Also record per-area quantiles at level 1 - alpha/D (diagnostic only).
  bool bonferroni = false;
};

// Replicate records of a parametric bootstrap.  Row b of each matrix is one
// surviving replicate: the bootstrap truth mu*_d, its re-estimated EBP
// muhat*_d, the refitted parameters (beta*, delta*), and -- when B2 >= 1 --
// the second-stage mean squared deviation feeding the bias-corrected MSE.
// Scales for the studentized statistics are precomputed per kind where the
// model admits them (closed forms exist for the area model only; both
// models support the ensemble-level bootstrap scales).
struct BootstrapEnsemble {
  ModelKind model = ModelKind::Area;
  int requested = 0;  // replicates asked for (B1)
  int inner = 0;      // second-stage replicates (B2)
  int failed = 0;     // replicates discarded because a refit failed
  std::vector<int> failed_ids;

  Eigen::MatrixXd mu_star;     // B x D bootstrap truths (count scale)
  Eigen::MatrixXd mu_hat;      // B x D replicate EBPs (count scale)
  Eigen::MatrixXd y_star;      // B x D replicate responses (area model only)
  Eigen::MatrixXd theta_star;  // B x (p+1); last column is delta*
  Eigen::MatrixXd inner_sq;    // B x D mean (muhat** - mu**)^2; empty if B2=0

  Eigen::MatrixXd sigma_g1;      // B x D per-replicate scales (area only)
  Eigen::MatrixXd sigma_plugin;  // B x D                      (area only)
  Eigen::VectorXd center_g1;     // D scales at the parent fit (area only)
  Eigen::VectorXd center_plugin; // D                          (area only)

  Eigen::MatrixXd vcov;   // (p+1) x (p+1) covariance of theta* across replicates
  Eigen::VectorXd denom;  // D proportion denominators
};

// Per-area point predictions plus whichever variability estimates have been
// computed so far (attach_mse fills the bootstrap-based ones).
struct PredictionSet {
  std::vector<std::string> area;
  Eigen::VectorXd mu;     // EBP, count scale
  Eigen::VectorXd denom;  // N_d
  Eigen::VectorXd prop;   // mu / denom
  Eigen::VectorXd g1;          // area model only
  Eigen::VectorXd mse_plugin;  // filled by attach_mse
  Eigen::VectorXd mse_b;       // filled by attach_mse
  Eigen::VectorXd mse_bc;      // filled by attach_mse when B2 >= 1
};

struct MseResult {
  Eigen::VectorXd mse_b;
  Eigen::VectorXd mse_bc;           // empty when not requested
  std::vector<std::uint8_t> bc_floored;  // 1 where 2*mse_b - inner < 0
};

// Simultaneous and individual confidence intervals around the EBPs.  Count
// scale first; the *_prop fields divide everything by denom.
struct SimultaneousResult {
  SigmaKind sigma_kind = SigmaKind::MseBoot;
  double q_sci = 0.0;      // critical quantile of the max statistic
  Eigen::VectorXd q_ici;   // D per-area quantiles
  Eigen::VectorXd sigma;   // D scales used for the interval half-widths
  Eigen::VectorXd sci_lo, sci_hi, ici_lo, ici_hi;
  Eigen::VectorXd sci_lo_prop, sci_hi_prop, ici_lo_prop, ici_hi_prop;
  Eigen::MatrixXd vcov;    // copied from the ensemble
  double q_raw = 0.0;          // set when cfg.raw_statistic
  Eigen::VectorXd q_bonf;      // set when cfg.bonferroni
};

// Max-type test of H0: contrast * zeta = target on the proportion scale.
struct MtpResult {
  Eigen::MatrixXd contrast;  // D' x D
  Eigen::VectorXd target;    // D'
  Eigen::VectorXd t_stat;    // D' signed per-contrast statistics
  Eigen::VectorXd sigma;     // D' per-contrast bootstrap scales
  double t_max = 0.0;
  double q_crit = 0.0;
  bool reject = false;
};

// 1-based rank of the upper order statistic used for all critical values:
// ceil((1-alpha) B + 1) capped at B (951 for alpha=0.05, B=1000).
int order_statistic_index(double alpha, int B);
// The corresponding order statistic of v (v is copied and sorted).
double order_statistic(std::vector<double> v, double alpha);

// Point predictions at given parameters.
PredictionSet predict_area(const AreaDataset& data, const AreaParams& params);
// Unit-model predictions use the deterministic quadrature EBP.  With
// use_estimated_N the class sizes (and hence denominators) come from the
// weighted direct estimates instead of the supplied population counts.
PredictionSet predict_unit(const UnitDataset& data, const UnitParams& params,
                           const AgqConfig& agq = {}, bool use_estimated_N = false);

// Parametric bootstrap: regenerate data from the fitted model B1 times,
// refit, re-predict.  Replicates whose refit throws are discarded and
// recorded in failed_ids; more than 5% failures raises BootstrapFailureRate.
// Deterministic given (data, fit, cfg) for any thread count.
BootstrapEnsemble bootstrap_area(const AreaDataset& data, const AreaFit& fit,
                                 const BootstrapConfig& cfg);
BootstrapEnsemble bootstrap_unit(const UnitDataset& data, const UnitFit& fit,
                                 const BootstrapConfig& cfg, const AgqConfig& agq = {},
                                 bool use_estimated_N = false);

// Single bootstrap MSE per area, and the bias-corrected version when
// with_bc (requires an ensemble built with B2 >= 1, else MissingSecondStage).
// The bias correction can go negative; it is floored at zero and flagged.
MseResult mse_bootstrap(const BootstrapEnsemble& ensemble, bool with_bc = true);

// Fills predictions.mse_plugin / mse_b / mse_bc from the ensemble.
void attach_mse(PredictionSet& predictions, const BootstrapEnsemble& ensemble);

// Simultaneous and individual intervals from the replicate records.  Throws
// ValidationError when cfg.sigma_kind has no scales for the ensemble's
// model, MissingSecondStage for MseBootBC without an inner stage, and
// ZeroSigma when any scale is not strictly positive.
SimultaneousResult sci(const BootstrapEnsemble& ensemble, const PredictionSet& predictions,
                       const BootstrapConfig& cfg);

// Max-type multiple testing procedure on the proportion scale.  The
// per-contrast scales are the bootstrap standard deviations of
// contrast * (zetahat* - zeta*); the critical value is the order statistic
// of the max studentized contrast over replicates.
MtpResult mtp_from_ensemble(const BootstrapEnsemble& ensemble,
                            const PredictionSet& predictions,
                            const Eigen::MatrixXd& contrast, const Eigen::VectorXd& target,
                            const BootstrapConfig& cfg);
MtpResult mtp(const AreaDataset& data, const AreaFit& fit, const Eigen::MatrixXd& contrast,
              const Eigen::VectorXd& target, const BootstrapConfig& cfg);
MtpResult mtp(const UnitDataset& data, const UnitFit& fit, const Eigen::MatrixXd& contrast,
              const Eigen::VectorXd& target, const BootstrapConfig& cfg,
              const AgqConfig& agq = {});

// Contrast matrix of consecutive paired differences: row i has +1 at column
// 2i and -1 at column 2i+1.  n_params must be even (OddLength otherwise).
Eigen::MatrixXd paired_difference_contrast(int n_params);

}  // namespace sae
