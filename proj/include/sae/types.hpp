#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sae {

// ---------------------------------------------------------------- parameters

// Poisson-gamma (negative binomial) area-level model:
//   y_d | w_d ~ Poisson(lambda_d w_d),  lambda_d = exp(x_d' beta),
//   w_d ~ Gamma(delta, delta)  (mean 1, variance 1/delta).
struct AreaParams {
  Eigen::VectorXd beta;
  double delta = 1.0;
  // Overdispersion in the direct parameterization; alpha * delta == 1 holds
  // exactly because alpha is always derived.
  double alpha() const { return 1.0 / delta; }
};

// Logit-normal unit-level model:
//   y_dj | u_d ~ Bin(m_dj, p_dj),  logit p_dj = x_dj' beta + delta u_d,
//   u_d ~ N(0, 1),  delta >= 0.
struct UnitParams {
  Eigen::VectorXd beta;
  double delta = 0.0;
};

// ----------------------------------------------------------------- area data

struct AreaDataset {
  std::vector<std::string> area;        // D unique ids
  Eigen::VectorXd y;                    // nonnegative integer counts
  Eigen::VectorXd N;                    // positive population sizes
  Eigen::MatrixXd X;                    // D x p design; X.col(0) == 1
  std::vector<std::string> covariates;  // p names; covariates[0] == "intercept"

  int D() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
};

// ----------------------------------------------------------------- unit data

// Units are grouped into covariate classes (distinct covariate patterns);
// the model only sees per-(area, class) sufficient statistics, while the raw
// units are kept for the design-based direct estimators.
struct UnitDataset {
  std::vector<std::string> area;         // D unique ids
  std::vector<std::string> class_label;  // L labels ("0_1_1_0" patterns)
  Eigen::MatrixXd Z;                     // L x p class design; Z.col(0) == 1
  std::vector<std::string> covariates;   // p names; covariates[0] == "intercept"

  std::vector<int> unit_area;            // n indices into `area`
  std::vector<int> unit_class;           // n indices into `class_label`
  Eigen::VectorXd unit_y, unit_m, unit_w;

  Eigen::MatrixXd Npop;                  // D x L population class sizes
  Eigen::MatrixXd ysum, msum, nsamp;     // D x L sampled sufficient statistics

  Eigen::VectorXd N() const { return Npop.rowwise().sum(); }
  int D() const { return static_cast<int>(area.size()); }
  int L() const { return static_cast<int>(class_label.size()); }
  int p() const { return static_cast<int>(Z.cols()); }
  int n() const { return static_cast<int>(unit_y.size()); }
};

}  // namespace sae
