#pragma once

#include "sae/types.hpp"

namespace sae {

// Design-based (Horvitz-Thompson style) survey estimators from unit data:
// weighted totals per area and per covariate class.
struct DirectEstimates {
  Eigen::VectorXd Yhat;        // D   weighted outcome totals
  Eigen::VectorXd Nhat;        // D   weighted population sizes
  Eigen::MatrixXd Nhat_class;  // DxL weighted class sizes
  Eigen::MatrixXd Xhat;        // Dxp weighted covariate totals
  Eigen::MatrixXd Xbar;        // Dxp Xhat / Nhat
  Eigen::VectorXd prop;        // D   Yhat / Nhat
};

DirectEstimates direct_estimators(const UnitDataset& data);

}  // namespace sae
