#include "sae/direct.hpp"

#include "sae/errors.hpp"

namespace sae {

DirectEstimates direct_estimators(const UnitDataset& d) {
  const int D = d.D(), L = d.L(), p = d.p();
  DirectEstimates e;
  e.Yhat = Eigen::VectorXd::Zero(D);
  e.Nhat = Eigen::VectorXd::Zero(D);
  e.Nhat_class = Eigen::MatrixXd::Zero(D, L);
  e.Xhat = Eigen::MatrixXd::Zero(D, p);

  for (int i = 0; i < d.n(); ++i) {
    const int a = d.unit_area[i];
    const double w = d.unit_w[i];
    e.Yhat[a] += w * d.unit_y[i];
    e.Nhat[a] += w;
    e.Nhat_class(a, d.unit_class[i]) += w;
    e.Xhat.row(a) += w * d.Z.row(d.unit_class[i]);
  }
  for (int a = 0; a < D; ++a)
    if (e.Nhat[a] <= 0.0)
      throw EmptyArea("direct_estimators: area '" + d.area[a] + "' has no sampled units");

  e.Xbar = e.Xhat.array().colwise() / e.Nhat.array();
  e.prop = e.Yhat.array() / e.Nhat.array();
  return e;
}

}  // namespace sae
