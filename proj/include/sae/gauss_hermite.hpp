#pragma once

#include <Eigen/Dense>

namespace sae {

// Gauss-Hermite rule for the physicists' weight exp(-t^2):
//   integral f(t) exp(-t^2) dt  ~=  sum_r weights[r] * f(nodes[r])
// Nodes are sorted ascending and exactly symmetric about 0; the weights
// sum to sqrt(pi).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Golub-Welsch: eigendecomposition of the symmetric tridiagonal Jacobi matrix of the
// Hermite recurrence.  q >= 1; throws DomainError otherwise.
GaussHermiteRule gauss_hermite(int q);

}  // namespace sae
