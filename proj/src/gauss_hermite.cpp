#include "sae/gauss_hermite.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "sae/errors.hpp"

namespace sae {

GaussHermiteRule gauss_hermite(int q) {
  if (q < 1) throw DomainError("gauss_hermite: need at least one node");

  GaussHermiteRule rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  if (q == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = std::sqrt(M_PI);
    return rule;
  }

  // Jacobi matrix of the (monic, physicists') Hermite recurrence: zero
  // diagonal, off-diagonal b_j = sqrt(j/2).
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
  for (int j = 1; j < q; ++j) {
    const double b = std::sqrt(0.5 * j);
    J(j, j - 1) = b;
    J(j - 1, j) = b;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success)
    throw NonFiniteResult("gauss_hermite: eigensolver failed");

  const double mu0 = std::sqrt(M_PI);  // integral of the weight
  rule.nodes = es.eigenvalues();       // ascending
  for (int i = 0; i < q; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }

  // Clean up the +-pair symmetry that the eigensolver only gives to
  // rounding error; the center node of an odd rule is exactly zero.
  for (int i = 0, k = q - 1; i < k; ++i, --k) {
    const double t = 0.5 * (rule.nodes[k] - rule.nodes[i]);
    rule.nodes[i] = -t;
    rule.nodes[k] = t;
    const double w = 0.5 * (rule.weights[i] + rule.weights[k]);
    rule.weights[i] = w;
    rule.weights[k] = w;
  }
  if (q % 2 == 1) rule.nodes[q / 2] = 0.0;
  return rule;
}

}  // namespace sae
