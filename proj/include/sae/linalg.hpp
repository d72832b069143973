#pragma once

#include <Eigen/Dense>

#include "sae/errors.hpp"

namespace sae {

// Solve A x = b for symmetric positive definite A (Fisher scoring systems).
inline Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw DimensionMismatch("cholesky_solve: incompatible shapes");
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw SingularMatrix("cholesky_solve: matrix is not positive definite");
  return llt.solve(b);
}

// General square solve (Newton steps, where the observed information may be
// indefinite).  Full pivoting: these systems are tiny.
inline Eigen::VectorXd lu_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw DimensionMismatch("lu_solve: incompatible shapes");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw SingularMatrix("lu_solve: matrix is singular");
  return lu.solve(b);
}

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("spd_inverse: matrix not square");
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw SingularMatrix("spd_inverse: matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

}  // namespace sae
