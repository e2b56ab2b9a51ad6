#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <string>

#include "rrto/error.hpp"

namespace rrto {

struct TruncatedSvd {
  Eigen::MatrixXd U;      // m x k, orthonormal columns
  Eigen::VectorXd sigma;  // k, descending
  Eigen::MatrixXd Vt;     // k x n

  /// Latent coefficients sigma_i * Vt(i, j).
  Eigen::MatrixXd coefficients() const { return sigma.asDiagonal() * Vt; }
  Eigen::MatrixXd reconstruct() const { return U * coefficients(); }
};

/// Rank-k truncation of Y. Each column of U is signed so that its
/// largest-magnitude entry (first one on ties) is positive; the matching row
/// of Vt flips with it.
inline TruncatedSvd truncated_svd(const Eigen::MatrixXd& Y, int k) {
  if (Y.rows() < 1 || Y.cols() < 1) throw ContractError("truncated_svd: empty matrix");
  if (k < 1 || k > std::min(Y.rows(), Y.cols()))
    throw ContractError("truncated_svd: k = " + std::to_string(k) + " outside [1, min(" +
                        std::to_string(Y.rows()) + ", " + std::to_string(Y.cols()) + ")]");
  if (!Y.allFinite()) throw SolverError("truncated_svd: matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw SolverError("truncated_svd: SVD did not converge");

  TruncatedSvd out;
  out.U = svd.matrixU().leftCols(k);
  out.sigma = svd.singularValues().head(k);
  out.Vt = svd.matrixV().leftCols(k).transpose();
  for (int i = 0; i < k; ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < out.U.rows(); ++r)
      if (std::abs(out.U(r, i)) > std::abs(out.U(arg, i))) arg = r;
    if (out.U(arg, i) < 0.0) {
      out.U.col(i) *= -1.0;
      out.Vt.row(i) *= -1.0;
    }
  }
  return out;
}

}  // namespace rrto
