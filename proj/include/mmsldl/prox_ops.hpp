#ifndef MMSLDL_PROX_OPS_HPP
#define MMSLDL_PROX_OPS_HPP

#include "mmsldl/types.hpp"

namespace mmsldl {

// Thin SVD of a real matrix, r = min(rows, cols).
// U and V have orthonormal columns, S is non-increasing and non-negative.
struct SvdFactors {
  Matrix U;
  Vector S;
  Matrix V;

  Matrix reconstruct() const { return U * S.asDiagonal() * V.transpose(); }

  // Numerical rank with singular values below 1e-12 * S(0) treated as zero.
  Index rank() const;
};

// Entrywise shrinkage sign(m) * max(|m| - tau, 0).
Matrix soft_threshold(const Matrix& m, double tau);

// Singular value thresholding: U * diag(max(S - tau, 0)) * V^T.
Matrix svt(const Matrix& m, double tau);

// Largest singular value.
double spectral_norm(const Matrix& m);

SvdFactors thin_svd(const Matrix& m);

}  // namespace mmsldl

#endif
