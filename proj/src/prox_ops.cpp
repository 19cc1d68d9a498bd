#include "mmsldl/prox_ops.hpp"

#include <Eigen/SVD>

#include "mmsldl/errors.hpp"

namespace mmsldl {

Index SvdFactors::rank() const {
  if (S.size() == 0) return 0;
  const double floor = 1e-12 * S(0);
  Index r = 0;
  for (Index i = 0; i < S.size(); ++i)
    if (S(i) > floor) ++r;
  return r;
}

Matrix soft_threshold(const Matrix& m, double tau) {
  if (!all_finite(m))
    throw invalid_input("soft_threshold: input contains non-finite entries");
  if (tau < 0.0)
    throw invalid_parameter("soft_threshold: tau must be non-negative, got " +
                            std::to_string(tau));
  return m.unaryExpr([tau](double v) {
    const double a = std::abs(v) - tau;
    return a > 0.0 ? (v > 0.0 ? a : -a) : 0.0;
  });
}

SvdFactors thin_svd(const Matrix& m) {
  if (!all_finite(m))
    throw invalid_input("thin_svd: input contains non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdFactors f{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (!f.U.allFinite() || !f.S.allFinite() || !f.V.allFinite())
    throw numerical_failure("thin_svd: decomposition produced non-finite factors for a " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            " matrix");
  return f;
}

Matrix svt(const Matrix& m, double tau) {
  if (tau < 0.0)
    throw invalid_parameter("svt: tau must be non-negative, got " + std::to_string(tau));
  const SvdFactors f = thin_svd(m);
  Vector shrunk = (f.S.array() - tau).max(0.0);
  return f.U * shrunk.asDiagonal() * f.V.transpose();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0)
    throw invalid_input("spectral_norm: empty matrix");
  if (!all_finite(m))
    throw invalid_input("spectral_norm: input contains non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace mmsldl
