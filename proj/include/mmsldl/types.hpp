#ifndef MMSLDL_TYPES_HPP
#define MMSLDL_TYPES_HPP

#include <Eigen/Dense>

namespace mmsldl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Max absolute entry; the matrix infinity norm used in every stopping test.
inline double max_abs(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().maxCoeff();
}

inline bool all_finite(const Matrix& m) {
  return m.allFinite();
}

}  // namespace mmsldl

#endif
