#include "mmsldl/classifier.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "mmsldl/errors.hpp"
#include "mmsldl/prox_ops.hpp"
#include "mmsldl/trainer.hpp"

namespace mmsldl {

Matrix build_label_matrix(const std::vector<int>& labels, Index num_classes) {
  if (num_classes <= 0)
    throw invalid_parameter("build_label_matrix: num_classes must be positive");
  Matrix H = Matrix::Zero(num_classes, static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= num_classes)
      throw invalid_input("build_label_matrix: label " + std::to_string(c) +
                          " outside [0, " + std::to_string(num_classes) + ") at column " +
                          std::to_string(i));
    H(c, static_cast<Index>(i)) = 1.0;
  }
  return H;
}

Matrix fit_ridge(const Matrix& Z, const Matrix& H, double lambda_ridge) {
  if (lambda_ridge < 0.0)
    throw invalid_parameter("fit_ridge: lambda_ridge must be >= 0, got " +
                            std::to_string(lambda_ridge));
  if (Z.cols() != H.cols())
    throw invalid_input("fit_ridge: Z has " + std::to_string(Z.cols()) +
                        " columns but H has " + std::to_string(H.cols()));
  if (!all_finite(Z) || !all_finite(H))
    throw invalid_input("fit_ridge: inputs contain non-finite entries");

  const Index m = Z.rows();
  Matrix G = Z * Z.transpose();
  G.diagonal().array() += lambda_ridge;

  // W = H Z^T G^{-1}  <=>  G W^T = Z H^T (G symmetric).
  Matrix rhs = Z * H.transpose();
  if (lambda_ridge > 0.0) {
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success)
      throw numerical_failure("fit_ridge: gram matrix factorization failed");
    return llt.solve(rhs).transpose();
  }
  Eigen::FullPivLU<Matrix> lu(G);
  if (!lu.isInvertible())
    throw numerical_failure(
        "fit_ridge: Z Z^T is singular and lambda_ridge is 0; rank " +
        std::to_string(lu.rank()) + " of " + std::to_string(m));
  return lu.solve(rhs).transpose();
}

Matrix build_score_code(const Dictionary& D) {
  const Index C = D.num_classes();
  if (C <= 0) throw invalid_state("build_score_code: dictionary has no class partition");
  Matrix Q = Matrix::Zero(C, D.atom_count());
  for (Index c = 0; c < C; ++c) {
    const auto [start, count] = D.class_range(c);
    Q.block(c, start, 1, count).setOnes();
  }
  return Q;
}

std::pair<int, Vector> candidate_label(const RidgeClassifier& ridge, const Vector& z) {
  if (ridge.W_hat.size() == 0)
    throw invalid_state("candidate_label: classifier has not been fit");
  if (z.size() != ridge.W_hat.cols())
    throw invalid_input("candidate_label: code length " + std::to_string(z.size()) +
                        " does not match trained atom count " +
                        std::to_string(ridge.W_hat.cols()));
  if (ridge.Q_score.rows() != ridge.W_hat.rows() ||
      ridge.Q_score.cols() != ridge.W_hat.cols())
    throw invalid_state("candidate_label: score-code shape does not match weights");

  Vector scores = (ridge.W_hat + ridge.Q_score) * z;
  int best = 0;
  for (Index c = 1; c < scores.size(); ++c)
    if (scores(c) > scores(best)) best = static_cast<int>(c);
  return {best, scores};
}

RpcaResult rpca(const Matrix& X, const RpcaOptions& opts) {
  if (X.size() == 0) throw invalid_input("rpca: empty input");
  if (!all_finite(X)) throw invalid_input("rpca: input contains non-finite entries");
  if (opts.tol <= 0.0) throw invalid_parameter("rpca: tol must be positive");
  if (opts.max_iters < 1) throw invalid_parameter("rpca: max_iters must be >= 1");

  RpcaResult out;
  out.L = Matrix::Zero(X.rows(), X.cols());
  out.S = Matrix::Zero(X.rows(), X.cols());
  const double fro = X.norm();
  if (fro == 0.0) {
    out.converged = true;
    return out;
  }

  const double lambda =
      opts.lambda > 0.0 ? opts.lambda
                        : 1.0 / std::sqrt(static_cast<double>(std::max(X.rows(), X.cols())));
  const double norm_two = spectral_norm(X);
  const double dual_norm = std::max(norm_two, max_abs(X) / lambda);
  Matrix Y = X / dual_norm;
  double mu = 1.25 / norm_two;
  const double mu_cap = mu * 1e7;
  const double rho = 1.5;
  const double tol_abs = opts.tol * fro;

  for (int it = 0; it < opts.max_iters; ++it) {
    out.L = svt(X - out.S + Y / mu, 1.0 / mu);
    out.S = soft_threshold(X - out.L + Y / mu, lambda / mu);
    Matrix R = X - out.L - out.S;
    Y += mu * R;
    mu = std::min(rho * mu, mu_cap);
    out.iterations = it + 1;
    if (R.norm() <= tol_abs) {
      out.converged = true;
      break;
    }
  }
  if (!all_finite(out.L) || !all_finite(out.S))
    throw numerical_failure("rpca: iterates diverged to non-finite values after " +
                            std::to_string(out.iterations) + " iterations");
  return out;
}

ClassNoiseStats class_stats(const Matrix& class_block, const RpcaOptions& opts) {
  if (class_block.cols() < 1)
    throw invalid_input("class_stats: class block has no samples");
  RpcaResult dec = rpca(class_block, opts);

  ClassNoiseStats stats;
  stats.L = std::move(dec.L);
  stats.S_bar = dec.S.rowwise().mean();

  SvdFactors f = thin_svd(stats.L);
  Index r = 0;
  if (f.S.size() > 0 && f.S(0) > 0.0) {
    const double cutoff = 1e-8 * f.S(0);
    while (r < f.S.size() && f.S(r) > cutoff) ++r;
  }
  stats.basis = f.U.leftCols(r);
  return stats;
}

double reconstruction_error(const Vector& x, const ClassNoiseStats& stats) {
  if (x.size() != stats.S_bar.size())
    throw invalid_input("reconstruction_error: sample length " +
                        std::to_string(x.size()) + " does not match trained dim " +
                        std::to_string(stats.S_bar.size()));
  Vector r = x - stats.S_bar;
  if (stats.basis.cols() == 0) return r.squaredNorm();
  return (r - stats.basis * (stats.basis.transpose() * r)).squaredNorm();
}

FusionDecision fuse_and_classify(const ModelBundle& model,
                                 const std::array<Vector, 2>& z_test,
                                 const std::array<Vector, 2>& x_test) {
  FusionDecision out;
  for (int k = 0; k < 2; ++k)
    out.candidates[static_cast<std::size_t>(k)] =
        candidate_label(model.ridge[static_cast<std::size_t>(k)],
                        z_test[static_cast<std::size_t>(k)]).first;

  // Agreement needs no residual arbitration.
  if (out.candidates[0] == out.candidates[1]) {
    out.winner = out.candidates[0];
    return out;
  }

  out.residuals_evaluated = true;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      const int c = out.candidates[j];
      const auto& stats = model.class_stats[k];
      if (c < 0 || static_cast<std::size_t>(c) >= stats.size())
        throw invalid_state("fuse_and_classify: candidate class " + std::to_string(c) +
                            " has no trained noise statistics");
      out.errors[k][j] = reconstruction_error(x_test[k], stats[static_cast<std::size_t>(c)]);
    }
    const double sum = out.errors[k][0] + out.errors[k][1];
    if (sum > 0.0 && std::isfinite(sum)) {
      out.normalized[k][0] = out.errors[k][0] / sum;
      out.normalized[k][1] = out.errors[k][1] / sum;
    } else {
      out.normalized[k][0] = 0.5;
      out.normalized[k][1] = 0.5;
    }
  }

  const double score0 = out.normalized[0][0] + out.normalized[1][0];
  const double score1 = out.normalized[0][1] + out.normalized[1][1];
  if (score0 < score1)
    out.winner = out.candidates[0];
  else if (score1 < score0)
    out.winner = out.candidates[1];
  else
    out.winner = std::min(out.candidates[0], out.candidates[1]);
  return out;
}

}  // namespace mmsldl
