#ifndef MMSLDL_CLASSIFIER_HPP
#define MMSLDL_CLASSIFIER_HPP

#include <array>
#include <utility>
#include <vector>

#include "mmsldl/slrdl.hpp"
#include "mmsldl/types.hpp"

namespace mmsldl {

// Closed-form multivariate ridge scorer for one modality.
struct RidgeClassifier {
  Matrix W_hat;         // C x atom_count weight matrix
  Matrix H;             // C x n one-hot label matrix the fit used
  double lambda_ridge = 1.0;
  Matrix Q_score;       // C x atom_count, row c indicates class c's atom columns
};

// Low-rank / sparse-noise summary of one class's raw training block.
struct ClassNoiseStats {
  Matrix L;       // low-rank component, d x p_c
  Vector S_bar;   // columnwise mean of the sparse component
  Matrix basis;   // orthonormal basis of span(L), d x r_c
};

struct FusionDecision {
  std::array<int, 2> candidates{};          // per-modality argmax labels
  std::array<std::array<double, 2>, 2> errors{};      // [modality][candidate]
  std::array<std::array<double, 2>, 2> normalized{};  // [modality][candidate]
  int winner = -1;
  bool residuals_evaluated = false;  // false when candidates already agreed
};

struct RpcaOptions {
  double lambda = -1.0;  // <= 0 selects 1/sqrt(max(rows, cols))
  double tol = 1e-7;     // relative Frobenius feasibility
  int max_iters = 1000;
};

struct RpcaResult {
  Matrix L;
  Matrix S;
  int iterations = 0;
  bool converged = false;
};

Matrix build_label_matrix(const std::vector<int>& labels, Index num_classes);

// W_hat = H Z^T (Z Z^T + lambda I)^{-1}.
Matrix fit_ridge(const Matrix& Z, const Matrix& H, double lambda_ridge);

// Builds the C x atom_count class-indicator score matrix from the dictionary
// partition (the dimension-corrected ideal-code contribution).
Matrix build_score_code(const Dictionary& D);

// argmax of (W_hat + Q_score) z; ties break to the lowest class id.
std::pair<int, Vector> candidate_label(const RidgeClassifier& ridge, const Vector& z);

// Inexact augmented-Lagrangian decomposition X = L + S minimizing
// ||L||_* + lambda ||S||_1.
RpcaResult rpca(const Matrix& X, const RpcaOptions& opts = {});

// RPCA on a class's raw training block plus the derived projection basis.
ClassNoiseStats class_stats(const Matrix& class_block, const RpcaOptions& opts = {});

// Squared residual of (x - S_bar) after projection onto span(basis).
double reconstruction_error(const Vector& x, const ClassNoiseStats& stats);

struct ModelBundle;  // defined in trainer.hpp

// Full scheme: per-modality ridge candidates, then reconstruction-residual
// fusion over the two candidates when they disagree.
FusionDecision fuse_and_classify(const ModelBundle& model,
                                 const std::array<Vector, 2>& z_test,
                                 const std::array<Vector, 2>& x_test);

}  // namespace mmsldl

#endif
