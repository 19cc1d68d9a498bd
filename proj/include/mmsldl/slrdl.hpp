#ifndef MMSLDL_SLRDL_HPP
#define MMSLDL_SLRDL_HPP

#include <vector>

#include "mmsldl/types.hpp"

namespace mmsldl {

struct Hyperparams {
  double alpha = 1e-3;    // weight of the cross-modality ideal-code term
  double beta = 1e-2;     // l1 weight on the code copy W
  double lambda = 0.3;    // l1 weight on the sparse error E
  double gamma = 0.5;     // dictionary damping in [0, 1]
  double mu0 = 1e-6;      // initial penalty
  double rho = 1.1;       // penalty growth factor
  double mu_max = 1e30;   // penalty cap
  double eps_solver = 1e-8;
  double eps_dict = 1e-5;
  int max_inner_iters = 500;
  int max_dict_iters = 20;
  int max_outer_alternations = 10;

  void validate() const;  // throws invalid_parameter on a bad field
};

// Column-partitioned atom matrix; one contiguous block of atoms per class.
class Dictionary {
public:
  Dictionary() = default;
  Dictionary(Matrix atoms, std::vector<Index> class_offsets);

  const Matrix& atoms() const { return atoms_; }
  const std::vector<Index>& class_offsets() const { return offsets_; }

  Index dim() const { return atoms_.rows(); }
  Index atom_count() const { return atoms_.cols(); }
  Index num_classes() const {
    return offsets_.empty() ? 0 : static_cast<Index>(offsets_.size()) - 1;
  }
  // (first column, column count) of class c's sub-dictionary.
  std::pair<Index, Index> class_range(Index c) const;

  // Rescales every atom to unit norm; returns the norms that were divided
  // out so code rows can be scaled inversely. Columns with ~zero norm are
  // left untouched and report norm 1.
  Vector normalize_atoms();

private:
  Matrix atoms_;
  std::vector<Index> offsets_;  // size C+1, offsets_[0] == 0
};

// Block-diagonal target matrix: block of class c is p_c x p_c filled with p_c.
struct IdealCode {
  Matrix Q;
  std::vector<Index> per_class_counts;
};

IdealCode build_ideal_code(const std::vector<int>& labels,
                           const std::vector<Index>& atoms_per_class);

// Iterate bundle of the inner augmented-Lagrangian solver for one modality.
struct SolverState {
  Matrix Z;   // codes, atom_count x n
  Matrix W;   // auxiliary copy of Z
  Matrix E;   // sparse error, d x n
  Matrix Y;   // multiplier for X - D Z - E
  Matrix M;   // multiplier for Z - W
  double mu = 0.0;
  double eta = 0.0;  // cached squared spectral norm of the dictionary
  int iter = 0;
};

struct CodingDiagnostics {
  std::vector<double> feasibility_residuals;  // ||X - D Z - E||_inf per iteration
  std::vector<double> gap_residuals;          // ||Z - W||_inf per iteration
  int iterations = 0;
  bool converged = false;
};

struct CodingResult {
  Matrix Z;
  Matrix E;
  SolverState final_state;  // full iterate bundle, consumed by dictionary refits
  CodingDiagnostics diagnostics;
};

Matrix update_Z(const SolverState& state, const Dictionary& D, const Matrix& X,
                const IdealCode& ideal, const Matrix& Z_other, const Hyperparams& h);
Matrix update_W(const SolverState& state, const Hyperparams& h);
Matrix update_E(const SolverState& state, const Dictionary& D, const Matrix& X,
                const Hyperparams& h);
void update_multipliers_and_penalty(SolverState& state, const Dictionary& D,
                                    const Matrix& X, const Hyperparams& h);
bool coding_converged(const SolverState& state, const Dictionary& D, const Matrix& X,
                      const Hyperparams& h);

// The inner while-loop: alternate Z, W, E and multiplier updates until both
// max-entry residuals drop below eps_solver or the iteration cap is reached.
// Hitting the cap is reported through diagnostics.converged, not an error.
// Z_other may be empty only when h.alpha == 0.
CodingResult solve_coding(const Matrix& X, const Dictionary& D, const IdealCode& ideal,
                          const Matrix& Z_other, const Hyperparams& h);

// Damped least-squares dictionary step. Atoms are renormalized to unit norm
// and state.Z rows are scaled inversely so the product D * Z is preserved.
// gamma == 1 returns D unchanged.
Dictionary update_dictionary(const Dictionary& D, SolverState& state, const Matrix& X,
                             const Hyperparams& h);

bool dictionary_converged(const Dictionary& d_new, const Dictionary& d_old,
                          const Hyperparams& h);

// Greedy sparse coding: pick atoms by max absolute residual correlation,
// least-squares refit on the active set each step.
Vector omp_sparse_code(const Dictionary& D, const Vector& x, int sparsity);

// Per-class KSVD. error_trace, when given, receives the squared Frobenius
// reconstruction error after each refinement round.
Matrix ksvd_learn_class(const Matrix& samples, Index atom_count, int sparsity,
                        int rounds, std::vector<double>* error_trace = nullptr);

// KSVD per class, class dictionaries concatenated in class order.
Dictionary ksvd_init(const std::vector<Matrix>& samples_per_class,
                     const std::vector<Index>& atoms_per_class, int sparsity,
                     int rounds);

}  // namespace mmsldl

#endif
