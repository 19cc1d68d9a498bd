#include "mmsldl/slrdl.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "mmsldl/errors.hpp"
#include "mmsldl/prox_ops.hpp"

namespace mmsldl {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

// Flip a singular pair so the largest-magnitude entry of u is positive.
void fix_sign(Eigen::Ref<Vector> u, Eigen::Ref<Vector> v) {
  Index imax = 0;
  u.cwiseAbs().maxCoeff(&imax);
  if (u(imax) < 0.0) {
    u = -u;
    v = -v;
  }
}

}  // namespace

void Hyperparams::validate() const {
  if (alpha < 0.0) throw invalid_parameter("Hyperparams: alpha must be >= 0");
  if (beta < 0.0) throw invalid_parameter("Hyperparams: beta must be >= 0");
  if (lambda < 0.0) throw invalid_parameter("Hyperparams: lambda must be >= 0");
  if (gamma < 0.0 || gamma > 1.0)
    throw invalid_parameter("Hyperparams: gamma must be in [0, 1]");
  if (mu0 <= 0.0) throw invalid_parameter("Hyperparams: mu0 must be > 0");
  if (rho <= 1.0) throw invalid_parameter("Hyperparams: rho must be > 1");
  if (mu_max < mu0) throw invalid_parameter("Hyperparams: mu_max must be >= mu0");
  if (eps_solver <= 0.0) throw invalid_parameter("Hyperparams: eps_solver must be > 0");
  if (eps_dict <= 0.0) throw invalid_parameter("Hyperparams: eps_dict must be > 0");
  if (max_inner_iters < 1 || max_dict_iters < 1 || max_outer_alternations < 1)
    throw invalid_parameter("Hyperparams: iteration caps must be >= 1");
}

Dictionary::Dictionary(Matrix atoms, std::vector<Index> class_offsets)
    : atoms_(std::move(atoms)), offsets_(std::move(class_offsets)) {
  if (offsets_.size() < 2 || offsets_.front() != 0 ||
      offsets_.back() != atoms_.cols())
    throw invalid_configuration(
        "Dictionary: class offsets must partition [0, atom_count)");
  for (std::size_t i = 1; i < offsets_.size(); ++i)
    if (offsets_[i] <= offsets_[i - 1])
      throw invalid_configuration("Dictionary: every class needs at least one atom");
}

std::pair<Index, Index> Dictionary::class_range(Index c) const {
  if (c < 0 || c >= num_classes())
    throw invalid_input("Dictionary: class id out of range");
  return {offsets_[c], offsets_[c + 1] - offsets_[c]};
}

Vector Dictionary::normalize_atoms() {
  Vector norms = Vector::Ones(atoms_.cols());
  for (Index j = 0; j < atoms_.cols(); ++j) {
    const double n = atoms_.col(j).norm();
    if (n > 1e-14) {
      atoms_.col(j) /= n;
      norms(j) = n;
    }
  }
  return norms;
}

IdealCode build_ideal_code(const std::vector<int>& labels,
                           const std::vector<Index>& atoms_per_class) {
  if (!std::is_sorted(labels.begin(), labels.end()))
    throw invalid_input(
        "build_ideal_code: labels must be sorted by class; run the dataset "
        "through the ingestion sorter first");
  const Index num_classes = static_cast<Index>(atoms_per_class.size());
  std::vector<Index> counts(atoms_per_class.size(), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes)
      throw invalid_input("build_ideal_code: label out of range: " + std::to_string(l));
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] != atoms_per_class[c])
      throw invalid_configuration(
          "build_ideal_code: atoms_per_class[" + std::to_string(c) + "] = " +
          std::to_string(atoms_per_class[c]) + " does not match the class sample count " +
          std::to_string(counts[c]));

  const Index total = std::accumulate(atoms_per_class.begin(), atoms_per_class.end(),
                                      Index{0});
  IdealCode code;
  code.Q = Matrix::Zero(total, total);
  code.per_class_counts = atoms_per_class;
  Index offset = 0;
  for (Index c = 0; c < num_classes; ++c) {
    const Index p = atoms_per_class[static_cast<std::size_t>(c)];
    code.Q.block(offset, offset, p, p).setConstant(static_cast<double>(p));
    offset += p;
  }
  return code;
}

Matrix update_Z(const SolverState& state, const Dictionary& D, const Matrix& X,
                const IdealCode& ideal, const Matrix& Z_other, const Hyperparams& h) {
  const Index d = D.dim();
  const Index ca = D.atom_count();
  const Index n = X.cols();
  if (X.rows() != d || state.Z.rows() != ca || state.Z.cols() != n ||
      state.W.rows() != ca || state.E.rows() != d || state.E.cols() != n)
    throw invalid_input("update_Z: inconsistent shapes (X " + shape_str(X) + ", Z " +
                        shape_str(state.Z) + ", dictionary " + shape_str(D.atoms()) + ")");
  if (state.mu <= 0.0) throw invalid_state("update_Z: mu must be positive");
  if (state.eta <= 0.0)
    throw invalid_state("update_Z: eta must be positive; cache spectral_norm(D)^2 first");
  if (h.alpha != 0.0 && (Z_other.rows() != ca || Z_other.cols() != n))
    throw invalid_input("update_Z: Z_other shape " + shape_str(Z_other) +
                        " does not match codes " + shape_str(state.Z));

  const double mu = state.mu;
  Matrix grad = mu * (-(D.atoms().transpose() *
                        (X - D.atoms() * state.Z - state.E + state.Y / mu)) +
                      (state.Z - state.W + state.M / mu));
  // Proximal weight: the linearized step must majorize the curvature of the
  // whole smooth part. The penalty terms contribute eta*mu; the coupling term
  // adds up to 2*alpha*||Z_other||_2^2 (bounded here by the cheaper Frobenius
  // norm), which matters only while mu is still tiny — without it the
  // coupling gradient, divided by eta*mu, blows the early iterates up. With
  // alpha = 0 or Z_other = 0 the weight is exactly eta*mu.
  double weight = state.eta * mu;
  if (h.alpha != 0.0) {
    grad.noalias() +=
        2.0 * h.alpha * (state.Z * Z_other.transpose() - ideal.Q) * Z_other;
    weight += 2.0 * h.alpha * Z_other.squaredNorm();
  }

  if (!all_finite(grad)) {
    std::ostringstream os;
    os << "update_Z: non-finite gradient at inner iteration " << state.iter
       << " (mu=" << mu << ", eta=" << state.eta
       << ", |Z|=" << max_abs(state.Z) << ", |E|=" << max_abs(state.E)
       << ", |Y|=" << max_abs(state.Y) << ", |M|=" << max_abs(state.M) << ")";
    throw numerical_failure(os.str());
  }

  const double scale = 1.0 / weight;
  return svt(state.Z - scale * grad, scale);
}

Matrix update_W(const SolverState& state, const Hyperparams& h) {
  if (state.mu <= 0.0) throw invalid_state("update_W: mu must be positive");
  return soft_threshold(state.Z + state.M / state.mu, h.beta / state.mu);
}

Matrix update_E(const SolverState& state, const Dictionary& D, const Matrix& X,
                const Hyperparams& h) {
  if (state.mu <= 0.0) throw invalid_state("update_E: mu must be positive");
  return soft_threshold(state.Y / state.mu + X - D.atoms() * state.Z,
                        h.lambda / state.mu);
}

void update_multipliers_and_penalty(SolverState& state, const Dictionary& D,
                                    const Matrix& X, const Hyperparams& h) {
  if (state.Y.rows() != X.rows() || state.Y.cols() != X.cols() ||
      state.M.rows() != state.Z.rows() || state.M.cols() != state.Z.cols())
    throw invalid_input("update_multipliers_and_penalty: multiplier shapes mismatch");
  state.Y.noalias() += state.mu * (X - D.atoms() * state.Z - state.E);
  state.M.noalias() += state.mu * (state.Z - state.W);
  state.mu = std::min(h.rho * state.mu, h.mu_max);
  ++state.iter;
}

bool coding_converged(const SolverState& state, const Dictionary& D, const Matrix& X,
                      const Hyperparams& h) {
  const double feas = max_abs(X - D.atoms() * state.Z - state.E);
  const double gap = max_abs(state.Z - state.W);
  return feas < h.eps_solver && gap < h.eps_solver;
}

CodingResult solve_coding(const Matrix& X, const Dictionary& D, const IdealCode& ideal,
                          const Matrix& Z_other, const Hyperparams& h) {
  h.validate();
  if (D.atom_count() == 0) throw invalid_state("solve_coding: dictionary is empty");
  if (X.rows() != D.dim())
    throw invalid_input("solve_coding: X rows " + std::to_string(X.rows()) +
                        " do not match dictionary dim " + std::to_string(D.dim()));
  if (Z_other.size() == 0 && h.alpha != 0.0)
    throw invalid_configuration(
        "solve_coding: alpha > 0 requires the other modality's codes");

  const Index ca = D.atom_count();
  const Index n = X.cols();

  SolverState state;
  state.Z = Matrix::Zero(ca, n);
  state.W = Matrix::Zero(ca, n);
  state.E = Matrix::Zero(X.rows(), n);
  state.Y = Matrix::Zero(X.rows(), n);
  state.M = Matrix::Zero(ca, n);
  state.mu = h.mu0;
  const double norm2 = spectral_norm(D.atoms());
  if (norm2 <= 0.0)
    throw invalid_state("solve_coding: dictionary has zero spectral norm");
  state.eta = norm2 * norm2;

  CodingResult result;
  result.diagnostics.feasibility_residuals.reserve(h.max_inner_iters);
  result.diagnostics.gap_residuals.reserve(h.max_inner_iters);

  // Track the best iterate so a capped run still returns its least-infeasible
  // codes rather than whatever the last step produced.
  double best_residual = std::numeric_limits<double>::infinity();
  Matrix best_Z = state.Z;
  Matrix best_E = state.E;

  for (int j = 0; j < h.max_inner_iters; ++j) {
    try {
      state.Z = update_Z(state, D, X, ideal, Z_other, h);
      state.W = update_W(state, h);
      state.E = update_E(state, D, X, h);
    } catch (const numerical_failure& e) {
      std::ostringstream os;
      os << e.what() << "; residual history:";
      const auto& fr = result.diagnostics.feasibility_residuals;
      for (std::size_t k = fr.size() >= 5 ? fr.size() - 5 : 0; k < fr.size(); ++k)
        os << " " << fr[k];
      throw numerical_failure(os.str());
    }
    const double feas = max_abs(X - D.atoms() * state.Z - state.E);
    const double gap = max_abs(state.Z - state.W);
    update_multipliers_and_penalty(state, D, X, h);
    result.diagnostics.feasibility_residuals.push_back(feas);
    result.diagnostics.gap_residuals.push_back(gap);
    result.diagnostics.iterations = state.iter;
    if (std::max(feas, gap) < best_residual) {
      best_residual = std::max(feas, gap);
      best_Z = state.Z;
      best_E = state.E;
    }
    if (feas < h.eps_solver && gap < h.eps_solver) {
      result.diagnostics.converged = true;
      break;
    }
  }

  result.Z = result.diagnostics.converged ? state.Z : std::move(best_Z);
  result.E = result.diagnostics.converged ? state.E : std::move(best_E);
  result.final_state = std::move(state);
  return result;
}

Dictionary update_dictionary(const Dictionary& D, SolverState& state, const Matrix& X,
                             const Hyperparams& h) {
  if (h.gamma == 1.0) return D;  // damping fixes the dictionary exactly
  if (state.Z.cols() != X.cols() || state.Z.rows() != D.atom_count())
    throw invalid_input("update_dictionary: code shape " + shape_str(state.Z) +
                        " inconsistent with X " + shape_str(X));
  if (state.mu <= 0.0) throw invalid_state("update_dictionary: mu must be positive");

  const Index ca = D.atom_count();
  Matrix gram = state.Z * state.Z.transpose();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double ev_max = eig.eigenvalues().maxCoeff();
  const double ev_min = eig.eigenvalues().minCoeff();
  const bool ill = ev_max <= 0.0 || ev_min <= 0.0 || ev_max / std::max(ev_min, 1e-300) > 1e12;
  if (ill) {
    const double floor = 1e-10 * gram.trace() / static_cast<double>(ca);
    if (floor <= 0.0) {
      std::ostringstream os;
      os << "update_dictionary: Z Z^T is singular; classes with zero code rows:";
      for (Index c = 0; c < D.num_classes(); ++c) {
        auto [begin, count] = D.class_range(c);
        if (state.Z.middleRows(begin, count).cwiseAbs().maxCoeff() <= 0.0)
          os << " " << c;
      }
      throw numerical_failure(os.str());
    }
    gram.diagonal().array() += floor;
  }

  const Matrix rhs = (state.Y / state.mu + X - state.E) * state.Z.transpose();
  // D_update solves D * gram = rhs.
  const Matrix d_update = gram.ldlt().solve(rhs.transpose()).transpose();
  if (!all_finite(d_update))
    throw numerical_failure("update_dictionary: least-squares step produced non-finite atoms");

  Dictionary updated(h.gamma * D.atoms() + (1.0 - h.gamma) * d_update,
                     D.class_offsets());
  const Vector norms = updated.normalize_atoms();
  for (Index j = 0; j < ca; ++j) state.Z.row(j) *= norms(j);
  return updated;
}

bool dictionary_converged(const Dictionary& d_new, const Dictionary& d_old,
                          const Hyperparams& h) {
  if (d_new.atoms().rows() != d_old.atoms().rows() ||
      d_new.atoms().cols() != d_old.atoms().cols())
    throw invalid_input("dictionary_converged: dictionaries differ in shape");
  return max_abs(d_new.atoms() - d_old.atoms()) < h.eps_dict;
}

namespace {

Vector omp_on_matrix(const Matrix& atoms, const Vector& x, int sparsity) {
  const Index ca = atoms.cols();
  Vector coeffs = Vector::Zero(ca);
  const double xnorm = x.norm();
  if (xnorm == 0.0) return coeffs;

  std::vector<Index> active;
  active.reserve(static_cast<std::size_t>(sparsity));
  std::vector<bool> used(static_cast<std::size_t>(ca), false);
  Vector residual = x;
  Vector weights;

  for (int t = 0; t < sparsity; ++t) {
    Vector corr = atoms.transpose() * residual;
    for (Index j : active) corr(j) = 0.0;
    Index pick = 0;
    const double best = corr.cwiseAbs().maxCoeff(&pick);
    if (best <= 1e-12 * xnorm) break;
    active.push_back(pick);
    used[static_cast<std::size_t>(pick)] = true;

    Matrix sub(atoms.rows(), static_cast<Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) sub.col(static_cast<Index>(k)) = atoms.col(active[k]);
    weights = sub.colPivHouseholderQr().solve(x);
    residual = x - sub * weights;
    if (residual.norm() <= 1e-13 * xnorm) break;
  }
  for (std::size_t k = 0; k < active.size(); ++k)
    coeffs(active[k]) = weights(static_cast<Index>(k));
  return coeffs;
}

}  // namespace

Vector omp_sparse_code(const Dictionary& D, const Vector& x, int sparsity) {
  if (sparsity < 1 || sparsity > D.atom_count())
    throw invalid_parameter("omp_sparse_code: sparsity must be in [1, atom_count]");
  if (x.size() != D.dim())
    throw invalid_input("omp_sparse_code: sample length does not match dictionary dim");
  return omp_on_matrix(D.atoms(), x, sparsity);
}

Matrix ksvd_learn_class(const Matrix& samples, Index atom_count, int sparsity,
                        int rounds, std::vector<double>* error_trace) {
  const Index d = samples.rows();
  const Index p = samples.cols();
  if (p == 0) throw invalid_input("ksvd_learn_class: class has zero samples");
  if (atom_count < 1 || atom_count > p)
    throw invalid_configuration(
        "ksvd_learn_class: atom count must be in [1, samples per class]");
  if (sparsity < 1 || rounds < 1)
    throw invalid_parameter("ksvd_learn_class: sparsity and rounds must be positive");
  sparsity = static_cast<int>(std::min<Index>(sparsity, atom_count));

  Matrix dict = samples.leftCols(atom_count);
  for (Index j = 0; j < atom_count; ++j) {
    const double n = dict.col(j).norm();
    if (n > 1e-14)
      dict.col(j) /= n;
    else
      dict.col(j) = Vector::Unit(d, j % d);
  }

  Matrix codes(atom_count, p);
  for (int round = 0; round < rounds; ++round) {
    for (Index i = 0; i < p; ++i)
      codes.col(i) = omp_on_matrix(dict, samples.col(i), sparsity);

    for (Index j = 0; j < atom_count; ++j) {
      std::vector<Index> using_atom;
      for (Index i = 0; i < p; ++i)
        if (codes(j, i) != 0.0) using_atom.push_back(i);

      if (using_atom.empty()) {
        // Unused atom: recycle the worst-represented sample.
        Index worst = 0;
        double worst_err = -1.0;
        for (Index i = 0; i < p; ++i) {
          const double err = (samples.col(i) - dict * codes.col(i)).squaredNorm();
          if (err > worst_err) {
            worst_err = err;
            worst = i;
          }
        }
        const double n = samples.col(worst).norm();
        if (n > 1e-14) dict.col(j) = samples.col(worst) / n;
        continue;
      }

      const Index m = static_cast<Index>(using_atom.size());
      Matrix restricted(d, m);
      Matrix sub_codes(atom_count, m);
      for (Index k = 0; k < m; ++k) {
        restricted.col(k) = samples.col(using_atom[static_cast<std::size_t>(k)]);
        sub_codes.col(k) = codes.col(using_atom[static_cast<std::size_t>(k)]);
      }
      // Residual with atom j's contribution added back.
      Matrix rank1_target = restricted - dict * sub_codes +
                            dict.col(j) * sub_codes.row(j);
      Eigen::JacobiSVD<Matrix> svd(rank1_target,
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
      Vector u = svd.matrixU().col(0);
      Vector v = svd.matrixV().col(0);
      fix_sign(u, v);
      dict.col(j) = u;
      const double s = svd.singularValues()(0);
      for (Index k = 0; k < m; ++k)
        codes(j, using_atom[static_cast<std::size_t>(k)]) = s * v(k);
    }

    if (error_trace)
      error_trace->push_back((samples - dict * codes).squaredNorm());
  }

  // Atom signs are free parameters; orient each toward the class mean so
  // in-class code responses start out predominantly positive, matching the
  // positive ideal-code targets downstream.
  const Vector mean = samples.rowwise().mean();
  for (Index j = 0; j < atom_count; ++j)
    if (mean.dot(dict.col(j)) < 0.0) dict.col(j) = -dict.col(j);
  return dict;
}

Dictionary ksvd_init(const std::vector<Matrix>& samples_per_class,
                     const std::vector<Index>& atoms_per_class, int sparsity,
                     int rounds) {
  if (samples_per_class.empty())
    throw invalid_input("ksvd_init: no classes given");
  if (samples_per_class.size() != atoms_per_class.size())
    throw invalid_configuration("ksvd_init: atoms_per_class size mismatch");

  const Index d = samples_per_class.front().rows();
  const Index total = std::accumulate(atoms_per_class.begin(), atoms_per_class.end(),
                                      Index{0});
  Matrix atoms(d, total);
  std::vector<Index> offsets{0};
  Index col = 0;
  for (std::size_t c = 0; c < samples_per_class.size(); ++c) {
    if (samples_per_class[c].rows() != d)
      throw invalid_input("ksvd_init: class " + std::to_string(c) +
                          " has mismatched sample dimension");
    const Matrix class_dict =
        ksvd_learn_class(samples_per_class[c], atoms_per_class[c], sparsity, rounds);
    atoms.middleCols(col, atoms_per_class[c]) = class_dict;
    col += atoms_per_class[c];
    offsets.push_back(col);
  }
  return Dictionary(std::move(atoms), std::move(offsets));
}

}  // namespace mmsldl
