#include "mmsldl/trainer.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "mmsldl/errors.hpp"
#include "mmsldl/parallel.hpp"

namespace mmsldl {

namespace {

// Sorted labels 0..C-1, every class populated; returns per-class counts.
std::vector<Index> class_counts_checked(const std::vector<int>& labels) {
  if (labels.empty()) throw invalid_dataset("train: no training samples");
  if (!std::is_sorted(labels.begin(), labels.end()))
    throw invalid_input(
        "train: labels must be sorted by class; run the dataset through the "
        "ingestion sorter first");
  if (labels.front() != 0)
    throw invalid_dataset("train: class ids must start at 0, got " +
                          std::to_string(labels.front()));
  const int num_classes = labels.back() + 1;
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      throw invalid_dataset("train: class " + std::to_string(c) +
                            " has no training samples");
  return counts;
}

std::vector<Matrix> split_by_class(const Matrix& X, const std::vector<Index>& counts) {
  std::vector<Matrix> blocks;
  blocks.reserve(counts.size());
  Index offset = 0;
  for (Index p : counts) {
    blocks.push_back(X.middleCols(offset, p));
    offset += p;
  }
  return blocks;
}

void check_modality_input(const Matrix& X, std::size_t n, const char* name) {
  if (X.rows() < 1) throw invalid_input(std::string("train: ") + name + " has no rows");
  if (static_cast<std::size_t>(X.cols()) != n)
    throw invalid_input(std::string("train: ") + name + " has " +
                        std::to_string(X.cols()) + " columns for " + std::to_string(n) +
                        " labels");
  if (!all_finite(X))
    throw invalid_input(std::string("train: ") + name + " contains non-finite entries");
}

// Atom signs are free parameters (flipping an atom together with its code row
// leaves D·Z unchanged). Orient every atom toward its class's mean training
// sample so in-class responses come out predominantly positive — the
// class-indicator part of the scoring stage adds raw in-block coefficient
// sums and needs that orientation. `Z` (when given) has its rows flipped to
// keep the product intact.
void orient_atoms_to_class_means(Dictionary& D, const Matrix& X,
                                 const std::vector<Index>& counts, Matrix* Z) {
  Matrix atoms = D.atoms();
  Index col = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const Vector mean = X.middleCols(col, counts[c]).rowwise().mean();
    const auto [begin, atom_count] = D.class_range(static_cast<Index>(c));
    for (Index j = begin; j < begin + atom_count; ++j)
      if (mean.dot(atoms.col(j)) < 0.0) {
        atoms.col(j) = -atoms.col(j);
        if (Z) Z->row(j) = -Z->row(j);
      }
    col += counts[c];
  }
  D = Dictionary(std::move(atoms), D.class_offsets());
}

}  // namespace

void TrainOptions::validate() const {
  if (ridge_lambda < 0.0)
    throw invalid_parameter("TrainOptions: ridge_lambda must be >= 0");
  if (ksvd_rounds < 1) throw invalid_parameter("TrainOptions: ksvd_rounds must be >= 1");
  if (rpca.tol <= 0.0 || rpca.max_iters < 1)
    throw invalid_parameter("TrainOptions: rpca settings out of range");
}

int TrainOptions::resolve_sparsity(Index total_atoms, Index num_classes) const {
  if (ksvd_sparsity > 0) return ksvd_sparsity;
  const Index per_class = total_atoms / std::max<Index>(num_classes, 1);
  return static_cast<int>(std::max<Index>(1, std::min<Index>(10, per_class)));
}

CodingResult code_samples(const Matrix& X, const Dictionary& D, const Hyperparams& h) {
  Hyperparams local = h;
  local.alpha = 0.0;  // no cross-modality pull outside joint training
  return solve_coding(X, D, IdealCode{}, Matrix(), local);
}

Matrix refine_modality(const Matrix& X, Dictionary& D, const IdealCode& ideal,
                       const Matrix& Z_other, const Hyperparams& h,
                       AlternationTrace* trace) {
  CodingResult res = [&] {
    try {
      return solve_coding(X, D, ideal, Z_other, h);
    } catch (const numerical_failure& e) {
      throw numerical_failure(std::string("joint coding stage: ") + e.what());
    }
  }();
  if (trace) trace->coding = res.diagnostics;

  SolverState state = std::move(res.final_state);
  bool converged = false;
  int steps = 0;
  try {
    for (; steps < h.max_dict_iters && !converged; ++steps) {
      Dictionary next = update_dictionary(D, state, X, h);
      converged = dictionary_converged(next, D, h);
      D = std::move(next);
    }
  } catch (const numerical_failure& e) {
    throw numerical_failure(std::string("dictionary update stage: ") + e.what());
  }
  if (trace) {
    trace->dict_iterations = steps;
    trace->dict_converged = converged;
  }
  return std::move(state.Z);
}

ModelBundle train(const Matrix& X1, const Matrix& X2, const std::vector<int>& labels,
                  const Hyperparams& h, const TrainOptions& opts, TrainReport* report) {
  h.validate();
  opts.validate();
  const std::vector<Index> counts = class_counts_checked(labels);
  check_modality_input(X1, labels.size(), "modality 1");
  check_modality_input(X2, labels.size(), "modality 2");

  const Index num_classes = static_cast<Index>(counts.size());
  const Index n = static_cast<Index>(labels.size());
  const int sparsity = opts.resolve_sparsity(n, num_classes);

  ModelBundle model;
  model.hyperparams = h;
  model.options = opts;
  model.labels = labels;
  model.ideal_code = build_ideal_code(labels, counts);

  const std::array<const Matrix*, 2> inputs{&X1, &X2};
  for (std::size_t k = 0; k < 2; ++k)
    model.dictionaries[k] = ksvd_init(split_by_class(*inputs[k], counts), counts,
                                      sparsity, opts.ksvd_rounds);

  TrainReport local_report;
  TrainReport& rep = report ? *report : local_report;
  rep.traces.clear();
  rep.coupling_residuals.clear();

  // Alternation: modality 1 codes against the other side's latest codes
  // (zero on the very first pass, so the coupling term starts inert).
  std::array<Matrix, 2> joint_codes{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  bool outer_converged = false;
  int alternations = 0;
  while (alternations < h.max_outer_alternations && !outer_converged) {
    const std::array<Matrix, 2> previous_atoms{model.dictionaries[0].atoms(),
                                               model.dictionaries[1].atoms()};
    for (std::size_t k = 0; k < 2; ++k) {
      AlternationTrace trace;
      trace.alternation = alternations;
      trace.modality = static_cast<int>(k);
      try {
        joint_codes[k] = refine_modality(*inputs[k], model.dictionaries[k],
                                         model.ideal_code, joint_codes[1 - k], h, &trace);
      } catch (const numerical_failure& e) {
        throw numerical_failure("train: modality " + std::to_string(k + 1) +
                                ", alternation " + std::to_string(alternations) + ", " +
                                e.what());
      }
      rep.traces.push_back(std::move(trace));
    }
    rep.coupling_residuals.push_back(
        (joint_codes[0] * joint_codes[1].transpose() - model.ideal_code.Q).norm());
    ++alternations;

    outer_converged = true;
    for (std::size_t k = 0; k < 2; ++k) {
      Dictionary previous(previous_atoms[k], model.dictionaries[k].class_offsets());
      outer_converged =
          outer_converged && dictionary_converged(model.dictionaries[k], previous, h);
    }
  }
  for (std::size_t k = 0; k < 2; ++k)
    orient_atoms_to_class_means(model.dictionaries[k], *inputs[k], counts,
                                &joint_codes[k]);
  rep.alternations = alternations;
  rep.dictionaries_converged = outer_converged;
  rep.joint_codes = joint_codes;

  // Freeze dictionaries; recode without the coupling term for classification.
  Matrix H = build_label_matrix(labels, num_classes);
  for (std::size_t k = 0; k < 2; ++k) try {
    CodingResult recode = code_samples(*inputs[k], model.dictionaries[k], h);
    model.train_codes[k] = std::move(recode.Z);
    model.train_errors[k] = std::move(recode.E);
    model.recode_converged[k] = recode.diagnostics.converged;

    model.ridge[k].H = H;
    model.ridge[k].lambda_ridge = opts.ridge_lambda;
    model.ridge[k].W_hat = fit_ridge(model.train_codes[k], H, opts.ridge_lambda);
    model.ridge[k].Q_score = build_score_code(model.dictionaries[k]);
  } catch (const numerical_failure& e) {
    throw numerical_failure("train: modality " + std::to_string(k + 1) +
                            ", recode/classifier-fit stage, " + e.what());
  }

  for (auto& stats : model.class_stats)
    stats.resize(static_cast<std::size_t>(num_classes));
  parallel_for(2 * num_classes, [&](Index i) {
    const std::size_t k = static_cast<std::size_t>(i / num_classes);
    const Index c = i % num_classes;
    Index offset = 0;
    for (Index cc = 0; cc < c; ++cc) offset += counts[static_cast<std::size_t>(cc)];
    const Matrix block =
        inputs[k]->middleCols(offset, counts[static_cast<std::size_t>(c)]);
    try {
      model.class_stats[k][static_cast<std::size_t>(c)] = class_stats(block, opts.rpca);
    } catch (const numerical_failure& e) {
      throw numerical_failure("train: modality " + std::to_string(k + 1) +
                              ", class " + std::to_string(c) +
                              " noise-statistics stage, " + e.what());
    }
  });

  model.label_names.reserve(static_cast<std::size_t>(num_classes));
  for (Index c = 0; c < num_classes; ++c)
    model.label_names.push_back("class_" + std::to_string(c));
  return model;
}

SingleModalityModel train_single_modality(const Matrix& X, const std::vector<int>& labels,
                                          const Hyperparams& h, const TrainOptions& opts) {
  h.validate();
  opts.validate();
  const std::vector<Index> counts = class_counts_checked(labels);
  check_modality_input(X, labels.size(), "modality");

  const Index num_classes = static_cast<Index>(counts.size());
  const Index n = static_cast<Index>(labels.size());
  const int sparsity = opts.resolve_sparsity(n, num_classes);

  SingleModalityModel model;
  model.hyperparams = h;
  model.options = opts;
  model.labels = labels;
  model.ideal_code = build_ideal_code(labels, counts);
  model.dictionary = ksvd_init(split_by_class(X, counts), counts, sparsity,
                               opts.ksvd_rounds);

  // With the partner codes pinned to the identity, the coupling term pulls
  // this modality's codes straight toward the ideal block code.
  const Matrix identity_partner = Matrix::Identity(n, n);
  bool converged = false;
  for (int a = 0; a < h.max_outer_alternations && !converged; ++a) {
    const Matrix previous_atoms = model.dictionary.atoms();
    refine_modality(X, model.dictionary, model.ideal_code, identity_partner, h, nullptr);
    Dictionary previous(previous_atoms, model.dictionary.class_offsets());
    converged = dictionary_converged(model.dictionary, previous, h);
  }
  orient_atoms_to_class_means(model.dictionary, X, counts, nullptr);

  CodingResult recode = code_samples(X, model.dictionary, h);
  model.train_codes = std::move(recode.Z);
  model.train_errors = std::move(recode.E);

  Matrix H = build_label_matrix(labels, num_classes);
  model.ridge.H = H;
  model.ridge.lambda_ridge = opts.ridge_lambda;
  model.ridge.W_hat = fit_ridge(model.train_codes, H, opts.ridge_lambda);
  model.ridge.Q_score = build_score_code(model.dictionary);

  model.class_stats.resize(static_cast<std::size_t>(num_classes));
  parallel_for(num_classes, [&](Index c) {
    Index offset = 0;
    for (Index cc = 0; cc < c; ++cc) offset += counts[static_cast<std::size_t>(cc)];
    const Matrix block = X.middleCols(offset, counts[static_cast<std::size_t>(c)]);
    model.class_stats[static_cast<std::size_t>(c)] = class_stats(block, opts.rpca);
  });
  return model;
}

int classify_single(const SingleModalityModel& model, const Vector& x,
                    const Hyperparams& h) {
  if (x.size() != model.dictionary.dim())
    throw invalid_input("classify_single: sample length " + std::to_string(x.size()) +
                        " does not match trained dim " +
                        std::to_string(model.dictionary.dim()));
  Matrix column = x;
  CodingResult coded = code_samples(column, model.dictionary, h);
  return candidate_label(model.ridge, coded.Z.col(0)).first;
}

}  // namespace mmsldl
