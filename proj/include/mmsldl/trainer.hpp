#ifndef MMSLDL_TRAINER_HPP
#define MMSLDL_TRAINER_HPP

#include <array>
#include <string>
#include <vector>

#include "mmsldl/classifier.hpp"
#include "mmsldl/slrdl.hpp"
#include "mmsldl/types.hpp"

namespace mmsldl {

// Pixel geometry of the vectorized inputs for one modality. Zero when the
// modality was trained on raw feature vectors rather than images.
struct PlaneGeometry {
  int width = 0;
  int height = 0;
};

struct TrainOptions {
  double ridge_lambda = 1.0;  // regularizer for the label-projection fit
  RpcaOptions rpca;           // per-class noise separation settings
  int ksvd_rounds = 10;
  int ksvd_sparsity = 0;      // <=0 resolves to min(10, atoms / classes)

  void validate() const;
  int resolve_sparsity(Index total_atoms, Index num_classes) const;
};

// Everything needed to classify unseen samples. Immutable once trained;
// persistence round-trips it bit for bit.
struct ModelBundle {
  std::array<Dictionary, 2> dictionaries;
  std::array<Matrix, 2> train_codes;   // recoded without the coupling term
  std::array<Matrix, 2> train_errors;
  IdealCode ideal_code;
  std::array<RidgeClassifier, 2> ridge;
  std::array<std::vector<ClassNoiseStats>, 2> class_stats;
  Hyperparams hyperparams;
  TrainOptions options;
  std::vector<int> labels;             // sorted training labels
  std::vector<std::string> label_names;
  std::array<PlaneGeometry, 2> geometry;
  std::array<bool, 2> recode_converged{true, true};
  std::uint64_t seed = 0;

  Index num_classes() const { return dictionaries[0].num_classes(); }
  Index atom_count() const { return dictionaries[0].atom_count(); }
};

// One joint-coding + dictionary-refinement pass for one modality.
struct AlternationTrace {
  int alternation = 0;
  int modality = 0;
  CodingDiagnostics coding;
  int dict_iterations = 0;
  bool dict_converged = false;
};

struct TrainReport {
  std::vector<AlternationTrace> traces;
  std::vector<double> coupling_residuals;  // cross-modality code mismatch per alternation
  std::array<Matrix, 2> joint_codes;       // codes at the end of joint training
  int alternations = 0;
  bool dictionaries_converged = false;
};

// Codes samples against a fixed dictionary with the cross-modality coupling
// disabled. Used for the post-training recode and for test samples.
CodingResult code_samples(const Matrix& X, const Dictionary& D, const Hyperparams& h);

// One modality's step inside an alternation: joint coding against Z_other,
// then dictionary refinement until the update stalls. Updates D in place and
// returns the (rescaled) codes; trace receives per-stage diagnostics.
Matrix refine_modality(const Matrix& X, Dictionary& D, const IdealCode& ideal,
                       const Matrix& Z_other, const Hyperparams& h,
                       AlternationTrace* trace);

// Full two-modality training: per-class dictionary init, alternating joint
// coding + dictionary refinement, coupling-free recode, label projection fit
// and per-class noise statistics.
ModelBundle train(const Matrix& X1, const Matrix& X2, const std::vector<int>& labels,
                  const Hyperparams& h, const TrainOptions& opts = {},
                  TrainReport* report = nullptr);

// Single-modality ablation: same pipeline on one input set, with the coupling
// term pulling codes directly toward the ideal block code.
struct SingleModalityModel {
  Dictionary dictionary;
  Matrix train_codes;
  Matrix train_errors;
  IdealCode ideal_code;
  RidgeClassifier ridge;
  std::vector<ClassNoiseStats> class_stats;
  Hyperparams hyperparams;
  TrainOptions options;
  std::vector<int> labels;
};

SingleModalityModel train_single_modality(const Matrix& X, const std::vector<int>& labels,
                                          const Hyperparams& h, const TrainOptions& opts = {});

int classify_single(const SingleModalityModel& model, const Vector& x,
                    const Hyperparams& h);

}  // namespace mmsldl

#endif
