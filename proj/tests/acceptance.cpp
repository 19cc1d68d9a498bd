// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criterion 11 needs an external dataset and prints SKIP when the
// MMSLDL_YALEB_DIR environment variable is not set.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmsldl/classifier.hpp"
#include "mmsldl/data_io.hpp"
#include "mmsldl/errors.hpp"
#include "mmsldl/modality.hpp"
#include "mmsldl/prox_ops.hpp"
#include "mmsldl/slrdl.hpp"
#include "mmsldl/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmsldl;

namespace {

int g_failures = 0;

void report(int idx, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << idx << ": " << detail << "\n";
  if (!pass) ++g_failures;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// --- criterion 1: proximal operators vs brute-force oracles -----------------

void criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim_dist(1, 20);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  std::uniform_real_distribution<double> tau_dist(0.01, 1.5);
  double worst_soft = 0.0, worst_svt = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index rows = dim_dist(rng), cols = dim_dist(rng);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = val(rng);
    const double tau = tau_dist(rng);

    Matrix soft_oracle(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) {
        const double x = m(i, j);
        const double mag = std::abs(x) - tau;
        soft_oracle(i, j) = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
      }
    worst_soft = std::max(worst_soft,
                          (soft_threshold(m, tau) - soft_oracle).cwiseAbs().maxCoeff());

    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix sigma = Matrix::Zero(rows, cols);
    const Vector s = svd.singularValues();
    for (Index i = 0; i < s.size(); ++i) sigma(i, i) = std::max(s(i) - tau, 0.0);
    const Matrix svt_oracle = svd.matrixU() * sigma * svd.matrixV().transpose();
    worst_svt = std::max(worst_svt, (svt(m, tau) - svt_oracle).cwiseAbs().maxCoeff());
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_soft <= 1e-10 && worst_svt <= 1e-10 && elapsed < 5.0;
  report(1, pass,
         "entrywise and singular-value shrinkage match brute-force oracles on 100 random "
         "matrices up to 20x20: max abs diff " + num(std::max(worst_soft, worst_svt)) +
         " (tol 1e-10), " + num(elapsed) + " s (limit 5)");
}

// --- criterion 2: low-rank + sparse planted recovery -------------------------

void criterion2() {
  auto t0 = std::chrono::steady_clock::now();
  const Index n = 50;
  int successes = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed * 2654435761ULL + 12345);
    const Matrix A = gaussian_matrix(n, 2, rng);
    const Matrix B = gaussian_matrix(n, 2, rng);
    const Matrix L_true = A * B.transpose();

    // Additive planted spikes: replacing entries instead would make effective
    // errors of size |±1 - L_ij|, some of them near zero, and the planted pair
    // stops being the unique optimum of the convex program.
    Matrix X = L_true;
    std::vector<Index> idx(static_cast<std::size_t>(n * n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
    const int spikes = static_cast<int>(n * n / 20);  // 5%
    for (int k = 0; k < spikes; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
      std::swap(idx[static_cast<std::size_t>(k)], idx[pick(rng)]);
      const Index flat = idx[static_cast<std::size_t>(k)];
      X(flat % n, flat / n) += (rng() & 1u) ? 1.0 : -1.0;
    }

    const RpcaResult res = rpca(X);
    const double rel = (res.L - L_true).norm() / L_true.norm();
    worst = std::max(worst, rel);
    if (rel <= 1e-3) ++successes;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = successes >= 95 && elapsed < 60.0;
  report(2, pass,
         "rank-2 50x50 recovery under 5% additive +/-1 spikes: rel error <= 1e-3 on " +
         std::to_string(successes) + "/100 seeds (need >= 95, worst " + num(worst) + "), " +
         num(elapsed) + " s (limit 60)");
}

// --- criterion 3: inner coding solver convergence ----------------------------

void criterion3() {
  const int classes = 4, per_class = 10;
  const Index dim = 64, rank = 4;
  int worst_iters = 0;
  double worst_feas = 0.0, worst_gap = 0.0, worst_ratio = 0.0;
  bool all_ok = true;
  std::string why;
  for (std::uint64_t seed = 1; seed <= 5 && all_ok; ++seed) {
    const SynthDataset ds = synth_multimodal(classes, per_class, dim, rank, 0.0, seed);
    std::vector<Matrix> blocks;
    std::vector<Index> atoms_per_class;
    for (int c = 0; c < classes; ++c) {
      blocks.push_back(ds.X1.middleCols(c * per_class, per_class));
      atoms_per_class.push_back(per_class);
    }
    const Dictionary D = ksvd_init(blocks, atoms_per_class, 5, 10);
    const IdealCode ideal = build_ideal_code(ds.labels, atoms_per_class);
    const Hyperparams h;
    const Matrix Z_other = Matrix::Zero(D.atom_count(), ds.X1.cols());
    const CodingResult res = solve_coding(ds.X1, D, ideal, Z_other, h);

    const double feas = (ds.X1 - D.atoms() * res.Z - res.E).cwiseAbs().maxCoeff();
    const auto& tr = res.diagnostics.feasibility_residuals;
    const double gap = res.diagnostics.gap_residuals.empty()
                           ? 1.0
                           : res.diagnostics.gap_residuals.back();
    worst_iters = std::max(worst_iters, res.diagnostics.iterations);
    worst_feas = std::max(worst_feas, feas);
    worst_gap = std::max(worst_gap, gap);

    if (!res.diagnostics.converged || res.diagnostics.iterations > 500) {
      all_ok = false;
      why = "seed " + std::to_string(seed) + " did not converge within 500 iterations";
      break;
    }
    if (feas >= 1e-8 || gap >= 1e-8) {
      all_ok = false;
      why = "seed " + std::to_string(seed) + " final residuals " + num(feas) + "/" + num(gap);
      break;
    }
    const std::size_t len = tr.size();
    const std::size_t start = len > 51 ? len - 51 : 0;
    for (std::size_t i = start; i + 1 < len; ++i) {
      const double ratio = tr[i + 1] / std::max(tr[i], 1e-300);
      worst_ratio = std::max(worst_ratio, ratio);
      if (tr[i + 1] > 1.10 * tr[i] + 1e-15) {
        all_ok = false;
        why = "seed " + std::to_string(seed) + " feasibility trace jumped by factor " + num(ratio);
        break;
      }
    }
    if (all_ok && !(tr[len - 1] < tr[start])) {
      all_ok = false;
      why = "seed " + std::to_string(seed) + " feasibility trace did not decrease net over the tail";
    }
  }
  report(3, all_ok,
         all_ok ? "joint-code solver on 4-class/64-dim/40-sample noiseless data, seeds 1-5: "
                  "converged in <= " + std::to_string(worst_iters) +
                  " iters (cap 500), final max-entry residuals feasibility " + num(worst_feas) +
                  ", code-gap " + num(worst_gap) +
                  " (tol 1e-8); last-50 feasibility trace decreases net with per-step jitter <= "
                  "10% (max step ratio " + num(worst_ratio) + ")"
                : why);
}

// --- criterion 4: block-diagonal code structure -------------------------------

void criterion4() {
  auto t0 = std::chrono::steady_clock::now();
  const int classes = 5, train_n = 10, test_n = 5;
  const Index dim = 256, rank = 5;
  double worst = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SynthDataset ds = synth_multimodal(classes, train_n + test_n, dim, rank, 0.0, seed);
    std::vector<Matrix> blocks;
    std::vector<Index> atoms_per_class;
    Matrix X_test(dim, classes * test_n);
    for (int c = 0; c < classes; ++c) {
      blocks.push_back(ds.X1.middleCols(c * (train_n + test_n), train_n));
      atoms_per_class.push_back(train_n);
      X_test.middleCols(c * test_n, test_n) =
          ds.X1.middleCols(c * (train_n + test_n) + train_n, test_n);
    }
    const Dictionary D = ksvd_init(blocks, atoms_per_class, 10, 10);
    const Hyperparams h;
    const CodingResult res = code_samples(X_test, D, h);
    double in_block = 0.0, total = 0.0;
    for (Index j = 0; j < res.Z.cols(); ++j) {
      const Index c = j / test_n;
      in_block += res.Z.block(c * train_n, j, train_n, 1).squaredNorm();
      total += res.Z.col(j).squaredNorm();
    }
    worst = std::min(worst, in_block / total);
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst >= 0.90;
  report(4, pass,
         "held-out sample codes on noiseless separable data concentrate in own-class atom "
         "blocks: worst in-block energy share " + num(worst) + " over 10 seeds (need >= 0.90), " +
         num(elapsed) + " s");
}

// --- criterion 5: ridge fit vs normal equations and a descent oracle ----------

Matrix ridge_by_descent(const Matrix& Z, const Matrix& H, double lambda) {
  const double sigma = spectral_norm(Z);
  const double step = 1.0 / (2.0 * (sigma * sigma + lambda));
  Matrix W = Matrix::Zero(H.rows(), Z.rows());
  for (int it = 0; it < 50000; ++it) {
    const Matrix grad = 2.0 * ((W * Z - H) * Z.transpose() + lambda * W);
    W -= step * grad;
    if (grad.norm() < 1e-13) break;
  }
  return W;
}

void criterion5() {
  double worst_normal = 0.0, worst_descent = 0.0;
  for (std::uint64_t seed = 21; seed <= 23; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix Z = gaussian_matrix(12, 30, rng);
    std::vector<int> labels(30);
    std::uniform_int_distribution<int> lab(0, 2);
    for (auto& l : labels) l = lab(rng);
    const Matrix H = build_label_matrix(labels, 3);
    for (const double lambda : {0.5, 5.0}) {
      const Matrix W = fit_ridge(Z, H, lambda);
      const Matrix rhs = H * Z.transpose();
      const Matrix lhs = W * (Z * Z.transpose() + lambda * Matrix::Identity(12, 12));
      worst_normal = std::max(worst_normal, (lhs - rhs).norm() / rhs.norm());
      const Matrix W_gd = ridge_by_descent(Z, H, lambda);
      worst_descent = std::max(worst_descent, (W - W_gd).cwiseAbs().maxCoeff());
    }
  }
  const bool pass = worst_normal <= 1e-8 && worst_descent <= 1e-6;
  report(5, pass,
         "label-projection fit satisfies its normal equations to " + num(worst_normal) +
         " relative (tol 1e-8) and matches an independent gradient-descent minimizer to " +
         num(worst_descent) + " max-abs (tol 1e-6)");
}

// --- criteria 6 and 7: end-to-end synthetic classification --------------------

struct SynthSplit {
  Matrix X1tr, X2tr, X1te, X2te;
  std::vector<int> ytr, yte;
};

SynthSplit split_synth(const SynthDataset& ds, int classes, int per_class, int train_n) {
  const int test_n = per_class - train_n;
  const Index dim1 = ds.X1.rows(), dim2 = ds.X2.rows();
  SynthSplit s;
  s.X1tr.resize(dim1, classes * train_n);
  s.X2tr.resize(dim2, classes * train_n);
  s.X1te.resize(dim1, classes * test_n);
  s.X2te.resize(dim2, classes * test_n);
  for (int c = 0; c < classes; ++c) {
    s.X1tr.middleCols(c * train_n, train_n) = ds.X1.middleCols(c * per_class, train_n);
    s.X2tr.middleCols(c * train_n, train_n) = ds.X2.middleCols(c * per_class, train_n);
    s.X1te.middleCols(c * test_n, test_n) = ds.X1.middleCols(c * per_class + train_n, test_n);
    s.X2te.middleCols(c * test_n, test_n) = ds.X2.middleCols(c * per_class + train_n, test_n);
    for (int i = 0; i < train_n; ++i) s.ytr.push_back(c);
    for (int i = 0; i < test_n; ++i) s.yte.push_back(c);
  }
  return s;
}

double fused_accuracy(const SynthSplit& s, const Hyperparams& h, const TrainOptions& opts) {
  const ModelBundle m = train(s.X1tr, s.X2tr, s.ytr, h, opts);
  const CodingResult z1 = code_samples(s.X1te, m.dictionaries[0], h);
  const CodingResult z2 = code_samples(s.X2te, m.dictionaries[1], h);
  int correct = 0;
  for (Index j = 0; j < s.X1te.cols(); ++j) {
    const FusionDecision dec =
        fuse_and_classify(m, {Vector(z1.Z.col(j)), Vector(z2.Z.col(j))},
                          {Vector(s.X1te.col(j)), Vector(s.X2te.col(j))});
    if (dec.winner == s.yte[static_cast<std::size_t>(j)]) ++correct;
  }
  return 100.0 * correct / static_cast<double>(s.X1te.cols());
}

void criterion6() {
  auto t0 = std::chrono::steady_clock::now();
  const int classes = 5, per_class = 20, train_n = 10;
  double total = 0.0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const SynthDataset ds = synth_multimodal(classes, per_class, 256, 5, 0.0, 100 + rep);
    SynthSplit s = split_synth(ds, classes, per_class, train_n);
    plant_spikes(s.X1tr, 0.3, 900 + rep);
    plant_spikes(s.X2tr, 0.3, 800 + rep);
    const Hyperparams h;
    const TrainOptions opts;
    total += fused_accuracy(s, h, opts);
  }
  const double mean = total / 10.0;
  const double elapsed = seconds_since(t0);
  const bool pass = mean >= 95.0 && elapsed < 600.0;
  report(6, pass,
         "5-class 256-dim benchmark, 30% spikes on training samples only: fused recognition "
         "rate mean " + num(mean) + "% over 10 repeats (need >= 95%), " + num(elapsed) +
         " s (limit 600)");
}

void criterion7() {
  auto t0 = std::chrono::steady_clock::now();
  const int classes = 5, per_class = 20, train_n = 10;
  double total_fused = 0.0, total_single = 0.0;
  int strict_wins = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const SynthDataset ds = synth_multimodal(classes, per_class, 256, 5, 0.0, 100 + rep);
    SynthSplit s = split_synth(ds, classes, per_class, train_n);
    plant_spikes(s.X1tr, 0.3, 900 + rep);
    plant_spikes(s.X2tr, 0.6, 800 + rep);
    plant_spikes(s.X1te, 0.1, 700 + rep);
    plant_spikes(s.X2te, 0.6, 600 + rep);
    const Hyperparams h;
    const TrainOptions opts;
    const double fused = fused_accuracy(s, h, opts);

    const SingleModalityModel single = train_single_modality(s.X2tr, s.ytr, h, opts);
    int correct = 0;
    for (Index j = 0; j < s.X2te.cols(); ++j) {
      if (classify_single(single, Vector(s.X2te.col(j)), h) ==
          s.yte[static_cast<std::size_t>(j)])
        ++correct;
    }
    const double single_acc = 100.0 * correct / static_cast<double>(s.X2te.cols());
    total_fused += fused;
    total_single += single_acc;
    if (fused > single_acc) ++strict_wins;
  }
  const double mean_fused = total_fused / 10.0, mean_single = total_single / 10.0;
  const double elapsed = seconds_since(t0);
  const bool pass = mean_fused >= mean_single && strict_wins >= 7;
  report(7, pass,
         "cross-modal benchmark with an unreliable second modality: fused mean " +
         num(mean_fused) + "% vs modality-2-only mean " + num(mean_single) +
         "%, strictly better on " + std::to_string(strict_wins) +
         "/10 repeats (need mean >= and >= 7 strict wins), " + num(elapsed) + " s");
}

// --- criterion 8: occlusion simulator fidelity --------------------------------

void criterion8() {
  const std::array<std::pair<int, int>, 2> geometries{{{32, 32}, {96, 84}}};
  const std::array<double, 5> fractions{0.2, 0.3, 0.4, 0.5, 0.6};
  const ImagePlane white = make_plane(16, 16, 1, 1.0);
  double max_dev = 0.0;
  for (const auto& [w, h] : geometries) {
    const ImagePlane base = make_plane(w, h, 1, 0.0);
    const int min_dim = std::min(w, h);
    for (const double f : fractions) {
      const ImagePlane out = occlude(base, f, 77, white);
      int changed = 0;
      for (const double p : out.pixels) changed += (p != 0.0);
      const double covered = changed / static_cast<double>(min_dim * min_dim);
      max_dev = std::max(max_dev, std::abs(covered - f));
    }
  }

  ImagePlane textured = make_plane(32, 32, 1, 0.0);
  for (std::size_t i = 0; i < textured.pixels.size(); ++i)
    textured.pixels[i] = static_cast<double>(i % 256) / 255.0;
  const ImagePlane patch = builtin_patches(64)[0];
  const ImagePlane a = occlude(textured, 0.3, 5, patch);
  const ImagePlane b = occlude(textured, 0.3, 5, patch);
  const bool deterministic = a.pixels == b.pixels;

  const bool pass = max_dev <= 0.02 && deterministic;
  report(8, pass,
         "occluded block area within 2 points of nominal for fractions 0.2-0.6 at 32x32 and "
         "96x84 (max deviation " + num(100.0 * max_dev) +
         " points, measured against the min-dimension square the side rule targets); repeated "
         "seeds byte-identical: " + std::string(deterministic ? "yes" : "NO"));
}

// --- criterion 9: illumination invariance on a shadowed scene ------------------

void criterion9() {
  ImagePlane img = make_plane(16, 16, 3, 0.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const double scale = y < 8 ? 0.5 : 1.0;  // top half uniformly shadowed
      if (x < 8) {
        img.at(y, x, 0) = 0.9 * scale;
        img.at(y, x, 1) = 0.5 * scale;
        img.at(y, x, 2) = 0.3 * scale;
      } else {
        img.at(y, x, 0) = 0.2 * scale;
        img.at(y, x, 1) = 0.5 * scale;
        img.at(y, x, 2) = 0.8 * scale;
      }
    }
  }
  img.validate();

  const ImagePlane raw = to_grayscale(img);
  const ImagePlane inv = illumination_invariant(img);
  auto half_mean = [](const ImagePlane& p, bool top) {
    double sum = 0.0;
    for (int y = top ? 0 : 8; y < (top ? 8 : 16); ++y)
      for (int x = 0; x < 16; ++x) sum += p.at(y, x);
    return sum / (8.0 * 16.0);
  };
  const double raw_gap = std::abs(half_mean(raw, true) - half_mean(raw, false));
  const double inv_gap = std::abs(half_mean(inv, true) - half_mean(inv, false));
  const bool pass = raw_gap > 0.2 && inv_gap < 0.05;
  report(9, pass,
         "region uniformly channel-scaled by 0.5: raw-pixel region means differ by " +
         num(raw_gap) + " (need > 0.2) while invariant-output means differ by " + num(inv_gap) +
         " (need < 0.05)");
}

// --- criterion 10: persistence round-trip and corruption detection -------------

bool bundles_bit_equal(const ModelBundle& a, const ModelBundle& b) {
  for (int k = 0; k < 2; ++k) {
    if (!same_matrix(a.dictionaries[k].atoms(), b.dictionaries[k].atoms())) return false;
    if (a.dictionaries[k].class_offsets() != b.dictionaries[k].class_offsets()) return false;
    if (!same_matrix(a.train_codes[k], b.train_codes[k])) return false;
    if (!same_matrix(a.train_errors[k], b.train_errors[k])) return false;
    if (!same_matrix(a.ridge[k].W_hat, b.ridge[k].W_hat)) return false;
    if (!same_matrix(a.ridge[k].H, b.ridge[k].H)) return false;
    if (!same_matrix(a.ridge[k].Q_score, b.ridge[k].Q_score)) return false;
    if (a.ridge[k].lambda_ridge != b.ridge[k].lambda_ridge) return false;
    if (a.class_stats[k].size() != b.class_stats[k].size()) return false;
    for (std::size_t c = 0; c < a.class_stats[k].size(); ++c) {
      if (!same_matrix(a.class_stats[k][c].L, b.class_stats[k][c].L)) return false;
      if (!same_vector(a.class_stats[k][c].S_bar, b.class_stats[k][c].S_bar)) return false;
      if (!same_matrix(a.class_stats[k][c].basis, b.class_stats[k][c].basis)) return false;
    }
    if (a.geometry[k].width != b.geometry[k].width) return false;
    if (a.geometry[k].height != b.geometry[k].height) return false;
    if (a.recode_converged[k] != b.recode_converged[k]) return false;
  }
  if (!same_matrix(a.ideal_code.Q, b.ideal_code.Q)) return false;
  if (a.ideal_code.per_class_counts != b.ideal_code.per_class_counts) return false;
  if (a.labels != b.labels || a.label_names != b.label_names || a.seed != b.seed) return false;
  const Hyperparams &ha = a.hyperparams, &hb = b.hyperparams;
  if (ha.alpha != hb.alpha || ha.beta != hb.beta || ha.lambda != hb.lambda ||
      ha.gamma != hb.gamma || ha.mu0 != hb.mu0 || ha.rho != hb.rho || ha.mu_max != hb.mu_max ||
      ha.eps_solver != hb.eps_solver || ha.eps_dict != hb.eps_dict ||
      ha.max_inner_iters != hb.max_inner_iters || ha.max_dict_iters != hb.max_dict_iters ||
      ha.max_outer_alternations != hb.max_outer_alternations)
    return false;
  const TrainOptions &oa = a.options, &ob = b.options;
  return oa.ridge_lambda == ob.ridge_lambda && oa.ksvd_rounds == ob.ksvd_rounds &&
         oa.ksvd_sparsity == ob.ksvd_sparsity && oa.rpca.lambda == ob.rpca.lambda &&
         oa.rpca.tol == ob.rpca.tol && oa.rpca.max_iters == ob.rpca.max_iters;
}

void flip_byte(const fs::path& p, std::uintmax_t pos) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(static_cast<std::streamoff>(pos));
  char byte = 0;
  f.get(byte);
  f.seekp(static_cast<std::streamoff>(pos));
  f.put(static_cast<char>(byte ^ 0x5A));
}

void criterion10() {
  const fs::path dir = fs::temp_directory_path() / "mmsldl_acceptance_archive";
  fs::remove_all(dir);

  const SynthDataset ds = synth_multimodal(2, 4, 12, 2, 0.0, 33);
  Hyperparams h;
  h.max_outer_alternations = 1;
  h.max_dict_iters = 2;
  ModelBundle bundle = train(ds.X1, ds.X2, ds.labels, h);
  bundle.seed = 99;
  bundle.geometry[0] = PlaneGeometry{4, 3};
  save_model(bundle, dir.string());

  const ModelBundle reloaded = load_model(dir.string());
  const bool bit_exact = bundles_bit_equal(bundle, reloaded);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::mt19937_64 rng(4242);
  int flips = 0, detected = 0;
  for (const auto& file : files) {
    const std::uintmax_t size = fs::file_size(file);
    std::set<std::uintmax_t> positions{0, size / 2, size - 1};
    positions.insert(rng() % size);
    for (const std::uintmax_t pos : positions) {
      flip_byte(file, pos);
      ++flips;
      try {
        (void)load_model(dir.string());
      } catch (const archive_error&) {
        ++detected;
      }
      flip_byte(file, pos);  // restore
    }
  }
  const ModelBundle restored = load_model(dir.string());
  const bool restored_ok = bundles_bit_equal(bundle, restored);
  fs::remove_all(dir);

  const bool pass = bit_exact && restored_ok && flips > 0 && detected == flips;
  report(10, pass,
         std::string("save/load round-trip is bit-exact: ") + (bit_exact ? "yes" : "NO") +
         "; corrupting single archive bytes (first/middle/last/random of each of " +
         std::to_string(files.size()) + " files) raised an integrity error in " +
         std::to_string(detected) + "/" + std::to_string(flips) + " cases");
}

// --- criterion 11: occlusion trend on a user-supplied face dataset -------------

void criterion11() {
  const char* env = std::getenv("MMSLDL_YALEB_DIR");
  if (env == nullptr || *env == '\0') {
    std::cout << "SKIP criterion 11: MMSLDL_YALEB_DIR not set; point it at a face dataset "
                 "laid out as root/<class>/*.pgm to run the occlusion-trend check\n";
    return;
  }
  auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest manifest = scan_dataset(env, 24, 21);
  const auto all_images = load_dataset(manifest);
  const std::size_t classes = std::min<std::size_t>(all_images.size(), 10);
  const Index train_n = 20, test_cap = 20;

  std::vector<Index> counts;
  for (std::size_t c = 0; c < classes; ++c)
    counts.push_back(static_cast<Index>(all_images[c].size()));
  const SplitIndices split = split_indices(counts, train_n, 0);

  const ModalityTransform raw_t = raw_pixel_transform();
  const ModalityTransform inv_t = illumination_invariant_transform();
  const std::vector<ImagePlane> patches = builtin_patches(64);

  std::vector<double> rates;
  const std::array<double, 3> fractions{0.2, 0.4, 0.6};
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    std::vector<std::vector<ImagePlane>> train_imgs(classes), test_imgs(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < split.train[c].size(); ++i) {
        const ImagePlane& src = all_images[c][static_cast<std::size_t>(split.train[c][i])];
        const std::uint64_t seed =
            4242 + 97 * fi + 1315423911ULL * c + 2654435761ULL * i;
        train_imgs[c].push_back(occlude(src, fractions[fi], seed, patches[c % patches.size()]));
      }
      const std::size_t tests = std::min<std::size_t>(split.test[c].size(),
                                                      static_cast<std::size_t>(test_cap));
      for (std::size_t i = 0; i < tests; ++i)
        test_imgs[c].push_back(all_images[c][static_cast<std::size_t>(split.test[c][i])]);
    }
    const LabeledDataset tr1 = make_labeled(train_imgs, raw_t);
    const LabeledDataset tr2 = make_labeled(train_imgs, inv_t);
    const LabeledDataset te1 = make_labeled(test_imgs, raw_t);
    const LabeledDataset te2 = make_labeled(test_imgs, inv_t);

    Hyperparams h;
    h.max_outer_alternations = 3;
    const TrainOptions opts;
    const ModelBundle m = train(tr1.X, tr2.X, tr1.labels, h, opts);
    const CodingResult z1 = code_samples(te1.X, m.dictionaries[0], h);
    const CodingResult z2 = code_samples(te2.X, m.dictionaries[1], h);
    int correct = 0;
    for (Index j = 0; j < te1.X.cols(); ++j) {
      const FusionDecision dec =
          fuse_and_classify(m, {Vector(z1.Z.col(j)), Vector(z2.Z.col(j))},
                            {Vector(te1.X.col(j)), Vector(te2.X.col(j))});
      if (dec.winner == te1.labels[static_cast<std::size_t>(j)]) ++correct;
    }
    rates.push_back(100.0 * correct / static_cast<double>(te1.X.cols()));
  }

  const bool monotone = rates[0] >= rates[1] && rates[1] >= rates[2] && rates[0] > rates[2];
  const double elapsed = seconds_since(t0);
  report(11, monotone,
         "recognition rate under training occlusion 20/40/60% on the first " +
         std::to_string(classes) + " classes at 24x21: " + num(rates[0]) + "% / " +
         num(rates[1]) + "% / " + num(rates[2]) +
         "% (need non-increasing with a strict overall drop), " + num(elapsed) + " s");
}

}  // namespace

int main() {
  struct Entry {
    int idx;
    void (*fn)();
  };
  const std::vector<Entry> entries{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                   {4, criterion4}, {5, criterion5}, {6, criterion6},
                                   {7, criterion7}, {8, criterion8}, {9, criterion9},
                                   {10, criterion10}, {11, criterion11}};
  for (const auto& e : entries) {
    try {
      e.fn();
    } catch (const std::exception& ex) {
      report(e.idx, false, std::string("unexpected exception: ") + ex.what());
    }
  }
  if (g_failures == 0) {
    std::cout << "acceptance: all criteria passed\n";
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " criteria failed\n";
  return 1;
}
