#ifndef MMSLDL_DATA_IO_HPP
#define MMSLDL_DATA_IO_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmsldl/modality.hpp"
#include "mmsldl/trainer.hpp"
#include "mmsldl/types.hpp"

namespace mmsldl {

// FNV-1a 64-bit hash; the checksum used across manifests and blobs.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& text);

// --- dataset ingestion -----------------------------------------------------

// Directory listing of root/<class_name>/*.png|jpg|jpeg|pgm with class names
// mapped to ids 0..C-1 in lexicographic order.
struct DatasetManifest {
  std::string root;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::string>> files;  // per class, sorted paths
  int width = 0;   // geometry after resize
  int height = 0;
  std::uint64_t checksum = 0;  // hash of the full listing + geometry

  Index num_classes() const { return static_cast<Index>(class_names.size()); }
  Index total_files() const;
};

DatasetManifest scan_dataset(const std::string& root, int width, int height);

// Decoded, resized (bilinear), [0,1]-normalized images grouped by class.
std::vector<std::vector<ImagePlane>> load_dataset(const DatasetManifest& manifest);

// Column-stacked samples for one modality with sorted labels.
struct LabeledDataset {
  Matrix X;
  std::vector<int> labels;
  std::vector<Index> per_class_counts;
};

// The ingestion sorter: reorders columns so labels are non-decreasing
// (stable) and records per-class counts.
LabeledDataset sort_by_class(const Matrix& X, const std::vector<int>& labels);

// Applies a modality transform to every image, in class order.
LabeledDataset make_labeled(const std::vector<std::vector<ImagePlane>>& images,
                            const ModalityTransform& transform);

// --- splits ------------------------------------------------------------------

// Per-class train/test index sets (indices are within-class positions, kept
// ascending). One draw is shared across modalities to keep columns aligned.
struct SplitIndices {
  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> test;
};

SplitIndices split_indices(const std::vector<Index>& per_class_counts,
                           Index train_per_class, std::uint64_t seed);

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& data,
                                                           Index train_per_class,
                                                           std::uint64_t seed);

// Columns of `data` selected by per-class index lists (train or test half).
LabeledDataset select_columns(const LabeledDataset& data,
                              const std::vector<std::vector<Index>>& per_class);

// --- corruption --------------------------------------------------------------

// Replaces a random square block (side = round(min(w,h)*sqrt(fraction)),
// corner uniform) with the patch resized to the block.
ImagePlane occlude(const ImagePlane& img, double fraction, std::uint64_t seed,
                   const ImagePlane& patch);

// Three deterministic built-in occluder textures ("baboon-like" noise,
// checker, gradient) for harness use when no patch directory is given.
std::vector<ImagePlane> builtin_patches(int size = 64);

// Replaces round(fraction * size) entries of X (chosen uniformly without
// replacement) with +/-1 spikes; returns the 0/1 mask of planted positions.
Matrix plant_spikes(Matrix& X, double fraction, std::uint64_t seed);

// --- synthetic benchmark -------------------------------------------------------

struct SynthDataset {
  Matrix X1, X2;
  std::vector<int> labels;
  std::vector<Matrix> basis1, basis2;  // ground-truth class subspaces, d x r
  Matrix clean1, clean2;
  Matrix mask1, mask2;  // 0/1 planted-spike masks
};

// Per class: random orthonormal r-dim subspace; samples = basis * gaussian
// coefficients. Modality 2 pushes each class basis through one fixed linear
// map (re-orthonormalized) and draws fresh coefficients, giving aligned class
// structure without shared noise. Corruption replaces entries with +/-1.
SynthDataset synth_multimodal(int num_classes, int per_class, Index dim, Index rank,
                              double corruption, std::uint64_t seed);

// --- model persistence ---------------------------------------------------------

// Archive directory: `manifest` = "mmsldl-archive <fnv64-hex>" line plus a
// JSON document (format version, shapes, checksums, label map, hyperparams,
// seed), and one .mat64 blob per matrix (16-byte header: magic 'MAT6',
// version, rows, cols as little-endian uint32; then column-major LE doubles).
void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

// Blob-level helpers, exposed for the CLI's synthetic dumps.
void write_matrix_blob(const std::string& path, const Matrix& m);
Matrix read_matrix_blob(const std::string& path);

// --- images on disk --------------------------------------------------------------

ImagePlane read_image(const std::string& path, int resize_width = 0,
                      int resize_height = 0);
void write_image(const std::string& path, const ImagePlane& img);

}  // namespace mmsldl

#endif
