#include "mmsldl/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"

#include "mmsldl/errors.hpp"
#include "mmsldl/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmsldl {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 14695981039346656037ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::uint64_t fnv1a64(const std::string& text) { return fnv1a64(text.data(), text.size()); }

namespace {

constexpr double kPi = 3.14159265358979323846;

// Unbiased bounded draw; deterministic given the rng sequence.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

// Box-Muller on 53-bit uniforms, independent of stdlib distribution details.
double gauss(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740993.0);
  const double u2 = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".pgm";
}

cv::Mat plane_to_mat(const ImagePlane& img) {
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_64FC3 : CV_64FC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        auto& px = m.at<cv::Vec3d>(y, x);
        px[0] = img.at(y, x, 0);
        px[1] = img.at(y, x, 1);
        px[2] = img.at(y, x, 2);
      } else {
        m.at<double>(y, x) = img.at(y, x);
      }
    }
  return m;
}

ImagePlane mat_to_plane(const cv::Mat& m) {
  ImagePlane img;
  img.width = m.cols;
  img.height = m.rows;
  img.channels = m.channels();
  img.pixels.resize(static_cast<std::size_t>(m.cols) * static_cast<std::size_t>(m.rows) *
                    static_cast<std::size_t>(m.channels()));
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (m.channels() == 3) {
        const auto& px = m.at<cv::Vec3d>(y, x);
        img.at(y, x, 0) = std::clamp(px[0], 0.0, 1.0);
        img.at(y, x, 1) = std::clamp(px[1], 0.0, 1.0);
        img.at(y, x, 2) = std::clamp(px[2], 0.0, 1.0);
      } else {
        img.at(y, x) = std::clamp(m.at<double>(y, x), 0.0, 1.0);
      }
    }
  return img;
}

ImagePlane resize_plane(const ImagePlane& img, int width, int height) {
  if (img.width == width && img.height == height) return img;
  cv::Mat src = plane_to_mat(img);
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0.0, 0.0, cv::INTER_LINEAR);
  return mat_to_plane(dst);
}

void write_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file_bytes(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(std::string(what) + ": cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

constexpr char kBlobMagic[4] = {'M', 'A', 'T', '6'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr int kArchiveVersion = 1;
constexpr const char* kManifestTag = "mmsldl-archive ";

std::string encode_matrix_blob(const Matrix& m) {
  std::string out;
  out.reserve(16 + static_cast<std::size_t>(m.size()) * sizeof(double));
  out.append(kBlobMagic, 4);
  write_u32_le(out, kBlobVersion);
  write_u32_le(out, static_cast<std::uint32_t>(m.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(m.cols()));
  // Eigen stores column-major; dump the buffer directly (little-endian host).
  out.append(reinterpret_cast<const char*>(m.data()),
             static_cast<std::size_t>(m.size()) * sizeof(double));
  return out;
}

Matrix decode_matrix_blob(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 16)
    throw truncated_blob("blob " + name + ": only " + std::to_string(bytes.size()) +
                         " bytes, header needs 16");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kBlobMagic, 4) != 0)
    throw archive_error("blob " + name + ": bad magic");
  const std::uint32_t version = read_u32_le(p + 4);
  if (version != kBlobVersion)
    throw version_mismatch("blob " + name + ": format version " +
                           std::to_string(version) + ", this build reads " +
                           std::to_string(kBlobVersion));
  const std::uint32_t rows = read_u32_le(p + 8);
  const std::uint32_t cols = read_u32_le(p + 12);
  const std::size_t expected =
      16 + static_cast<std::size_t>(rows) * cols * sizeof(double);
  if (bytes.size() != expected)
    throw truncated_blob("blob " + name + ": " + std::to_string(bytes.size()) +
                         " bytes, expected " + std::to_string(expected));
  Matrix m(rows, cols);
  std::memcpy(m.data(), bytes.data() + 16,
              static_cast<std::size_t>(m.size()) * sizeof(double));
  return m;
}

}  // namespace

Index DatasetManifest::total_files() const {
  Index n = 0;
  for (const auto& f : files) n += static_cast<Index>(f.size());
  return n;
}

DatasetManifest scan_dataset(const std::string& root, int width, int height) {
  if (width <= 0 || height <= 0)
    throw invalid_parameter("scan_dataset: resize geometry must be positive");
  if (!fs::is_directory(root))
    throw invalid_dataset("scan_dataset: dataset root does not exist: " + root);

  DatasetManifest manifest;
  manifest.root = root;
  manifest.width = width;
  manifest.height = height;

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw invalid_dataset("scan_dataset: no class directories under " + root);

  std::string listing;
  for (const auto& name : class_dirs) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / name))
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
      throw invalid_dataset("scan_dataset: class '" + name + "' has no images");
    listing += name;
    listing += '\n';
    for (const auto& p : paths) {
      listing += p;
      listing += '\n';
    }
    manifest.class_names.push_back(name);
    manifest.files.push_back(std::move(paths));
  }
  listing += std::to_string(width) + "x" + std::to_string(height);
  manifest.checksum = fnv1a64(listing);
  return manifest;
}

ImagePlane read_image(const std::string& path, int resize_width, int resize_height) {
  if (!fs::exists(path)) throw io_error("read_image: missing file: " + path);
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw invalid_dataset("read_image: cannot decode " + path);

  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default:
      throw invalid_dataset("read_image: unsupported pixel depth in " + path);
  }
  cv::Mat converted;
  if (raw.channels() == 4) {
    cv::Mat rgb;
    cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
    rgb.convertTo(converted, CV_64FC3, scale);
  } else if (raw.channels() == 3) {
    cv::Mat rgb;
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(converted, CV_64FC3, scale);
  } else if (raw.channels() == 1) {
    raw.convertTo(converted, CV_64FC1, scale);
  } else {
    throw invalid_dataset("read_image: unsupported channel count in " + path);
  }

  ImagePlane img = mat_to_plane(converted);
  if (resize_width > 0 && resize_height > 0)
    img = resize_plane(img, resize_width, resize_height);
  return img;
}

void write_image(const std::string& path, const ImagePlane& img) {
  img.validate();
  cv::Mat f = plane_to_mat(img);
  cv::Mat bytes;
  if (img.channels == 3) {
    // Quantize before the channel swap: cvtColor has no 64F kernels.
    cv::Mat rgb8;
    f.convertTo(rgb8, CV_8UC3, 255.0);
    cv::cvtColor(rgb8, bytes, cv::COLOR_RGB2BGR);
  } else {
    f.convertTo(bytes, CV_8UC1, 255.0);
  }
  if (!cv::imwrite(path, bytes))
    throw io_error("write_image: cannot write " + path);
}

std::vector<std::vector<ImagePlane>> load_dataset(const DatasetManifest& manifest) {
  std::vector<std::vector<ImagePlane>> images(manifest.files.size());
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t c = 0; c < manifest.files.size(); ++c) {
    images[c].resize(manifest.files[c].size());
    for (std::size_t i = 0; i < manifest.files[c].size(); ++i) jobs.emplace_back(c, i);
  }
  parallel_for(static_cast<Index>(jobs.size()), [&](Index j) {
    const auto [c, i] = jobs[static_cast<std::size_t>(j)];
    images[c][i] = read_image(manifest.files[c][i], manifest.width, manifest.height);
  });
  return images;
}

LabeledDataset sort_by_class(const Matrix& X, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(X.cols()) != labels.size())
    throw invalid_input("sort_by_class: " + std::to_string(X.cols()) +
                        " columns vs " + std::to_string(labels.size()) + " labels");
  for (int l : labels)
    if (l < 0) throw invalid_input("sort_by_class: negative label " + std::to_string(l));

  std::vector<Index> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return labels[a] < labels[b]; });

  LabeledDataset out;
  out.X.resize(X.rows(), X.cols());
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.X.col(static_cast<Index>(i)) = X.col(order[i]);
    out.labels[i] = labels[static_cast<std::size_t>(order[i])];
  }
  if (!out.labels.empty()) {
    out.per_class_counts.assign(static_cast<std::size_t>(out.labels.back()) + 1, 0);
    for (int l : out.labels) ++out.per_class_counts[static_cast<std::size_t>(l)];
  }
  return out;
}

LabeledDataset make_labeled(const std::vector<std::vector<ImagePlane>>& images,
                            const ModalityTransform& transform) {
  if (images.empty()) throw invalid_dataset("make_labeled: no classes");
  Index n = 0;
  for (std::size_t c = 0; c < images.size(); ++c) {
    if (images[c].empty())
      throw invalid_dataset("make_labeled: class " + std::to_string(c) + " is empty");
    n += static_cast<Index>(images[c].size());
  }
  const int w = images[0][0].width;
  const int hgt = images[0][0].height;
  const Index d = transform.output_dim(w, hgt);

  LabeledDataset out;
  out.X.resize(d, n);
  out.labels.resize(static_cast<std::size_t>(n));
  out.per_class_counts.resize(images.size());

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  std::vector<Index> col_of;
  Index col = 0;
  for (std::size_t c = 0; c < images.size(); ++c) {
    out.per_class_counts[c] = static_cast<Index>(images[c].size());
    for (std::size_t i = 0; i < images[c].size(); ++i) {
      jobs.emplace_back(c, i);
      col_of.push_back(col);
      out.labels[static_cast<std::size_t>(col)] = static_cast<int>(c);
      ++col;
    }
  }
  parallel_for(static_cast<Index>(jobs.size()), [&](Index j) {
    const auto [c, i] = jobs[static_cast<std::size_t>(j)];
    const ImagePlane& img = images[c][i];
    if (img.width != w || img.height != hgt)
      throw invalid_dataset("make_labeled: image geometry " +
                            std::to_string(img.width) + "x" + std::to_string(img.height) +
                            " differs from " + std::to_string(w) + "x" +
                            std::to_string(hgt));
    Vector v = transform.apply(img);
    if (v.size() != d)
      throw invalid_state("make_labeled: transform '" + transform.name +
                          "' broke its output-dimension contract");
    out.X.col(col_of[static_cast<std::size_t>(j)]) = v;
  });
  return out;
}

SplitIndices split_indices(const std::vector<Index>& per_class_counts,
                           Index train_per_class, std::uint64_t seed) {
  if (train_per_class < 1)
    throw invalid_parameter("split_indices: train_per_class must be >= 1");
  std::mt19937_64 rng(seed);
  SplitIndices out;
  out.train.resize(per_class_counts.size());
  out.test.resize(per_class_counts.size());
  for (std::size_t c = 0; c < per_class_counts.size(); ++c) {
    const Index p = per_class_counts[c];
    if (p <= train_per_class)
      throw invalid_dataset("split_indices: class " + std::to_string(c) + " has " +
                            std::to_string(p) + " samples, needs more than " +
                            std::to_string(train_per_class));
    std::vector<Index> idx(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < train_per_class; ++i) {
      const Index j =
          i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(p - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    out.train[c].assign(idx.begin(), idx.begin() + train_per_class);
    out.test[c].assign(idx.begin() + train_per_class, idx.end());
    std::sort(out.train[c].begin(), out.train[c].end());
    std::sort(out.test[c].begin(), out.test[c].end());
  }
  return out;
}

LabeledDataset select_columns(const LabeledDataset& data,
                              const std::vector<std::vector<Index>>& per_class) {
  if (per_class.size() != data.per_class_counts.size())
    throw invalid_input("select_columns: class count mismatch");
  Index n = 0;
  for (const auto& v : per_class) n += static_cast<Index>(v.size());

  LabeledDataset out;
  out.X.resize(data.X.rows(), n);
  out.labels.reserve(static_cast<std::size_t>(n));
  out.per_class_counts.resize(per_class.size());

  Index col = 0;
  Index offset = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (Index i : per_class[c]) {
      if (i < 0 || i >= data.per_class_counts[c])
        throw invalid_input("select_columns: index " + std::to_string(i) +
                            " out of range for class " + std::to_string(c));
      out.X.col(col++) = data.X.col(offset + i);
      out.labels.push_back(static_cast<int>(c));
    }
    out.per_class_counts[c] = static_cast<Index>(per_class[c].size());
    offset += data.per_class_counts[c];
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& data,
                                                           Index train_per_class,
                                                           std::uint64_t seed) {
  const SplitIndices idx = split_indices(data.per_class_counts, train_per_class, seed);
  return {select_columns(data, idx.train), select_columns(data, idx.test)};
}

ImagePlane occlude(const ImagePlane& img, double fraction, std::uint64_t seed,
                   const ImagePlane& patch) {
  img.validate();
  if (fraction < 0.05 || fraction > 0.95)
    throw invalid_parameter("occlude: fraction must be in [0.05, 0.95], got " +
                            std::to_string(fraction));
  if (patch.empty()) throw invalid_input("occlude: empty patch");
  patch.validate();

  const int min_dim = std::min(img.width, img.height);
  int side = static_cast<int>(std::lround(min_dim * std::sqrt(fraction)));
  side = std::clamp(side, 1, min_dim);

  std::mt19937_64 rng(seed);
  const int x0 = static_cast<int>(
      uniform_index(rng, static_cast<std::uint64_t>(img.width - side + 1)));
  const int y0 = static_cast<int>(
      uniform_index(rng, static_cast<std::uint64_t>(img.height - side + 1)));

  // Match the patch to the image's channel count, then scale it to the block.
  ImagePlane adapted = patch;
  if (img.channels == 1 && patch.channels == 3) {
    adapted = to_grayscale(patch);
  } else if (img.channels == 3 && patch.channels == 1) {
    adapted = make_plane(patch.width, patch.height, 3);
    for (int y = 0; y < patch.height; ++y)
      for (int x = 0; x < patch.width; ++x)
        for (int c = 0; c < 3; ++c) adapted.at(y, x, c) = patch.at(y, x);
  }
  const ImagePlane block = resize_plane(adapted, side, side);

  ImagePlane out = img;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y0 + y, x0 + x, c) = block.at(y, x, c);
  return out;
}

std::vector<ImagePlane> builtin_patches(int size) {
  if (size < 2) throw invalid_parameter("builtin_patches: size must be >= 2");
  std::vector<ImagePlane> patches;

  ImagePlane noise = make_plane(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        const int key[3] = {y, x, c};
        noise.at(y, x, c) =
            static_cast<double>(fnv1a64(key, sizeof key) % 256) / 255.0;
      }
  patches.push_back(std::move(noise));

  ImagePlane checker = make_plane(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool a = ((x / 8) + (y / 8)) % 2 == 0;
      checker.at(y, x, 0) = a ? 0.9 : 0.1;
      checker.at(y, x, 1) = a ? 0.2 : 0.3;
      checker.at(y, x, 2) = a ? 0.1 : 0.9;
    }
  patches.push_back(std::move(checker));

  ImagePlane gradient = make_plane(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      gradient.at(y, x, 0) = static_cast<double>(x) / (size - 1);
      gradient.at(y, x, 1) = static_cast<double>(y) / (size - 1);
      gradient.at(y, x, 2) = static_cast<double>(x + y) / (2 * size - 2);
    }
  patches.push_back(std::move(gradient));
  return patches;
}

Matrix plant_spikes(Matrix& X, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw invalid_parameter("plant_spikes: fraction must be in [0, 1]");
  Matrix mask = Matrix::Zero(X.rows(), X.cols());
  const std::uint64_t total = static_cast<std::uint64_t>(X.size());
  const std::uint64_t k =
      static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(total)));
  if (k == 0 || total == 0) return mask;

  std::mt19937_64 rng(seed);
  std::vector<Index> flat(static_cast<std::size_t>(total));
  for (std::uint64_t i = 0; i < total; ++i) flat[static_cast<std::size_t>(i)] = static_cast<Index>(i);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + uniform_index(rng, total - i);
    std::swap(flat[static_cast<std::size_t>(i)], flat[static_cast<std::size_t>(j)]);
  }
  for (std::uint64_t i = 0; i < k; ++i) {
    const Index pos = flat[static_cast<std::size_t>(i)];
    const double spike = (rng() & 1ULL) ? 1.0 : -1.0;
    X(pos) = spike;
    mask(pos) = 1.0;
  }
  return mask;
}

SynthDataset synth_multimodal(int num_classes, int per_class, Index dim, Index rank,
                              double corruption, std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1)
    throw invalid_parameter("synth_multimodal: classes and per_class must be >= 1");
  if (rank < 1 || rank >= dim)
    throw invalid_parameter("synth_multimodal: rank must satisfy 1 <= rank < dim");
  if (corruption < 0.0 || corruption > 0.5)
    throw invalid_parameter("synth_multimodal: corruption must be in [0, 0.5]");

  std::mt19937_64 rng(seed);
  std::mt19937_64 map_rng(seed ^ 0x9E3779B97F4A7C15ULL);

  // One fixed cross-modality map shared by every class.
  Matrix T(dim, dim);
  for (Index i = 0; i < T.size(); ++i) T(i) = gauss(map_rng);

  auto orthonormal_columns = [](const Matrix& raw) {
    Eigen::HouseholderQR<Matrix> qr(raw);
    Matrix q = qr.householderQ() * Matrix::Identity(raw.rows(), raw.cols());
    for (Index j = 0; j < q.cols(); ++j) {
      Index imax = 0;
      q.col(j).cwiseAbs().maxCoeff(&imax);
      if (q(imax, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
  };

  const Index n = static_cast<Index>(num_classes) * per_class;
  SynthDataset out;
  out.X1.resize(dim, n);
  out.X2.resize(dim, n);
  out.labels.resize(static_cast<std::size_t>(n));

  for (int c = 0; c < num_classes; ++c) {
    Matrix raw(dim, rank);
    for (Index i = 0; i < raw.size(); ++i) raw(i) = gauss(rng);
    Matrix b1 = orthonormal_columns(raw);
    Matrix b2 = orthonormal_columns(T * b1);

    // Coefficients are gaussian around a per-class mean direction so samples
    // of one class share a sign (like nonnegative image data). Zero-mean
    // draws would make x and -x equally likely, which no linear scoring
    // stage can separate.
    Vector m1(rank), m2(rank);
    for (Index i = 0; i < rank; ++i) m1(i) = gauss(rng);
    for (Index i = 0; i < rank; ++i) m2(i) = gauss(rng);
    m1 *= 3.0 * std::sqrt(static_cast<double>(rank)) / m1.norm();
    m2 *= 3.0 * std::sqrt(static_cast<double>(rank)) / m2.norm();

    Matrix a1(rank, per_class), a2(rank, per_class);
    for (Index i = 0; i < a1.size(); ++i) a1(i) = gauss(rng);
    for (Index i = 0; i < a2.size(); ++i) a2(i) = gauss(rng);
    a1.colwise() += m1;
    a2.colwise() += m2;

    const Index offset = static_cast<Index>(c) * per_class;
    out.X1.middleCols(offset, per_class) = b1 * a1;
    out.X2.middleCols(offset, per_class) = b2 * a2;
    for (int i = 0; i < per_class; ++i)
      out.labels[static_cast<std::size_t>(offset + i)] = c;
    out.basis1.push_back(std::move(b1));
    out.basis2.push_back(std::move(b2));
  }

  out.clean1 = out.X1;
  out.clean2 = out.X2;
  out.mask1 = plant_spikes(out.X1, corruption, seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  out.mask2 = plant_spikes(out.X2, corruption, seed ^ 0x5A5A5A5A5A5A5A5AULL);
  return out;
}

// --- persistence -------------------------------------------------------------

void write_matrix_blob(const std::string& path, const Matrix& m) {
  const std::string bytes = encode_matrix_blob(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("write_matrix_blob: cannot open " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write_matrix_blob: short write to " + path);
}

Matrix read_matrix_blob(const std::string& path) {
  return decode_matrix_blob(read_file_bytes(path, "read_matrix_blob"),
                            fs::path(path).filename().string());
}

namespace {

json hyperparams_to_json(const Hyperparams& h) {
  return json{{"alpha", h.alpha},
              {"beta", h.beta},
              {"lambda", h.lambda},
              {"gamma", h.gamma},
              {"mu0", h.mu0},
              {"rho", h.rho},
              {"mu_max", h.mu_max},
              {"eps_solver", h.eps_solver},
              {"eps_dict", h.eps_dict},
              {"max_inner_iters", h.max_inner_iters},
              {"max_dict_iters", h.max_dict_iters},
              {"max_outer_alternations", h.max_outer_alternations}};
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams h;
  h.alpha = j.at("alpha").get<double>();
  h.beta = j.at("beta").get<double>();
  h.lambda = j.at("lambda").get<double>();
  h.gamma = j.at("gamma").get<double>();
  h.mu0 = j.at("mu0").get<double>();
  h.rho = j.at("rho").get<double>();
  h.mu_max = j.at("mu_max").get<double>();
  h.eps_solver = j.at("eps_solver").get<double>();
  h.eps_dict = j.at("eps_dict").get<double>();
  h.max_inner_iters = j.at("max_inner_iters").get<int>();
  h.max_dict_iters = j.at("max_dict_iters").get<int>();
  h.max_outer_alternations = j.at("max_outer_alternations").get<int>();
  return h;
}

json options_to_json(const TrainOptions& o) {
  return json{{"ridge_lambda", o.ridge_lambda},
              {"rpca_lambda", o.rpca.lambda},
              {"rpca_tol", o.rpca.tol},
              {"rpca_max_iters", o.rpca.max_iters},
              {"ksvd_rounds", o.ksvd_rounds},
              {"ksvd_sparsity", o.ksvd_sparsity}};
}

TrainOptions options_from_json(const json& j) {
  TrainOptions o;
  o.ridge_lambda = j.at("ridge_lambda").get<double>();
  o.rpca.lambda = j.at("rpca_lambda").get<double>();
  o.rpca.tol = j.at("rpca_tol").get<double>();
  o.rpca.max_iters = j.at("rpca_max_iters").get<int>();
  o.ksvd_rounds = j.at("ksvd_rounds").get<int>();
  o.ksvd_sparsity = j.at("ksvd_sparsity").get<int>();
  return o;
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
  std::vector<std::pair<std::string, const Matrix*>> blobs;
  std::vector<Matrix> owned;  // materialized vectors
  owned.reserve(2 * bundle.class_stats[0].size() + 2 * bundle.class_stats[1].size());

  std::array<Matrix, 2> atoms{bundle.dictionaries[0].atoms(),
                              bundle.dictionaries[1].atoms()};
  for (int k = 0; k < 2; ++k) {
    const std::string K = std::to_string(k + 1);
    const auto kk = static_cast<std::size_t>(k);
    blobs.emplace_back("dict_atoms_" + K, &atoms[kk]);
    blobs.emplace_back("train_codes_" + K, &bundle.train_codes[kk]);
    blobs.emplace_back("train_errors_" + K, &bundle.train_errors[kk]);
    blobs.emplace_back("ridge_weights_" + K, &bundle.ridge[kk].W_hat);
    blobs.emplace_back("ridge_labels_" + K, &bundle.ridge[kk].H);
    blobs.emplace_back("ridge_score_code_" + K, &bundle.ridge[kk].Q_score);
  }
  blobs.emplace_back("ideal_code", &bundle.ideal_code.Q);
  for (int k = 0; k < 2; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    for (std::size_t c = 0; c < bundle.class_stats[kk].size(); ++c) {
      const auto& st = bundle.class_stats[kk][c];
      const std::string tag = std::to_string(k + 1) + "_" + std::to_string(c);
      blobs.emplace_back("stats_lowrank_" + tag, &st.L);
      owned.push_back(st.S_bar);
      blobs.emplace_back("stats_noise_mean_" + tag, &owned.back());
      blobs.emplace_back("stats_basis_" + tag, &st.basis);
    }
  }

  json manifest;
  manifest["format_version"] = kArchiveVersion;
  manifest["seed"] = bundle.seed;
  manifest["label_names"] = bundle.label_names;
  manifest["labels"] = bundle.labels;
  manifest["per_class_counts"] = bundle.ideal_code.per_class_counts;
  manifest["class_offsets"] =
      json::array({bundle.dictionaries[0].class_offsets(),
                   bundle.dictionaries[1].class_offsets()});
  manifest["geometry"] = json::array(
      {json{{"width", bundle.geometry[0].width}, {"height", bundle.geometry[0].height}},
       json{{"width", bundle.geometry[1].width}, {"height", bundle.geometry[1].height}}});
  manifest["recode_converged"] =
      json::array({bundle.recode_converged[0], bundle.recode_converged[1]});
  manifest["hyperparams"] = hyperparams_to_json(bundle.hyperparams);
  manifest["options"] = options_to_json(bundle.options);
  manifest["num_class_stats"] =
      json::array({bundle.class_stats[0].size(), bundle.class_stats[1].size()});

  std::vector<std::pair<std::string, std::string>> encoded;
  encoded.reserve(blobs.size());
  json blob_index = json::object();
  for (const auto& [name, matrix] : blobs) {
    std::string bytes = encode_matrix_blob(*matrix);
    blob_index[name] = json{{"rows", matrix->rows()},
                            {"cols", matrix->cols()},
                            {"fnv64", hex64(fnv1a64(bytes.data(), bytes.size()))}};
    encoded.emplace_back(name + ".mat64", std::move(bytes));
  }
  manifest["blobs"] = std::move(blob_index);

  const std::string body = manifest.dump(2);
  const std::string header = kManifestTag + hex64(fnv1a64(body)) + "\n";

  // Stage everything in a temp directory, then swap it in place.
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp-write";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);
  {
    std::ofstream out(tmp / "manifest", std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("save_model: cannot write manifest in " + tmp.string());
    out << header << body;
  }
  for (const auto& [file, bytes] : encoded) {
    std::ofstream out(tmp / file, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("save_model: cannot write " + (tmp / file).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec)
    throw io_error("save_model: cannot move archive into place at " + path + ": " +
                   ec.message());
}

ModelBundle load_model(const std::string& path) {
  const fs::path root(path);
  const std::string manifest_bytes =
      read_file_bytes((root / "manifest").string(), "load_model");

  const std::size_t eol = manifest_bytes.find('\n');
  const std::string tag(kManifestTag);
  if (eol == std::string::npos || manifest_bytes.compare(0, tag.size(), tag) != 0)
    throw archive_error("load_model: " + path + " has no archive header line");
  const std::string stated_hex = manifest_bytes.substr(tag.size(), eol - tag.size());
  const std::string body = manifest_bytes.substr(eol + 1);
  if (stated_hex != hex64(fnv1a64(body)))
    throw checksum_mismatch("load_model: manifest checksum mismatch in " + path);

  json manifest;
  try {
    manifest = json::parse(body);
  } catch (const json::exception& e) {
    throw archive_error(std::string("load_model: manifest is not valid JSON: ") +
                        e.what());
  }

  const int version = manifest.at("format_version").get<int>();
  if (version != kArchiveVersion)
    throw version_mismatch("load_model: archive format version " +
                           std::to_string(version) + ", this build reads " +
                           std::to_string(kArchiveVersion));

  auto load_blob = [&](const std::string& name) {
    const json& entry = manifest.at("blobs").at(name);
    const std::string file = (root / (name + ".mat64")).string();
    const std::string bytes = read_file_bytes(file, "load_model");
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    const std::size_t expected =
        16 + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
                 sizeof(double);
    if (bytes.size() != expected)
      throw truncated_blob("load_model: blob " + name + " is " +
                           std::to_string(bytes.size()) + " bytes, expected " +
                           std::to_string(expected));
    if (hex64(fnv1a64(bytes.data(), bytes.size())) != entry.at("fnv64").get<std::string>())
      throw checksum_mismatch("load_model: checksum mismatch in blob " + name);
    Matrix m = decode_matrix_blob(bytes, name);
    if (m.rows() != rows || m.cols() != cols)
      throw archive_error("load_model: blob " + name + " shape disagrees with manifest");
    return m;
  };

  ModelBundle bundle;
  bundle.seed = manifest.at("seed").get<std::uint64_t>();
  bundle.label_names = manifest.at("label_names").get<std::vector<std::string>>();
  bundle.labels = manifest.at("labels").get<std::vector<int>>();
  bundle.hyperparams = hyperparams_from_json(manifest.at("hyperparams"));
  bundle.options = options_from_json(manifest.at("options"));

  bundle.ideal_code.Q = load_blob("ideal_code");
  bundle.ideal_code.per_class_counts =
      manifest.at("per_class_counts").get<std::vector<Index>>();

  for (int k = 0; k < 2; ++k) {
    const std::string K = std::to_string(k + 1);
    const auto kk = static_cast<std::size_t>(k);
    auto offsets = manifest.at("class_offsets").at(kk).get<std::vector<Index>>();
    bundle.dictionaries[kk] = Dictionary(load_blob("dict_atoms_" + K), std::move(offsets));
    bundle.train_codes[kk] = load_blob("train_codes_" + K);
    bundle.train_errors[kk] = load_blob("train_errors_" + K);
    bundle.ridge[kk].W_hat = load_blob("ridge_weights_" + K);
    bundle.ridge[kk].H = load_blob("ridge_labels_" + K);
    bundle.ridge[kk].Q_score = load_blob("ridge_score_code_" + K);
    bundle.ridge[kk].lambda_ridge = bundle.options.ridge_lambda;
    bundle.geometry[kk].width =
        manifest.at("geometry").at(kk).at("width").get<int>();
    bundle.geometry[kk].height =
        manifest.at("geometry").at(kk).at("height").get<int>();
    bundle.recode_converged[kk] = manifest.at("recode_converged").at(kk).get<bool>();

    const auto stats_count = manifest.at("num_class_stats").at(kk).get<std::size_t>();
    bundle.class_stats[kk].resize(stats_count);
    for (std::size_t c = 0; c < stats_count; ++c) {
      const std::string t = K + "_" + std::to_string(c);
      auto& st = bundle.class_stats[kk][c];
      st.L = load_blob("stats_lowrank_" + t);
      st.S_bar = load_blob("stats_noise_mean_" + t);
      st.basis = load_blob("stats_basis_" + t);
    }
  }
  return bundle;
}

}  // namespace mmsldl
