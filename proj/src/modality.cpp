#include "mmsldl/modality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mmsldl/errors.hpp"

namespace mmsldl {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;
constexpr int kHistogramBins = 64;
constexpr int kBlurRadius = 3;  // 7x7 box

// Linear-interpolated percentile of a sorted vector, q in [0, 1].
double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void ImagePlane::validate() const {
  if (width <= 0 || height <= 0)
    throw invalid_input("ImagePlane: dimensions must be positive, got " +
                        std::to_string(width) + "x" + std::to_string(height));
  if (channels != 1 && channels != 3)
    throw invalid_input("ImagePlane: channels must be 1 or 3, got " +
                        std::to_string(channels));
  const std::size_t expected =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
      static_cast<std::size_t>(channels);
  if (pixels.size() != expected)
    throw invalid_input("ImagePlane: pixel buffer holds " +
                        std::to_string(pixels.size()) + " values, expected " +
                        std::to_string(expected));
  for (double p : pixels)
    if (!(p >= 0.0 && p <= 1.0))
      throw invalid_input("ImagePlane: intensity " + std::to_string(p) +
                          " outside [0, 1]");
}

ImagePlane make_plane(int width, int height, int channels, double fill) {
  ImagePlane img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                        static_cast<std::size_t>(channels),
                    fill);
  img.validate();
  return img;
}

ImagePlane to_grayscale(const ImagePlane& img) {
  img.validate();
  if (img.channels == 1) return img;
  ImagePlane gray = make_plane(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      gray.at(y, x) = kLumaR * img.at(y, x, 0) + kLumaG * img.at(y, x, 1) +
                      kLumaB * img.at(y, x, 2);
  return gray;
}

Vector to_raw_vector(const ImagePlane& img) {
  if (img.empty()) throw invalid_input("to_raw_vector: empty image");
  const ImagePlane gray = to_grayscale(img);
  Vector v(static_cast<Index>(gray.width) * gray.height);
  Index i = 0;
  for (int x = 0; x < gray.width; ++x)
    for (int y = 0; y < gray.height; ++y) v(i++) = gray.at(y, x);
  return v;
}

ImagePlane unstack(const Vector& v, int width, int height) {
  if (width <= 0 || height <= 0 ||
      v.size() != static_cast<Index>(width) * static_cast<Index>(height))
    throw invalid_input("unstack: vector length " + std::to_string(v.size()) +
                        " does not match " + std::to_string(width) + "x" +
                        std::to_string(height));
  ImagePlane img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  Index i = 0;
  for (int x = 0; x < width; ++x)
    for (int y = 0; y < height; ++y) img.at(y, x) = v(i++);
  return img;
}

ChromaField log_chromaticity(const ImagePlane& img, double eps) {
  img.validate();
  if (img.channels != 3)
    throw invalid_input("log_chromaticity: needs a 3-channel image");
  if (eps <= 0.0) throw invalid_parameter("log_chromaticity: eps must be positive");

  ChromaField field;
  field.chi1.resize(img.height, img.width);
  field.chi2.resize(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double g = img.at(y, x, 1) + eps;
      field.chi1(y, x) = std::log((img.at(y, x, 0) + eps) / g);
      field.chi2(y, x) = std::log((img.at(y, x, 2) + eps) / g);
    }
  }
  return field;
}

double entropy_of_projection(const ChromaField& field, double theta) {
  if (field.chi1.size() == 0 || field.chi1.rows() != field.chi2.rows() ||
      field.chi1.cols() != field.chi2.cols())
    throw invalid_input("entropy_of_projection: empty or mismatched field");

  const double c = std::cos(theta);
  const double s = std::sin(theta);
  std::vector<double> proj(static_cast<std::size_t>(field.chi1.size()));
  for (Index i = 0; i < field.chi1.size(); ++i)
    proj[static_cast<std::size_t>(i)] = c * field.chi1(i) + s * field.chi2(i);

  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  const double lo = percentile_sorted(sorted, 0.05);
  const double hi = percentile_sorted(sorted, 0.95);
  if (hi <= lo) return 0.0;  // degenerate field: one bin holds everything

  const double bin_width = (hi - lo) / kHistogramBins;
  std::vector<std::size_t> counts(kHistogramBins, 0);
  for (double p : proj) {
    int b = static_cast<int>(std::floor((p - lo) / bin_width));
    b = std::clamp(b, 0, kHistogramBins - 1);  // outliers land in boundary bins
    ++counts[static_cast<std::size_t>(b)];
  }

  const double total = static_cast<double>(proj.size());
  double entropy = 0.0;
  for (std::size_t n : counts) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / total;
    entropy -= p * std::log(p);
  }
  return entropy;
}

ImagePlane illumination_invariant(const ImagePlane& img, bool* grayscale_passthrough) {
  img.validate();
  if (grayscale_passthrough) *grayscale_passthrough = false;
  if (img.channels == 1) {
    if (grayscale_passthrough) *grayscale_passthrough = true;
    return img;
  }

  const ChromaField field = log_chromaticity(img);
  double best_theta = 0.0;
  double best_entropy = std::numeric_limits<double>::infinity();
  for (int deg = 0; deg < 180; ++deg) {
    const double theta = deg * kPi / 180.0;
    const double entropy = entropy_of_projection(field, theta);
    if (entropy < best_entropy) {
      best_entropy = entropy;
      best_theta = theta;
    }
  }

  const double c = std::cos(best_theta);
  const double s = std::sin(best_theta);
  Matrix proj = c * field.chi1 + s * field.chi2;
  const double lo = proj.minCoeff();
  const double hi = proj.maxCoeff();

  ImagePlane out = make_plane(img.width, img.height, 1, 0.5);
  if (hi > lo) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(y, x) = (proj(y, x) - lo) / (hi - lo);
  }
  return out;
}

ImagePlane local_normalize(const ImagePlane& img) {
  img.validate();
  if (img.channels != 1)
    throw invalid_input("local_normalize: needs a single-channel image");

  const double eps = 1.0 / 255.0;
  Matrix log_plane(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      log_plane(y, x) = std::log(img.at(y, x) + eps);

  // 7x7 box blur with clamped borders.
  Matrix detail(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = -kBlurRadius; dy <= kBlurRadius; ++dy) {
        for (int dx = -kBlurRadius; dx <= kBlurRadius; ++dx) {
          const int yy = std::clamp(y + dy, 0, img.height - 1);
          const int xx = std::clamp(x + dx, 0, img.width - 1);
          sum += log_plane(yy, xx);
          ++count;
        }
      }
      detail(y, x) = log_plane(y, x) - sum / count;
    }
  }

  const double lo = detail.minCoeff();
  const double hi = detail.maxCoeff();
  ImagePlane out = make_plane(img.width, img.height, 1, 0.5);
  if (hi > lo) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(y, x) = (detail(y, x) - lo) / (hi - lo);
  }
  return out;
}

ImagePlane modality2_transform(const ImagePlane& img) {
  img.validate();
  if (img.channels == 3) return illumination_invariant(img);
  return local_normalize(img);
}

ModalityTransform raw_pixel_transform() {
  ModalityTransform t;
  t.name = "raw_pixels";
  t.apply = [](const ImagePlane& img) { return to_raw_vector(img); };
  return t;
}

ModalityTransform illumination_invariant_transform() {
  ModalityTransform t;
  t.name = "illumination_invariant";
  t.apply = [](const ImagePlane& img) { return to_raw_vector(modality2_transform(img)); };
  return t;
}

}  // namespace mmsldl
