#ifndef MMSLDL_MODALITY_HPP
#define MMSLDL_MODALITY_HPP

#include <functional>
#include <string>
#include <vector>

#include "mmsldl/types.hpp"

namespace mmsldl {

// Row-major image with interleaved channels, intensities in [0, 1].
struct ImagePlane {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;

  double at(int y, int x, int c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  double& at(int y, int x, int c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool empty() const { return pixels.empty(); }

  // Throws invalid_input when dimensions, channel count, buffer size, or
  // intensity range are out of contract.
  void validate() const;
};

ImagePlane make_plane(int width, int height, int channels, double fill = 0.0);

// 3-channel -> luma-weighted grayscale; 1-channel passes through.
ImagePlane to_grayscale(const ImagePlane& img);

// Column-major stacking of the (grayscale-converted) plane into a
// width*height vector.
Vector to_raw_vector(const ImagePlane& img);

// Inverse of to_raw_vector for single-channel planes.
ImagePlane unstack(const Vector& v, int width, int height);

// Per-pixel 2D log-chromaticity coordinates, each height x width.
struct ChromaField {
  Matrix chi1;  // log((R+eps)/(G+eps))
  Matrix chi2;  // log((B+eps)/(G+eps))
};

ChromaField log_chromaticity(const ImagePlane& img, double eps = 1.0 / 255.0);

// Shannon entropy (natural log) of a 64-bin histogram of the chromaticity
// field projected onto direction (cos theta, sin theta). Bins span the
// 5th-95th percentile range; outliers clamp into the boundary bins.
double entropy_of_projection(const ChromaField& field, double theta);

// Entropy-minimizing grayscale invariant: searches theta over a 1-degree grid
// in [0, 180), projects chromaticities onto the winning direction, and
// min-max normalizes to [0, 1] (constant fields map to 0.5). Grayscale input
// passes through unchanged and sets *grayscale_passthrough when given.
ImagePlane illumination_invariant(const ImagePlane& img,
                                  bool* grayscale_passthrough = nullptr);

// Illumination-robust view for single-channel images: log intensity minus its
// 7x7 box blur, min-max normalized to [0, 1].
ImagePlane local_normalize(const ImagePlane& img);

// Second-modality dispatch: chromaticity invariant for color input, local
// normalization for grayscale input.
ImagePlane modality2_transform(const ImagePlane& img);

// Uniform transform contract: a name plus a deterministic image -> vector map
// whose output dimension depends only on geometry.
struct ModalityTransform {
  std::string name;
  std::function<Vector(const ImagePlane&)> apply;
  Index output_dim(int width, int height) const {
    return static_cast<Index>(width) * static_cast<Index>(height);
  }
};

ModalityTransform raw_pixel_transform();
ModalityTransform illumination_invariant_transform();

}  // namespace mmsldl

#endif
