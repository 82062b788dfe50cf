#pragma once

#include <cstdint>
#include <vector>

#include "ba/geometry.hpp"
#include "ba/image.hpp"

namespace ba {

/// One (Junction, WindowWeights) pair per pixel; patch k is centered on pixel k.
class JunctionField {
public:
  JunctionField() = default;
  JunctionField(int height, int width, const Junction& g = {}, const WindowWeights& p = {})
      : height_(height), width_(width),
        junctions_(static_cast<std::size_t>(height) * width, g),
        windows_(static_cast<std::size_t>(height) * width, p) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return junctions_.size(); }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  Junction& junction(std::size_t k) { return junctions_[k]; }
  const Junction& junction(std::size_t k) const { return junctions_[k]; }
  WindowWeights& window(std::size_t k) { return windows_[k]; }
  const WindowWeights& window(std::size_t k) const { return windows_[k]; }

  bool matches(const ImageF& img) const { return img.height() == height_ && img.width() == width_; }

private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Junction> junctions_;
  std::vector<WindowWeights> windows_;
};

/// Per-patch, per-wedge gathered features. An empty wedge (zero gather
/// denominator) is flagged invalid and holds the window-weighted patch mean.
struct WedgeFeatures {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;        // [k][j][c]
  std::vector<double> denominators;  // [k][j]
  std::vector<std::uint8_t> valid;   // [k][j]

  const double* feature(std::size_t k, int j) const { return &values[(k * 3 + j) * channels]; }
};

struct SliceMeans {
  ImageF features;
  Map distance;
};

struct SliceVariances {
  Map distance;
  Map features;
};

struct GlobalMaps {
  ImageF features;
  Map distance;
  Map feature_variance;
  Map distance_variance;
  Map boundary;
  Map boundary_variance;
};

/// 33x33 kernel centered on the query pixel; entries outside the image are zero.
struct AffinityKernel {
  int x = 0;
  int y = 0;
  Map weights;
};

WedgeFeatures gather(const ImageF& image, const JunctionField& field);

SliceMeans slice_means(const JunctionField& field, const WedgeFeatures& wedges);

/// Window-weighted population variances over the patches covering each
/// pixel; the feature variance is averaged over channels.
SliceVariances slice_variances(const JunctionField& field, const WedgeFeatures& wedges);

/// Window-weighted slice of per-patch boundary strength, raised to gamma_vis.
Map global_boundary_map(const JunctionField& field, double eta = kDefaultEta, double gamma_vis = 0.5);

/// Gather plus every slice output in one pass (boundary map is raw, gamma 1).
GlobalMaps compute_global_maps(const ImageF& image, const JunctionField& field, double eta = kDefaultEta);

AffinityKernel affinity_map(const JunctionField& field, const WedgeFeatures& wedges, int x, int y);

/// Applies a kernel to an image at its query pixel; returns one value per channel.
std::vector<double> apply_kernel(const AffinityKernel& kernel, const ImageF& image);

namespace reference {

// Serial, unoptimized implementations evaluated straight from the defining
// sums. Kept as the cross-check for the parallel kernels above.
WedgeFeatures gather(const ImageF& image, const JunctionField& field);
SliceMeans slice_means(const JunctionField& field, const WedgeFeatures& wedges);
SliceVariances slice_variances(const JunctionField& field, const WedgeFeatures& wedges);
Map global_boundary_map(const JunctionField& field, double eta, double gamma_vis);

}  // namespace reference

}  // namespace ba
