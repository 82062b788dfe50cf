#pragma once

#include <array>
#include <vector>

#include "ba/core.hpp"
#include "ba/image.hpp"

namespace ba {

/// Unrasterized three-wedge partition of a patch.
///
/// The vertex `u` is an offset in pixels from the patch center and may lie
/// anywhere in the plane. Wedges are ordered clockwise on screen (x right,
/// y down, angles from atan2(dy, dx)) starting at `theta`; their angular
/// extents are proportional to `omega`, which is defined up to scale.
struct Junction {
  Vec2 u{};
  double theta = 0.0;
  std::array<double, 3> omega{1.0, 1.0, 1.0};

  /// Normalized wedge fractions (sum to one).
  std::array<double, 3> omega_hat() const;
  /// Cumulative wedge bounds Theta_0..Theta_3 (Theta_3 = Theta_0 + 2pi).
  std::array<double, 4> bounds() const;
  bool valid() const;
};

/// Convex weights over the 3x3, 9x9 and 17x17 pillboxes.
struct WindowWeights {
  std::array<double, 3> p{0.0, 0.0, 1.0};
  bool valid() const;
};

struct Ray {
  Vec2 origin{};
  double angle = 0.0;
};

/// Normalizes theta into [0, 2pi). Throws on invalid omega.
Junction make_junction(Vec2 u, double theta, std::array<double, 3> omega);

/// Straight edge through `u` with the first wedge on the clockwise side of `theta`.
Junction edge_junction(Vec2 u, double theta);

/// A single-wedge junction whose vertex sits far outside any patch.
Junction uniform_far_junction();

/// 1-based index of the wedge containing x_rel. A point exactly at the
/// vertex belongs to the first wedge with nonzero angle.
int wedge_index(const Junction& g, Vec2 x_rel);

/// Pure angular membership indicator; j in {1,2,3}.
int wedge_support(const Junction& g, int j, Vec2 x_rel);

/// Distinct boundary rays (one to three).
std::vector<Ray> boundary_rays(const Junction& g);

double ray_distance(const Ray& r, Vec2 p);

/// Euclidean distance from x_rel to the union of the junction's boundary rays.
double junction_distance(const Junction& g, Vec2 x_rel);

/// True when x_rel lies inside pillbox i (0-based) of the dictionary.
inline bool in_pillbox(int i, Vec2 x_rel) {
  const double r = 0.5 * (kWindowDiameters[i] - 1);
  return std::abs(x_rel.x) <= r && std::abs(x_rel.y) <= r;
}

/// Convex combination of pillbox indicators at x_rel.
double window_value(const WindowWeights& p, Vec2 x_rel);

/// (1 + (d/eta)^2)^-1 at the junction distance of x_rel.
double boundary_strength(const Junction& g, Vec2 x_rel, double eta = kDefaultEta);
double boundary_strength_from_distance(double d, double eta = kDefaultEta);

struct PatchRaster {
  int side = 0;
  std::array<Map, 3> support;
  Map distance;
  Map boundary;
  Map window;
};

/// Evaluates every per-patch map at pixel centers, or averages over
/// supersample^2 subpixel points per pixel.
PatchRaster rasterize_patch(const Junction& g, const WindowWeights& p, int side, int supersample = 1,
                            double eta = kDefaultEta);

/// Linear in u, shortest arc in theta, linear in normalized omega.
Junction interpolate_junctions(const Junction& a, const Junction& b, double t);

}  // namespace ba
