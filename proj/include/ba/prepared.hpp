#pragma once

#include <algorithm>
#include <limits>

#include "ba/geometry.hpp"

namespace ba {

/// Junction with its wedge bounds and ray directions precomputed, for
/// evaluating hard supports and distances at many points.
struct PreparedJunction {
  Vec2 u{};
  double theta = 0.0;
  std::array<double, 3> w{};
  std::array<double, 3> upper{};  // cumulative bound of wedge j relative to theta
  int first = 0;
  int last = 0;
  int n_rays = 0;
  std::array<Vec2, 3> dir{};

  explicit PreparedJunction(const Junction& g) : u(g.u), theta(g.theta), w(g.omega_hat()) {
    double acc = 0.0;
    first = -1;
    for (int j = 0; j < 3; ++j) {
      acc += kTwoPi * w[j];
      upper[j] = acc;
      if (w[j] > 0.0) {
        last = j;
        if (first < 0) first = j;
      }
    }
    for (const Ray& r : boundary_rays(g)) dir[n_rays++] = {std::cos(r.angle), std::sin(r.angle)};
  }

  /// 0-based wedge index.
  int wedge(Vec2 x_rel) const {
    const Vec2 d = x_rel - u;
    if (d.x == 0.0 && d.y == 0.0) return first;
    const double psi = wrap_angle(std::atan2(d.y, d.x) - theta);
    for (int j = 0; j < 3; ++j)
      if (w[j] > 0.0 && (psi < upper[j] || j == last)) return j;
    return last;
  }

  double distance(Vec2 x_rel) const {
    const Vec2 d = x_rel - u;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_rays; ++i) {
      const double t = dot(d, dir[i]);
      best = std::min(best, t >= 0.0 ? std::abs(cross(dir[i], d)) : norm(d));
    }
    return best;
  }
};

/// Clipped 17x17 patch box around (x, y).
struct PatchBox {
  int x0, x1, y0, y1;  // inclusive
  PatchBox(int x, int y, int width, int height, int radius = kPatchRadius)
      : x0(std::max(0, x - radius)), x1(std::min(width - 1, x + radius)),
        y0(std::max(0, y - radius)), y1(std::min(height - 1, y + radius)) {}
};

}  // namespace ba
