#include "ba/geometry.hpp"

#include <algorithm>
#include <limits>

namespace ba {

std::array<double, 3> Junction::omega_hat() const {
  const double s = omega[0] + omega[1] + omega[2];
  return {omega[0] / s, omega[1] / s, omega[2] / s};
}

std::array<double, 4> Junction::bounds() const {
  const auto w = omega_hat();
  return {theta, theta + kTwoPi * w[0], theta + kTwoPi * (w[0] + w[1]), theta + kTwoPi};
}

bool Junction::valid() const {
  for (double w : omega)
    if (!(w >= 0.0) || !std::isfinite(w)) return false;
  return omega[0] + omega[1] + omega[2] > 0.0 && std::isfinite(theta) && std::isfinite(u.x) &&
         std::isfinite(u.y);
}

bool WindowWeights::valid() const {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= 1e-9;
}

Junction make_junction(Vec2 u, double theta, std::array<double, 3> omega) {
  Junction g{u, wrap_angle(theta), omega};
  require(g.valid(), "make_junction: omega must be nonnegative with positive sum");
  return g;
}

Junction edge_junction(Vec2 u, double theta) { return make_junction(u, theta, {0.5, 0.5, 0.0}); }

Junction uniform_far_junction() {
  // Ray points away from the patch, so every pixel is ~141 px from the boundary.
  return make_junction({100.0, 100.0}, kPi / 4.0, {1.0, 0.0, 0.0});
}

int wedge_index(const Junction& g, Vec2 x_rel) {
  const auto w = g.omega_hat();
  int last = 0;
  for (int j = 0; j < 3; ++j)
    if (w[j] > 0.0) last = j;
  const Vec2 d = x_rel - g.u;
  if (d.x == 0.0 && d.y == 0.0) {
    for (int j = 0; j < 3; ++j)
      if (w[j] > 0.0) return j + 1;
  }
  const double psi = wrap_angle(std::atan2(d.y, d.x) - g.theta);
  double upper = 0.0;
  for (int j = 0; j < 3; ++j) {
    upper += kTwoPi * w[j];
    if (w[j] > 0.0 && (psi < upper || j == last)) return j + 1;
  }
  return last + 1;
}

int wedge_support(const Junction& g, int j, Vec2 x_rel) {
  require(j >= 1 && j <= 3, "wedge_support: j must be in {1,2,3}");
  return wedge_index(g, x_rel) == j ? 1 : 0;
}

std::vector<Ray> boundary_rays(const Junction& g) {
  const auto b = g.bounds();
  const auto& w = g.omega;
  std::vector<Ray> rays{{g.u, wrap_angle(b[0])}};
  if (w[0] > 0.0 && (w[1] > 0.0 || w[2] > 0.0)) rays.push_back({g.u, wrap_angle(b[1])});
  if (w[1] > 0.0 && w[2] > 0.0) rays.push_back({g.u, wrap_angle(b[2])});
  return rays;
}

double ray_distance(const Ray& r, Vec2 p) {
  const Vec2 d = p - r.origin;
  const Vec2 e{std::cos(r.angle), std::sin(r.angle)};
  const double t = dot(d, e);
  if (t >= 0.0) return std::abs(cross(e, d));
  return norm(d);
}

double junction_distance(const Junction& g, Vec2 x_rel) {
  double best = std::numeric_limits<double>::infinity();
  for (const Ray& r : boundary_rays(g)) best = std::min(best, ray_distance(r, x_rel));
  return best;
}

double window_value(const WindowWeights& p, Vec2 x_rel) {
  double v = 0.0;
  for (int i = 0; i < 3; ++i)
    if (in_pillbox(i, x_rel)) v += p.p[i];
  return v;
}

double boundary_strength_from_distance(double d, double eta) {
  require(eta > 0.0, "boundary_strength: eta must be positive");
  const double r = d / eta;
  return 1.0 / (1.0 + r * r);
}

double boundary_strength(const Junction& g, Vec2 x_rel, double eta) {
  return boundary_strength_from_distance(junction_distance(g, x_rel), eta);
}

PatchRaster rasterize_patch(const Junction& g, const WindowWeights& p, int side, int supersample, double eta) {
  require(side > 0 && side % 2 == 1, "rasterize_patch: side must be odd");
  require(supersample >= 1, "rasterize_patch: supersample must be >= 1");
  PatchRaster out;
  out.side = side;
  for (auto& s : out.support) s = Map(side, side, 1);
  out.distance = Map(side, side, 1);
  out.boundary = Map(side, side, 1);
  out.window = Map(side, side, 1);
  const int half = side / 2;
  const double inv = 1.0 / (supersample * supersample);
  const auto rays = boundary_rays(g);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      std::array<double, 3> sup{};
      double dist = 0.0, bnd = 0.0, win = 0.0;
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const Vec2 q{x - half + (sx + 0.5) / supersample - 0.5, y - half + (sy + 0.5) / supersample - 0.5};
          sup[wedge_index(g, q) - 1] += 1.0;
          double d = std::numeric_limits<double>::infinity();
          for (const Ray& r : rays) d = std::min(d, ray_distance(r, q));
          dist += d;
          bnd += boundary_strength_from_distance(d, eta);
          win += window_value(p, q);
        }
      }
      for (int j = 0; j < 3; ++j) out.support[j](x, y) = sup[j] * inv;
      out.distance(x, y) = dist * inv;
      out.boundary(x, y) = bnd * inv;
      out.window(x, y) = win * inv;
    }
  }
  return out;
}

Junction interpolate_junctions(const Junction& a, const Junction& b, double t) {
  const auto wa = a.omega_hat();
  const auto wb = b.omega_hat();
  if (t <= 0.0) return {a.u, a.theta, wa};
  if (t >= 1.0) return {b.u, b.theta, wb};
  Junction g;
  g.u = (1.0 - t) * a.u + t * b.u;
  g.theta = wrap_angle(a.theta + t * angle_diff(a.theta, b.theta));
  double s = 0.0;
  for (int j = 0; j < 3; ++j) {
    g.omega[j] = (1.0 - t) * wa[j] + t * wb[j];
    s += g.omega[j];
  }
  for (double& w : g.omega) w /= s;
  return g;
}

}  // namespace ba
