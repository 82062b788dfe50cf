#include "doctest.h"

#include <cmath>
#include <random>

#include "ba/geometry.hpp"

using namespace ba;

namespace {

// Distance to a ray by sampling points along it, coarse then fine around
// the best coarse sample.
double sampled_ray_distance(Vec2 o, double angle, Vec2 p, double length = 60.0) {
  const Vec2 e{std::cos(angle), std::sin(angle)};
  auto at = [&](double t) { return norm(p - (o + t * e)); };
  const double coarse = 0.05;
  double best_t = 0.0, best = at(0.0);
  for (double t = coarse; t <= length; t += coarse)
    if (at(t) < best) best = at(t), best_t = t;
  const double lo = std::max(0.0, best_t - coarse), hi = best_t + coarse;
  for (double t = lo; t <= hi; t += 1e-5) best = std::min(best, at(t));
  return best;
}

Junction random_junction(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), W(0.05, 1.0);
  return make_junction({4 * U(rng), 4 * U(rng)}, A(rng), {W(rng), W(rng), W(rng)});
}

}  // namespace

TEST_CASE("junction distance agrees with sampled rays") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-8.0, 8.0);
  for (int i = 0; i < 300; ++i) {
    const Junction g = random_junction(rng);
    const Vec2 x{U(rng), U(rng)};
    const auto w = g.omega_hat();
    double oracle = 1e300, cum = 0.0;
    for (int j = 0; j < 3; ++j) {
      oracle = std::min(oracle, sampled_ray_distance(g.u, g.theta + kTwoPi * cum, x));
      cum += w[j];
    }
    CHECK(std::abs(junction_distance(g, x) - oracle) < 1e-4);
  }
}

TEST_CASE("straight edge distance is the distance to the line") {
  const Junction g = edge_junction({1.0, -0.5}, 0.3);
  CHECK(boundary_rays(g).size() == 2);
  const Vec2 n{-std::sin(0.3), std::cos(0.3)};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-8.0, 8.0);
  for (int i = 0; i < 100; ++i) {
    const Vec2 x{U(rng), U(rng)};
    CHECK(junction_distance(g, x) == doctest::Approx(std::abs(dot(x - g.u, n))).epsilon(1e-12));
  }
}

TEST_CASE("wedge supports partition the plane") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-8.0, 8.0);
  for (int i = 0; i < 2000; ++i) {
    Junction g = random_junction(rng);
    if (i % 4 == 1) g.omega[rng() % 3] = 0.0;
    const Vec2 x{U(rng), U(rng)};
    int sum = 0;
    for (int j = 1; j <= 3; ++j) sum += wedge_support(g, j, x);
    CHECK(sum == 1);
    CHECK(wedge_support(g, wedge_index(g, x), x) == 1);
  }
}

TEST_CASE("wedge index follows the angular order") {
  const Junction g = make_junction({0, 0}, 0.0, {1, 1, 2});
  CHECK(wedge_index(g, {1.0, 0.5}) == 1);   // 26.6 deg
  CHECK(wedge_index(g, {-1.0, 0.5}) == 2);  // 153 deg
  CHECK(wedge_index(g, {0.0, -1.0}) == 3);  // 270 deg
  CHECK(wedge_index(g, {0.0, 0.0}) == 1);
  const Junction h = make_junction({0, 0}, 0.0, {0, 1, 1});
  CHECK(wedge_index(h, {0.0, 0.0}) == 2);
}

TEST_CASE("omega is normalized and theta wrapped") {
  const Junction g = make_junction({0, 0}, -0.5, {2, 1, 1});
  const auto w = g.omega_hat();
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0));
  CHECK(g.theta == doctest::Approx(kTwoPi - 0.5));
  CHECK_THROWS_AS(make_junction({0, 0}, 0.0, {0, 0, 0}), ContractError);
  CHECK_THROWS_AS(make_junction({0, 0}, 0.0, {-1, 1, 1}), ContractError);
}

TEST_CASE("boundary strength constants") {
  CHECK(boundary_strength_from_distance(0.3, 0.3) == 0.5);
  CHECK(boundary_strength_from_distance(0.0) == 1.0);
  CHECK(boundary_strength_from_distance(0.6) == doctest::Approx(0.2));
}

TEST_CASE("window value combines pillboxes") {
  WindowWeights p;
  p.p = {0.2, 0.3, 0.5};
  CHECK(window_value(p, {0, 0}) == doctest::Approx(1.0));
  CHECK(window_value(p, {1, -1}) == doctest::Approx(1.0));
  CHECK(window_value(p, {2, 0}) == doctest::Approx(0.8));
  CHECK(window_value(p, {4, 4}) == doctest::Approx(0.8));
  CHECK(window_value(p, {5, 0}) == doctest::Approx(0.5));
  CHECK(window_value(p, {9, 0}) == doctest::Approx(0.0));
}

TEST_CASE("rasterized supports sum to one with supersampling") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5; ++i) {
    const Junction g = random_junction(rng);
    const PatchRaster r = rasterize_patch(g, {}, 17, 3);
    for (std::size_t k = 0; k < r.distance.pixels(); ++k) {
      const double s = r.support[0].data()[k] + r.support[1].data()[k] + r.support[2].data()[k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("interpolation hits its endpoints and takes the short arc") {
  const Junction a = make_junction({1, 2}, 0.1, {1, 1, 1});
  const Junction b = make_junction({-1, 0}, kTwoPi - 0.1, {2, 1, 1});
  const Junction m0 = interpolate_junctions(a, b, 0.0), m1 = interpolate_junctions(a, b, 1.0);
  CHECK(m0.u.x == doctest::Approx(a.u.x));
  CHECK(m1.u.y == doctest::Approx(b.u.y));
  CHECK(std::abs(angle_diff(m1.theta, b.theta)) < 1e-12);
  const Junction mid = interpolate_junctions(a, b, 0.5);
  CHECK(std::abs(angle_diff(mid.theta, 0.0)) < 1e-12);
  CHECK(mid.omega_hat()[0] == doctest::Approx(0.5 * (1.0 / 3 + 0.5)));
}
