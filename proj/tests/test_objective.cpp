#include "doctest.h"

#include <cmath>
#include <random>

#include "ba/field_io.hpp"
#include "ba/objective.hpp"

using namespace ba;

namespace {

// A hard-edged scene and the field that explains it exactly: every patch
// holds the scene's junction expressed in its own coordinates.
struct Exact {
  ImageF image;
  Supervision sup;
  JunctionField field;
};

Exact exact_scene(const Junction& g, int H, int W) {
  const std::array<std::array<double, 3>, 3> colors{{{0.9, 0.1, 0.2}, {0.1, 0.8, 0.3}, {0.2, 0.3, 0.7}}};
  Exact e{ImageF(H, W, 3), {ImageF(H, W, 3), Map(H, W, 1)}, JunctionField(H, W)};
  const Vec2 c{(W - 1) / 2.0, (H - 1) / 2.0};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Vec2 p = Vec2{double(x), double(y)} - c;
      const int j = wedge_index(g, p) - 1;
      for (int ch = 0; ch < 3; ++ch) e.image(x, y, ch) = e.sup.f_gt(x, y, ch) = colors[j][ch];
      e.sup.d_gt(x, y) = junction_distance(g, p);
      Junction local = g;
      local.u = g.u - (Vec2{double(x), double(y)} - c);
      e.field.junction(e.field.index(x, y)) = local;
    }
  return e;
}

}  // namespace

TEST_CASE("pixel importance constants") {
  LossConfig cfg;
  Map d(1, 1, 1, 0.0);
  CHECK(std::abs(pixel_importance(d, cfg)(0, 0) - (std::exp(-0.1) + 0.3)) < 1e-12);
  d(0, 0) = 9.0;
  CHECK(pixel_importance(d, cfg)(0, 0) == doctest::Approx(std::exp(-1.0) + 0.3));
}

TEST_CASE("patch importance inverts the clipped distance mass") {
  LossConfig cfg;
  Map d(20, 20, 1, 1.0);
  // Interior: 17x17 pixels of (1 + 1).
  CHECK(patch_importance(d, d.index(10, 10), cfg) == doctest::Approx(1.0 / (289 * 2.0)));
  // Corner: 9x9 pixels.
  CHECK(patch_importance(d, d.index(0, 0), cfg) == doctest::Approx(1.0 / (81 * 2.0)));
}

TEST_CASE("final iteration weighs three times") {
  LossConfig cfg;
  LossTerms unit{1, 1, 1, 1, 1, 1};
  CHECK(total_loss({}, unit, cfg) == doctest::Approx(18.0));
  CHECK(total_loss(unit, {}, cfg) == doctest::Approx(6.0));
  cfg.w_d = 0.0;
  CHECK(unit.weighted(cfg) == doctest::Approx(5.0));
}

TEST_CASE("loss vanishes for the field that generated the scene") {
  LossConfig cfg;
  for (const Junction& g : {edge_junction({0.3, -0.2}, 0.7), make_junction({1.1, 0.4}, 2.0, {1, 2, 1.5})}) {
    const Exact e = exact_scene(g, 15, 13);
    const LossTerms t = exact_terms(e.image, e.field, e.sup, cfg);
    CHECK(t.f < 1e-18);
    CHECK(t.d < 1e-18);
    CHECK(t.nu_f < 1e-18);
    CHECK(t.nu_d < 1e-18);
    CHECK(t.patch_f < 1e-18);
    CHECK(t.patch_d < 1e-18);
  }
}

TEST_CASE("loss terms are nonnegative and invariant to cyclic wedge relabeling") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.1, 1.0);
  const int H = 10, W = 9;
  const Exact e = exact_scene(make_junction({0.5, 0.5}, 1.0, {1, 1, 1}), H, W);
  JunctionField f(H, W), rel(H, W);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Junction g = make_junction({3 * U(rng), 3 * U(rng)}, 3 * P(rng), {P(rng), P(rng), P(rng)});
    const auto w = g.omega_hat();
    f.junction(k) = g;
    rel.junction(k) = make_junction(g.u, g.theta + kTwoPi * w[0], {g.omega[1], g.omega[2], g.omega[0]});
    f.window(k).p = rel.window(k).p = {0.2, 0.3, 0.5};
  }
  LossConfig cfg;
  const LossTerms a = exact_terms(e.image, f, e.sup, cfg), b = exact_terms(e.image, rel, e.sup, cfg);
  for (double v : {a.f, a.d, a.nu_f, a.nu_d, a.patch_f, a.patch_d}) CHECK(v >= 0.0);
  CHECK(a.weighted(cfg) > 0.0);
  CHECK(b.weighted(cfg) == doctest::Approx(a.weighted(cfg)).epsilon(1e-9));
}

TEST_CASE("decoder examples") {
  double raw[kRawParams] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  Junction g;
  WindowWeights p;
  decode_pixel(raw, g, p);
  CHECK(g.u.x == 0.0);
  CHECK(g.u.y == 0.0);
  CHECK(std::isfinite(g.theta));
  for (double w : g.omega_hat()) CHECK(w == doctest::Approx(1.0 / 3));
  for (double w : p.p) CHECK(w == doctest::Approx(1.0 / 3));

  double raw2[kRawParams] = {1.5, -2, 3, 4, 0, 1, 2, 5, -5, 0};
  decode_pixel(raw2, g, p);
  CHECK(g.u.x == 1.5);
  CHECK(g.theta == doctest::Approx(std::atan2(0.6, 0.8)).epsilon(1e-8));
  const double z = 1 + std::exp(1.0) + std::exp(2.0);
  CHECK(g.omega_hat()[2] == doctest::Approx(std::exp(2.0) / z));
  CHECK(p.p[0] + p.p[1] + p.p[2] == doctest::Approx(1.0));
  CHECK(p.p[1] < 1e-4);
}

TEST_CASE("encode inverts decode") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    double raw[kRawParams], back[kRawParams];
    for (double& v : raw) v = U(rng);
    Junction g, g2;
    WindowWeights p, p2;
    decode_pixel(raw, g, p);
    encode_pixel(g, p, back);
    decode_pixel(back, g2, p2);
    CHECK(std::abs(angle_diff(g.theta, g2.theta)) < 1e-9);
    for (int j = 0; j < 3; ++j) {
      CHECK(g2.omega_hat()[j] == doctest::Approx(g.omega_hat()[j]).epsilon(1e-9));
      CHECK(p2.p[j] == doctest::Approx(p.p[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("smoothed loss gradient matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 1.0);
  const int H = 8, W = 7, C = 3;
  std::vector<double> raw(H * W * kRawParams), image(H * W * C);
  for (double& v : raw) v = 2 * U(rng);
  for (double& v : image) v = P(rng);
  Supervision sup{ImageF(H, W, C), Map(H, W, 1)};
  for (double& v : sup.f_gt.data()) v = P(rng);
  for (double& v : sup.d_gt.data()) v = 4 * P(rng);
  LossConfig cfg;
  const auto buf = make_loss_buffers<double>(sup, cfg);
  std::vector<double> grad;
  surrogate_loss(H, W, C, raw.data(), image.data(), buf, cfg, 1.0, &grad);
  auto f = [&](const std::vector<double>& r) {
    return surrogate_loss<double>(H, W, C, r.data(), image.data(), buf, cfg, 1.0, nullptr).weighted(cfg);
  };
  for (int t = 0; t < 40; ++t) {
    const std::size_t i = rng() % raw.size();
    const double h = 1e-5;
    auto rp = raw, rm = raw;
    rp[i] += h;
    rm[i] -= h;
    const double fd = (f(rp) - f(rm)) / (2 * h);
    CHECK(std::abs(grad[i] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-2));
  }
}

TEST_CASE("field files round-trip the raw parameters") {
  RawField raw{3, 4, {}};
  for (int i = 0; i < 3 * 4 * kRawParams; ++i) raw.values.push_back(0.125 * i - 3);
  const std::string path = "test_objective_field.bin";
  write_field(path, raw);
  const RawField back = read_field(path);
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.values == raw.values);
}
