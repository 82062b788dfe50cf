#include "doctest.h"

#include <random>

#include "ba/fieldops.hpp"

using namespace ba;

namespace {

JunctionField random_field(int H, int W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), P(0.05, 1.0);
  JunctionField f(H, W);
  for (std::size_t k = 0; k < f.size(); ++k) {
    f.junction(k) = make_junction({4 * U(rng), 4 * U(rng)}, A(rng), {P(rng), P(rng), P(rng)});
    const double a = P(rng), b = P(rng), c = P(rng);
    f.window(k).p = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
  }
  return f;
}

ImageF random_image(int H, int W, int C, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ImageF img(H, W, C);
  for (double& v : img.data()) v = U(rng);
  return img;
}

}  // namespace

TEST_CASE("parallel gather and slice agree with the reference") {
  const auto field = random_field(13, 11, 1);
  const auto image = random_image(13, 11, 3, 2);
  const auto w = gather(image, field);
  const auto wr = reference::gather(image, field);
  REQUIRE(w.values.size() == wr.values.size());
  for (std::size_t i = 0; i < w.values.size(); ++i) CHECK(w.values[i] == doctest::Approx(wr.values[i]).epsilon(1e-12));
  const auto m = slice_means(field, w), mr = reference::slice_means(field, wr);
  for (std::size_t i = 0; i < m.features.data().size(); ++i)
    CHECK(m.features.data()[i] == doctest::Approx(mr.features.data()[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < m.distance.data().size(); ++i)
    CHECK(m.distance.data()[i] == doctest::Approx(mr.distance.data()[i]).epsilon(1e-12));
  const auto v = slice_variances(field, w), vr = reference::slice_variances(field, wr);
  for (std::size_t i = 0; i < v.features.data().size(); ++i) {
    CHECK(v.features.data()[i] == doctest::Approx(vr.features.data()[i]).epsilon(1e-9));
    CHECK(v.distance.data()[i] == doctest::Approx(vr.distance.data()[i]).epsilon(1e-9));
  }
  const auto b = global_boundary_map(field, 0.3, 0.5), br = reference::global_boundary_map(field, 0.3, 0.5);
  for (std::size_t i = 0; i < b.data().size(); ++i) CHECK(b.data()[i] == doctest::Approx(br.data()[i]).epsilon(1e-12));
}

TEST_CASE("single patch gather is a windowed wedge mean") {
  // 1x1 image: the only pixel is in every window, so each nonempty wedge
  // holding the pixel averages to its value.
  JunctionField f(1, 1, make_junction({0.5, 0.0}, 0.0, {1, 1, 1}));
  ImageF img(1, 1, 2);
  img(0, 0, 0) = 0.25;
  img(0, 0, 1) = 0.75;
  const auto w = gather(img, f);
  const int j = wedge_index(f.junction(0), {0, 0}) - 1;
  CHECK(w.valid[j] == 1);
  CHECK(w.feature(0, j)[0] == doctest::Approx(0.25));
  CHECK(w.feature(0, j)[1] == doctest::Approx(0.75));
  int invalid = 0;
  for (int i = 0; i < 3; ++i) invalid += w.valid[i] == 0;
  CHECK(invalid == 2);
}

TEST_CASE("smoothed features stay inside the local value range") {
  const int H = 20, W = 20;
  const auto field = random_field(H, W, 7);
  const auto image = random_image(H, W, 1, 8);
  const auto m = slice_means(field, gather(image, field));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double lo = 1e9, hi = -1e9;
      for (int yy = std::max(0, y - 16); yy <= std::min(H - 1, y + 16); ++yy)
        for (int xx = std::max(0, x - 16); xx <= std::min(W - 1, x + 16); ++xx)
          lo = std::min(lo, image(xx, yy)), hi = std::max(hi, image(xx, yy));
      CHECK(m.features(x, y) >= lo - 1e-12);
      CHECK(m.features(x, y) <= hi + 1e-12);
    }
}

TEST_CASE("affinity kernels sum to one and reproduce the slice") {
  const int H = 18, W = 15;
  const auto field = random_field(H, W, 3);
  const auto image = random_image(H, W, 3, 4);
  const auto wedges = gather(image, field);
  const auto m = slice_means(field, wedges);
  for (auto [x, y] : {std::pair{0, 0}, {W - 1, H - 1}, {7, 9}, {3, 12}}) {
    const AffinityKernel k = affinity_map(field, wedges, x, y);
    CHECK(k.weights.height() == kAffinitySide);
    double s = 0.0;
    for (double v : k.weights.data()) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    const auto applied = apply_kernel(k, image);
    for (int c = 0; c < 3; ++c) CHECK(applied[c] == doctest::Approx(m.features(x, y, c)).epsilon(1e-10));
  }
}

TEST_CASE("constant image gives zero feature variance") {
  const auto field = random_field(9, 9, 5);
  ImageF img(9, 9, 3, 0.4);
  const auto v = slice_variances(field, gather(img, field));
  for (double x : v.features.data()) CHECK(std::abs(x) < 1e-12);
}

TEST_CASE("boundary map of a far junction is near zero") {
  JunctionField f(9, 9, uniform_far_junction());
  const Map b = global_boundary_map(f, 0.3, 1.0);
  for (double v : b.data()) CHECK(v < 1e-3);
}
