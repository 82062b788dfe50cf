#include "doctest.h"

#include "ba/data.hpp"
#include "ba/eval.hpp"

using namespace ba;

namespace {

BinaryMap ring(int H, int W, double r, double cx, double cy) {
  Map d(H, W, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) d(x, y) = std::abs(std::hypot(x - cx, y - cy) - r);
  return boundary_from_distance(d);
}

Map to_soft(const BinaryMap& b) {
  Map m(b.height(), b.width(), 1);
  for (std::size_t i = 0; i < b.data().size(); ++i) m.data()[i] = b.data()[i];
  return m;
}

}  // namespace

TEST_CASE("greedy matching on a hand-made case") {
  BinaryMap gt(5, 5, 1, 0), pred(5, 5, 1, 0);
  gt(1, 1) = gt(3, 3) = 1;
  pred(1, 2) = pred(4, 4) = pred(0, 4) = 1;
  const MatchCounts c = match_boundaries(pred, gt, 1.5);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 0);
  CHECK(c.fscore() == doctest::Approx(2 * (2.0 / 3) * 1.0 / (2.0 / 3 + 1.0)));
  CHECK(MatchCounts{}.fscore() == 0.0);
}

TEST_CASE("ground truth against itself scores one and empty scores zero") {
  std::vector<Map> preds;
  std::vector<BinaryMap> gts;
  for (int i = 0; i < 3; ++i) {
    gts.push_back(ring(40, 40, 8.0 + 2 * i, 19.5, 20.2));
    preds.push_back(to_soft(gts.back()));
  }
  EvalConfig cfg;
  CHECK(ods_fscore(preds, gts, cfg).f == doctest::Approx(1.0));
  std::vector<Map> empty(3, Map(40, 40, 1, 0.0));
  CHECK(ods_fscore(empty, gts, cfg).f == 0.0);
}

TEST_CASE("one pixel shift is forgiven at tolerance two") {
  const BinaryMap gt = ring(50, 50, 12.0, 24.3, 25.1);
  BinaryMap shifted(50, 50, 1, 0);
  for (int y = 0; y < 50; ++y)
    for (int x = 1; x < 50; ++x) shifted(x, y) = gt(x - 1, y);
  const MatchCounts c = match_boundaries(shifted, gt, 2.0);
  CHECK(c.fscore() == doctest::Approx(1.0));
  CHECK(match_boundaries(shifted, gt, 0.5).fscore() < 0.5);
}

TEST_CASE("thinning leaves one-pixel curves and keeps thin input") {
  BinaryMap thick(20, 20, 1, 0);
  for (int y = 5; y < 15; ++y)
    for (int x = 2; x < 18; ++x) thick(x, y) = (y >= 9 && y <= 11);
  const BinaryMap t = thin(thick);
  int count = 0;
  for (int x = 0; x < 20; ++x) {
    int col = 0;
    for (int y = 0; y < 20; ++y) col += t(x, y);
    CHECK(col <= 1);
    if (x >= 5 && x <= 14) CHECK(col == 1);
    count += col;
  }
  CHECK(count >= 10);
  CHECK(thin(t) == t);
  const BinaryMap r = ring(30, 30, 9.0, 14.5, 14.5);
  CHECK(thin(r) == r);
}

TEST_CASE("boundaries leaving the frame keep their ends") {
  BinaryMap line(10, 10, 1, 0);
  for (int x = 0; x < 10; ++x) line(x, 4) = 1;
  const BinaryMap t = thin(line);
  CHECK(t(0, 4) == 1);
  CHECK(t(9, 4) == 1);
}

TEST_CASE("canny finds a step edge") {
  ImageF img(20, 20, 1, 0.2);
  for (int y = 0; y < 20; ++y)
    for (int x = 10; x < 20; ++x) img(x, y) = 0.8;
  const BinaryMap e = canny(img, 0.02, 0.05, 1.0);
  for (int y = 3; y < 17; ++y) {
    int row = 0;
    for (int x = 0; x < 20; ++x) {
      row += e(x, y);
      if (e(x, y)) CHECK(std::abs(x - 9.5) <= 1.0);
    }
    CHECK(row == 1);
  }
  const BinaryMap flat = canny(ImageF(20, 20, 1, 0.5), 0.02, 0.05, 1.0);
  int any = 0;
  for (auto v : flat.data()) any += v;
  CHECK(any == 0);
}

TEST_CASE("threshold grid and config validation") {
  const auto t = uniform_thresholds(3);
  CHECK(t == std::vector<double>{0.25, 0.5, 0.75});
  EvalConfig cfg;
  cfg.thresholds = {0.5, 0.4};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK_THROWS_AS(eval_config_from_json({{"bogus", 1}}), ContractError);
}

TEST_CASE("repeatability of identical levels is one") {
  std::vector<Map> level;
  for (int i = 0; i < 2; ++i) level.push_back(to_soft(ring(30, 30, 7.0 + i, 15, 15)));
  const auto r = repeatability({level, level}, 0.5, EvalConfig{});
  REQUIRE(r.size() == 2);
  CHECK(r[1] == doctest::Approx(1.0));
}
