#include "doctest.h"

#include <random>

#include "ba/data.hpp"
#include "ba/eval.hpp"
#include "ba/pipeline.hpp"
#include "ba/refine.hpp"

using namespace ba;

TEST_CASE("energy gradient matches central differences") {
  const Sample s = gen_edge(3, 9);
  RefineConfig cfg;
  RawField raw = encode_field(init_field(s.clean, cfg));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-0.3, 0.3);
  for (double& v : raw.values) v += U(rng);
  std::vector<double> grad;
  refine_energy(s.clean, raw, cfg, &grad);
  for (int t = 0; t < 25; ++t) {
    const std::size_t i = rng() % raw.values.size();
    RawField p = raw, m = raw;
    const double h = 1e-5;
    p.values[i] += h;
    m.values[i] -= h;
    const double fd = (refine_energy(s.clean, p, cfg) - refine_energy(s.clean, m, cfg)) / (2 * h);
    CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("refinement never increases the energy") {
  const Sample s = gen_edge(5, 16);
  const ImageF img = add_noise(s.clean, NoiseKind::gaussian, 0.1, 1);
  RefineConfig cfg;
  cfg.steps = 40;
  const RefineResult r = refine_field(img, init_field(img, cfg), cfg);
  REQUIRE(r.energy.size() >= 2);
  for (std::size_t i = 1; i < r.energy.size(); ++i) CHECK(r.energy[i] <= r.energy[i - 1]);
}

TEST_CASE("constant image yields an empty boundary map") {
  RefineConfig cfg;
  cfg.steps = 20;
  const Inference r = infer_variational(ImageF(15, 15, 3, 0.4), cfg);
  for (double v : r.maps.boundary.data()) CHECK(v < 0.01);
}

TEST_CASE("initialization picks the edge orientation") {
  const Junction g = edge_junction({0, 0}, 0.0);
  const Sample s = render_junction(g, {Color{0, 0, 0}, Color{1, 1, 1}, Color{0, 0, 0}}, 17, 1);
  RefineConfig cfg;
  const JunctionField f = init_field(s.clean, cfg);
  const Junction& c = f.junction(f.index(8, 8));
  CHECK(junction_distance(c, {5.0, 0.0}) < 1e-9);
  CHECK(junction_distance(c, {0.0, 5.0}) == doctest::Approx(5.0));
}

TEST_CASE("noiseless edges are recovered") {
  std::vector<Map> preds;
  std::vector<BinaryMap> gts;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const Sample s = gen_edge(seed, 24);
    preds.push_back(infer_variational(s.clean, RefineConfig{}).maps.boundary);
    gts.push_back(boundary_from_distance(s.distance));
  }
  CHECK(ods_fscore(preds, gts, EvalConfig{}).f >= 0.95);
}
