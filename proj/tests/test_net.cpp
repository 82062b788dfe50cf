#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ba/net.hpp"

using namespace ba;

namespace {

ImageF random_image(int H, int W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ImageF img(H, W, 3);
  for (double& v : img.data()) v = U(rng);
  return img;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("default parameter count and breakdown") {
  const auto w = init_weights(ModelConfig{}, 1);
  const std::size_t n = param_count(w);
  CHECK(n >= 150000);
  CHECK(n <= 300000);
  std::size_t sum = 0;
  for (const auto& [name, c] : param_breakdown(w)) sum += c;
  CHECK(sum == n);
  CHECK(param_count(init_weights(ModelConfig{}, 2)) == n);
}

TEST_CASE("widening the MLPs adds the closed-form count") {
  const ModelConfig base;
  ModelConfig wide = base;
  wide.attn_hidden *= 2;
  // Each round's MLP: (q+1) h + h q weights and biases, q = query width.
  const std::size_t q = base.query_width(), h = base.attn_hidden;
  const std::size_t rounds = static_cast<std::size_t>(base.blocks) * base.rounds;
  CHECK(param_count(init_weights(wide, 1)) - param_count(init_weights(base, 1)) == rounds * h * (2 * q + 1));

  ModelConfig mix = base;
  mix.mixer_hidden *= 2;
  const std::size_t d = base.hidden, m = base.mixer_hidden;
  CHECK(param_count(init_weights(mix, 1)) - param_count(init_weights(base, 1)) ==
        static_cast<std::size_t>(base.mixer_blocks) * m * (2 * d + 1));
}

TEST_CASE("forward pass shapes, iterations and determinism") {
  const auto w = init_weights(ModelConfig{}, 3);
  const ImageF img = random_image(13, 12, 4);
  NetOptions opt;
  opt.keep_hidden = opt.keep_attention = true;
  const auto a = run_model(w, img, opt);
  const auto b = run_model(w, img, opt);
  REQUIRE(a.raw.size() == 8);
  CHECK(a.raw[0].rows() == 13 * 12);
  CHECK(a.raw[0].cols() == kRawParams);
  CHECK(a.hidden[7].cols() == 64);
  CHECK(a.gamma0.rows() == 13 * 12);
  for (std::size_t i = 0; i < a.raw.size(); ++i) CHECK(a.raw[i] == b.raw[i]);
  for (const auto& att : a.attention)
    for (int n = 0; n < att.rows(); ++n)
      for (int h = 0; h < 4; ++h) CHECK(att.row(n).segment(h * 121, 121).sum() == doctest::Approx(1.0).epsilon(1e-5));
  for (int i = 0; i < a.raw.back().size(); ++i) CHECK(std::isfinite(a.raw.back().data()[i]));
}

TEST_CASE("grayscale input is treated as replicated color") {
  const auto w = init_weights(ModelConfig{}, 3);
  ImageF gray(12, 12, 1);
  std::mt19937_64 rng(1);
  for (double& v : gray.data()) v = std::uniform_real_distribution<double>(0, 1)(rng);
  const auto a = run_model(w, gray), b = run_model(w, to_rgb(gray));
  CHECK(a.raw.back() == b.raw.back());
}

TEST_CASE("inputs smaller than the attention window are rejected") {
  const auto w = init_weights(ModelConfig{}, 3);
  CHECK_THROWS_AS(run_model(w, random_image(10, 10, 1)), ContractError);
  CHECK_THROWS_AS(run_model(w, random_image(11, 10, 1)), ContractError);
  CHECK_NOTHROW(run_model(w, random_image(11, 11, 1)));
}

TEST_CASE("mixer receptive field is four pixels") {
  const auto w = init_weights(ModelConfig{}, 5);
  ImageF a = random_image(15, 15, 6), b = a;
  b(7, 7, 0) += 0.5;
  nn::Tape<double> t(false);
  const auto p = bind_params(t, w);
  auto rows = [](const ImageF& im) {
    nn::Mat<double> m(im.pixels(), 3);
    for (std::size_t k = 0; k < im.pixels(); ++k)
      for (int c = 0; c < 3; ++c) m(k, c) = im.data()[k * 3 + c];
    return m;
  };
  const auto ga = mixer_forward(t, p, w.config, rows(a), 15, 15)->value;
  const auto gb = mixer_forward(t, p, w.config, rows(b), 15, 15)->value;
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x) {
      const double diff = (ga.row(y * 15 + x) - gb.row(y * 15 + x)).cwiseAbs().maxCoeff();
      if (std::max(std::abs(x - 7), std::abs(y - 7)) > 4) CHECK(diff == 0.0);
      else if (x == 7 && y == 7) CHECK(diff > 0.0);
    }
}

TEST_CASE("end-to-end gradient matches central differences") {
  const auto w = init_weights(ModelConfig{}, 7);
  const Sample s = gen_stage1(sample_seed(3, 0));
  const ImageF img = crop(s.input, 4, 4, 12, 12);
  const Supervision sup{crop(s.clean, 4, 4, 12, 12), crop(s.distance, 4, 4, 12, 12)};
  NetOptions opt;
  const auto buf = make_loss_buffers<double>(sup, opt.loss);
  nn::Tape<double> tape(true);
  const auto p = bind_params(tape, w);
  model_forward(tape, p, img, opt, &buf, 1.0);
  tape.backward();
  const auto g = param_grads(p);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t pi = rng() % w.params.size();
    const std::size_t e = rng() % w.params[pi].data.size();
    std::size_t off = 0;
    for (std::size_t i = 0; i < pi; ++i) off += w.params[i].data.size();
    auto loss = [&](double h) {
      nn::Tape<double> t(false);
      auto q = bind_params(t, w);
      q.vars[pi]->value.data()[e] += h;
      return model_forward(t, q, img, opt, &buf, 1.0).loss;
    };
    const double h = 1e-4;
    const double fd = (8 * (loss(h) - loss(-h)) - (loss(2 * h) - loss(-2 * h))) / (12 * h);
    INFO(w.params[pi].name << "[" << e << "]");
    CHECK(std::abs(fd - g[off + e]) <= 1e-3 * std::max(std::abs(fd), 1e-2));
  }
}

TEST_CASE("weights round-trip through the tensor container") {
  const auto w = init_weights(ModelConfig{}, 9);
  save_weights("test_net_weights.bin", w, {{"note", "x"}});
  const auto r = load_weights("test_net_weights.bin");
  REQUIRE(r.params.size() == w.params.size());
  for (std::size_t i = 0; i < w.params.size(); ++i) {
    CHECK(r.params[i].name == w.params[i].name);
    CHECK(r.params[i].data == w.params[i].data);
  }
  CHECK(to_json(r.config) == to_json(w.config));
}

TEST_CASE("training with zero learning rate keeps the weights") {
  TrainConfig tc;
  tc.steps = 2;
  tc.batch = 2;
  tc.lr = 0.0;
  TrainState st = initial_state(ModelConfig{}, 1);
  const auto before = st.weights.params;
  train(st, tc, LossConfig{}, generated_source(1, 0), "test_net_lr0");
  CHECK(st.step == 2);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(st.weights.params[i].data == before[i].data);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  namespace fs = std::filesystem;
  fs::remove_all("test_net_full");
  fs::remove_all("test_net_split");
  TrainConfig tc;
  tc.steps = 3;
  tc.batch = 2;
  tc.seed = 5;
  const LossConfig lc;
  TrainState full = initial_state(ModelConfig{}, 2);
  train(full, tc, lc, generated_source(1, tc.seed), "test_net_full");

  TrainConfig first = tc;
  first.steps = 2;
  TrainState a = initial_state(ModelConfig{}, 2);
  train(a, first, lc, generated_source(1, tc.seed), "test_net_split");
  // A row logged after the checkpoint by a run that was then killed.
  std::ofstream("test_net_split/loss.csv", std::ios::app) << "3,1,1,1,1,1,1,1\n";
  TrainState b = load_checkpoint("test_net_split/checkpoint.bin");
  CHECK(b.step == 2);
  train(b, tc, lc, generated_source(1, tc.seed), "test_net_split");
  CHECK(slurp("test_net_split/loss.csv") == slurp("test_net_full/loss.csv"));
  for (std::size_t i = 0; i < full.weights.params.size(); ++i)
    CHECK(b.weights.params[i].data == full.weights.params[i].data);
}
