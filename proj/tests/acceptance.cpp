// Acceptance run: one PASS/FAIL line per criterion. Arguments select
// criteria by number (default: all).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ba/data.hpp"
#include "ba/eval.hpp"
#include "ba/fieldops.hpp"
#include "ba/net.hpp"
#include "ba/objective.hpp"
#include "ba/pipeline.hpp"
#include "ba/refine.hpp"

#include <omp.h>

namespace fs = std::filesystem;
using namespace ba;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kWork = "acceptance_work";

// --- 1 --------------------------------------------------------------------

double sampled_ray_distance(Vec2 o, double angle, Vec2 p) {
  const Vec2 e{std::cos(angle), std::sin(angle)};
  auto at = [&](double t) { return norm(p - (o + t * e)); };
  const double coarse = 0.05;
  double best_t = 0.0, best = at(0.0);
  for (double t = coarse; t <= 40.0; t += coarse)
    if (const double d = at(t); d < best) best = d, best_t = t;
  const double lo = std::max(0.0, best_t - coarse), hi = best_t + coarse;
  for (double t = lo; t <= hi; t += 1e-4) best = std::min(best, at(t));
  return best;
}

Outcome geometry_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), W(0.02, 1.0);
  double worst = 0.0;
  long partition_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    std::array<double, 3> omega{W(rng), W(rng), W(rng)};
    if (i % 5 == 0) omega[rng() % 3] = 0.0;
    const Junction g = make_junction({5 * U(rng), 5 * U(rng)}, A(rng), omega);
    const Vec2 x{9 * U(rng), 9 * U(rng)};
    // Rays start every nonempty wedge.
    const auto w = g.omega_hat();
    double oracle = std::numeric_limits<double>::infinity(), cum = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (w[j] > 0.0) oracle = std::min(oracle, sampled_ray_distance(g.u, g.theta + kTwoPi * cum, x));
      cum += w[j];
    }
    worst = std::max(worst, std::abs(junction_distance(g, x) - oracle));
    int s = 0;
    for (int j = 1; j <= 3; ++j) s += wedge_support(g, j, x);
    partition_failures += s != 1;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-3 && partition_failures == 0 && t < 10.0,
          fmt("max |distance - sampled| %.2e over 10000 pairs, partition failures %ld, %.1f s", worst,
              partition_failures, t)};
}

// --- 2 --------------------------------------------------------------------

Outcome constants() {
  const double b = boundary_strength_from_distance(0.3, 0.3);
  Map d(1, 1, 1, 0.0);
  const double alpha = pixel_importance(d, LossConfig{})(0, 0);
  const double err = std::abs(alpha - (std::exp(-0.1) + 0.3));
  return {b == 0.5 && err <= 1e-9, fmt("boundary_strength(0.3, 0.3) = %.17g, |alpha(0) - (e^-0.1 + 0.3)| = %.1e", b, err)};
}

// --- 3 --------------------------------------------------------------------

Outcome affinity_identity() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), P(0.05, 1.0), V(0.0, 1.0);
  const int H = 40, W = 36;
  JunctionField field(H, W);
  for (std::size_t k = 0; k < field.size(); ++k) {
    field.junction(k) = make_junction({5 * U(rng), 5 * U(rng)}, A(rng), {P(rng), P(rng), P(rng)});
    const double a = P(rng), b = P(rng), c = P(rng);
    field.window(k).p = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
  }
  ImageF img(H, W, 3);
  for (double& v : img.data()) v = V(rng);
  const WedgeFeatures wedges = gather(img, field);
  const SliceMeans m = slice_means(field, wedges);
  double worst = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int x = static_cast<int>(rng() % W), y = static_cast<int>(rng() % H);
    const AffinityKernel k = affinity_map(field, wedges, x, y);
    double s = 0.0;
    for (double v : k.weights.data()) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    const auto applied = apply_kernel(k, img);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(applied[c] - m.features(x, y, c)));
  }
  return {worst <= 1e-9 && worst_sum <= 1e-9,
          fmt("max |kernel . image - slice| %.2e, max |sum - 1| %.2e at 100 pixels", worst, worst_sum)};
}

// --- 4 --------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const int H = 12, W = 12, C = 3;
  LossConfig cfg;
  double worst = 0.0;
  long checked = 0;
  for (int inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(400 + inst);
    std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 1.0);
    std::vector<double> prev(H * W * kRawParams), fin(prev.size()), image(H * W * C);
    for (auto* v : {&prev, &fin})
      for (std::size_t i = 0; i < v->size(); ++i) (*v)[i] = (i % kRawParams < 2 ? 3.0 : 1.5) * U(rng);
    for (double& v : image) v = P(rng);
    const Sample s = gen_stage1(rng());
    const Supervision sup{crop(s.clean, 4, 4, W, H), crop(s.distance, 4, 4, W, H)};
    const auto buf = make_loss_buffers<double>(sup, cfg);
    auto total = [&](const std::vector<double>& a, const std::vector<double>& b) {
      const LossTerms lp = surrogate_loss<double>(H, W, C, a.data(), image.data(), buf, cfg, 1.0, nullptr);
      const LossTerms lf = surrogate_loss<double>(H, W, C, b.data(), image.data(), buf, cfg, 1.0, nullptr);
      return total_loss(lp, lf, cfg);
    };
    std::vector<double> gp, gf;
    surrogate_loss<double>(H, W, C, prev.data(), image.data(), buf, cfg, 1.0, &gp);
    surrogate_loss<double>(H, W, C, fin.data(), image.data(), buf, cfg, cfg.final_iter_weight, &gf);
    double scale = 0.0;
    for (double g : gp) scale = std::max(scale, std::abs(g));
    for (int t = 0; t < 40; ++t) {
      const bool on_final = t % 2;
      const std::size_t i = rng() % prev.size();
      const double h = 5e-5;
      auto eval = [&](double d) {
        auto a = prev, b = fin;
        (on_final ? b : a)[i] += d;
        return total(a, b);
      };
      const double fd = (8 * (eval(h) - eval(-h)) - (eval(2 * h) - eval(-2 * h))) / (12 * h);
      const double bp = (on_final ? gf : gp)[i];
      // Relative error with a floor far below the instance's gradient scale.
      worst = std::max(worst, std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-6 * scale}));
      ++checked;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-3 && t < 300.0,
          fmt("max relative error %.2e over %ld coordinates of 20 instances, %.1f s", worst, checked, t)};
}

// --- 5 --------------------------------------------------------------------

Outcome refiner() {
  const auto t0 = Clock::now();
  const RefineConfig cfg;
  const EvalConfig ec;
  std::vector<Map> clean_pred, noisy_pred;
  std::vector<BinaryMap> gts;
  std::vector<ImageF> noisy;
  for (int s = 0; s < 10; ++s) {
    const Sample smp = gen_edge(1000 + s, 32);
    gts.push_back(boundary_from_distance(smp.distance));
    clean_pred.push_back(infer_variational(smp.clean, cfg).maps.boundary);
    noisy.push_back(add_noise(smp.clean, NoiseKind::gaussian, 0.15, 77 + s));
    noisy_pred.push_back(infer_variational(noisy.back(), cfg).maps.boundary);
  }
  const double f_clean = ods_fscore(clean_pred, gts, ec).f;
  const double f_noisy = ods_fscore(noisy_pred, gts, ec).f;
  double sigma = 0.0;
  const double f_canny = canny_best(noisy, gts, {1.0, 1.5, 2.0, 3.0}, ec, &sigma).f;
  const double t = seconds_since(t0);
  return {f_clean >= 0.95 && f_noisy > f_canny && t < 600.0,
          fmt("noiseless F %.4f; sigma 0.15: refiner F %.4f vs Canny F %.4f (sigma %.1f); %.0f s", f_clean, f_noisy,
              f_canny, sigma, t)};
}

// --- 6 --------------------------------------------------------------------

ModelWeights trained;
bool have_trained = false;

Outcome training() {
  const fs::path dir = kWork / "train";
  fs::remove_all(dir);
  TrainConfig tc;  // stage 1, 2000 steps, batch 16
  const LossConfig lc;
  TrainState st = initial_state(ModelConfig{}, tc.seed);
  const auto t0 = Clock::now();
  std::vector<double> losses;
  train(st, tc, lc, generated_source(tc.stage, tc.seed), dir.string(), [&](const StepReport& r) {
    losses.push_back(r.loss);
    if (r.step % 100 == 0)
      std::fprintf(stderr, "  train step %ld loss %.1f (%.0f s)\n", r.step, r.loss, seconds_since(t0));
  });
  const double t = seconds_since(t0);
  trained = st.weights;
  have_trained = true;
  save_weights((dir / "weights.bin").string(), st.weights);

  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) first += losses[i] / 50;
  for (std::size_t i = losses.size() - 50; i < losses.size(); ++i) last += losses[i] / 50;
  const double reduction = 1.0 - last / first;

  const auto held = held_out_comparison(st.weights, validation_samples(tc.stage, tc.seed, 100), EvalConfig{});
  const bool ok = reduction >= 0.5 && held.model.f >= held.canny.f && t <= 3600.0;
  return {ok, fmt("loss moving average %.1f -> %.1f (%.1f%% reduction); held-out F %.4f vs Canny %.4f "
                  "(sigma %.1f) on 100 samples; training %.0f s with %d thread(s)",
                  first, last, 100 * reduction, held.model.f, held.canny.f, held.canny_sigma, t,
                  omp_get_max_threads())};
}

// --- 7 --------------------------------------------------------------------

Outcome architecture() {
  const auto t0 = Clock::now();
  const ModelWeights w = have_trained ? trained : init_weights(ModelConfig{}, 1);
  const std::size_t count = param_count(w);
  std::string breakdown;
  for (const auto& [name, n] : param_breakdown(w)) breakdown += fmt(" %s=%zu", name.c_str(), n);

  // Shift equivariance: a crop offset by s sees the same interior as the
  // full image wherever the receptive field fits inside both.
  const int S = 400, s = 3, reach = 196;
  Sample scene = gen_stage3(17);
  SceneRender big = gen_scene(random_scene(17, S, S, 40, 50));
  const ImageF full = add_noise(big.clean, NoiseKind::gaussian, 0.05, 1);
  const ImageF shifted = crop(full, s, s, S - s, S - s);
  auto final_raw = [&](const ImageF& img) {
    nn::Tape<double> tape(false);
    const auto p = bind_params(tape, w);
    return model_forward(tape, p, img, NetOptions{}).raw.back();
  };
  const nn::Mat<double> a = final_raw(full), b = final_raw(shifted);
  double eq_err = 0.0;
  int compared = 0;
  for (int y = reach; y < S - s - reach; ++y)
    for (int x = reach; x < S - s - reach; ++x) {
      const auto ra = a.row((y + s) * S + (x + s)), rb = b.row(y * (S - s) + x);
      eq_err = std::max(eq_err, (ra - rb).cwiseAbs().maxCoeff());
      ++compared;
    }

  // Weights from 21x21 training applied to a 125x125 input.
  const NetOutput<float> large = run_model(w, scene.input);
  bool finite = large.raw.size() == 8;
  for (const auto& r : large.raw)
    for (int i = 0; i < r.size(); ++i) finite = finite && std::isfinite(r.data()[i]);
  const Inference inf = infer_net(w, scene.input);
  finite = finite && inf.maps.boundary.height() == 125 && inf.maps.boundary.width() == 125;

  const bool ok = large.raw.size() == 8 && eq_err < 1e-5 && compared > 0 && finite && count >= 150000 &&
                  count <= 300000;
  return {ok, fmt("%zu fields; shift error %.2e over %d interior pixels; 125x125 run %s; %zu parameters (%s); "
                  "%s weights; %.0f s",
                  large.raw.size(), eq_err, compared, finite ? "finite" : "NOT finite", count, breakdown.c_str() + 1,
                  have_trained ? "trained" : "untrained", seconds_since(t0))};
}

// --- 8 --------------------------------------------------------------------

Outcome data_determinism() {
  const fs::path a = kWork / "synth_a", b = kWork / "synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string cli = BA_CLI_PATH;
  const int r1 = std::system((cli + " --seed 8 --out " + a.string() + " synth --stage 2 --count 20 2>/dev/null").c_str());
  const int r2 = std::system((cli + " --out " + b.string() + " replay " + (a / "manifest.json").string() + " 2>/dev/null").c_str());
  long files = 0, differing = 0;
  if (r1 == 0 && r2 == 0) {
    for (const auto& e : fs::directory_iterator(a)) {
      ++files;
      const fs::path other = b / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
  }
  double excess = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Sample smp = gen_stage2(seed);
    const Map& d = smp.distance;
    for (int y = 0; y < d.height(); ++y)
      for (int x = 0; x < d.width(); ++x)
        for (auto [dx, dy] : {std::pair{1, 0}, {0, 1}, {1, 1}, {1, -1}})
          if (d.contains(x + dx, y + dy))
            excess = std::max(excess, std::abs(d(x, y) - d(x + dx, y + dy)) - std::hypot(dx, dy));
  }
  const bool ok = r1 == 0 && r2 == 0 && files > 0 && differing == 0 && excess <= 1e-9;
  return {ok, fmt("replay of %ld files: %ld differ (exit %d/%d); worst Lipschitz excess %.1e over 100 scenes", files,
                  differing, r1, r2, excess)};
}

// --- 9 --------------------------------------------------------------------

Outcome interpolation() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), W(0.1, 1.0);
  double worst_ratio = 0.0;
  for (int chain = 0; chain < 20; ++chain) {
    const Junction ga = make_junction({4 * U(rng), 4 * U(rng)}, A(rng), {W(rng), W(rng), W(rng)});
    const Junction gb = make_junction({4 * U(rng), 4 * U(rng)}, A(rng), {W(rng), W(rng), W(rng)});
    const double mid = ga.theta + 0.5 * angle_diff(ga.theta, gb.theta);
    const Junction g0 = make_junction({0, 0}, mid, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    std::vector<Map> maps;
    for (int i = 0; i <= 64; ++i) {
      const Junction g = i <= 32 ? interpolate_junctions(ga, g0, i / 32.0) : interpolate_junctions(g0, gb, (i - 32) / 32.0);
      maps.push_back(rasterize_patch(g, {}, 17).distance);
    }
    double sum = 0.0, mx = 0.0;
    for (int i = 0; i < 64; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < maps[i].data().size(); ++k) {
        const double e = maps[i + 1].data()[k] - maps[i].data()[k];
        d2 += e * e;
      }
      sum += std::sqrt(d2);
      mx = std::max(mx, std::sqrt(d2));
    }
    worst_ratio = std::max(worst_ratio, mx / (sum / 64));
  }
  return {worst_ratio <= 3.0, fmt("worst max/mean step change %.3f over 20 chains of 64 steps", worst_ratio)};
}

// --- 10 -------------------------------------------------------------------

Outcome evaluator() {
  const EvalConfig ec;
  std::vector<Map> self, empty, shifted;
  std::vector<BinaryMap> gts, interior;
  const int margin = 3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Sample s = gen_stage2(seed + 50);
    const BinaryMap gt = boundary_from_distance(s.distance);
    const int H = gt.height(), W = gt.width();
    gts.push_back(gt);
    Map soft(H, W, 1), shift(H, W, 1, 0.0);
    BinaryMap inner(H, W, 1, 0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        soft(x, y) = gt(x, y);
        if (x >= margin && y >= margin && x < W - margin && y < H - margin) inner(x, y) = gt(x, y);
      }
    for (int y = 0; y < H; ++y)
      for (int x = 1; x < W; ++x) shift(x, y) = inner(x - 1, y);
    self.push_back(soft);
    empty.emplace_back(H, W, 1, 0.0);
    shifted.push_back(shift);
    interior.push_back(inner);
  }
  const double f_self = ods_fscore(self, gts, ec).f;
  const double f_empty = ods_fscore(empty, gts, ec).f;
  const double f_shift = ods_fscore(shifted, interior, ec).f;
  return {f_self == 1.0 && f_empty == 0.0 && f_shift == 1.0,
          fmt("GT vs GT F %.4f; empty F %.4f; 1-px shift at r=2 F %.4f (10 scenes)", f_self, f_empty, f_shift)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry oracle", geometry_oracle},   {"constants", constants},
      {"affinity identity", affinity_identity}, {"gradient suite", gradient_suite},
      {"variational refiner", refiner},       {"toy training", training},
      {"architecture invariants", architecture}, {"data determinism", data_determinism},
      {"interpolation smoothness", interpolation}, {"evaluator sanity", evaluator}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  fs::create_directories(kWork);

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
