#include "ba/refine.hpp"

#include <cmath>
#include <stdexcept>

#include "ba/prepared.hpp"

namespace ba {

void RefineConfig::validate() const {
  require(n_orientations >= 1, "refine config: n_orientations must be positive");
  require(steps >= 1, "refine config: steps must be at least 1");
  require(step_size > 0.0, "refine config: step_size must be positive");
  require(lambda_c >= 0.0, "refine config: lambda_c must be nonnegative");
  require(tau > 0.0, "refine config: tau must be positive");
  require(max_halvings >= 0, "refine config: max_halvings must be nonnegative");
}

RefineConfig refine_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "refine config: expected a JSON object");
  RefineConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_orientations") cfg.n_orientations = value.get<int>();
    else if (key == "steps") cfg.steps = value.get<int>();
    else if (key == "step_size") cfg.step_size = value.get<double>();
    else if (key == "lambda_c") cfg.lambda_c = value.get<double>();
    else if (key == "tau") cfg.tau = value.get<double>();
    else if (key == "max_halvings") cfg.max_halvings = value.get<int>();
    else if (key == "logit_floor") cfg.logit_floor = value.get<double>();
    else if (key == "boundary_variance") cfg.boundary_variance = value.get<bool>();
    else throw ContractError("refine config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const RefineConfig& cfg) {
  return {{"n_orientations", cfg.n_orientations}, {"steps", cfg.steps},
          {"step_size", cfg.step_size},           {"lambda_c", cfg.lambda_c},
          {"tau", cfg.tau},                       {"max_halvings", cfg.max_halvings},
          {"logit_floor", cfg.logit_floor},       {"boundary_variance", cfg.boundary_variance}};
}

double patch_reconstruction_error(const ImageF& image, int kx, int ky, const Junction& g, const WindowWeights& p) {
  const int C = image.channels();
  const PreparedJunction pj(g);
  const PatchBox box(kx, ky, image.width(), image.height());
  std::array<double, 3> den{}, sq{};
  std::array<double, 9> num{};
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      const Vec2 rel{static_cast<double>(x - kx), static_cast<double>(y - ky)};
      const double w = window_value(p, rel);
      if (w <= 0.0) continue;
      const int j = pj.wedge(rel);
      den[j] += w;
      for (int c = 0; c < C; ++c) {
        const double f = image(x, y, c);
        num[j * 3 + c] += w * f;
        sq[j] += w * f * f;
      }
    }
  }
  double err = 0.0;
  for (int j = 0; j < 3; ++j) {
    if (den[j] <= 0.0) continue;
    err += sq[j];
    for (int c = 0; c < C; ++c) err -= num[j * 3 + c] * num[j * 3 + c] / den[j];
  }
  return std::max(0.0, err);
}

JunctionField init_field(const ImageF& image, const RefineConfig& cfg) {
  cfg.validate();
  require(!image.empty(), "init_field: empty image");
  const int W = image.width(), H = image.height();
  const WindowWeights window{{0.0, 0.0, 1.0}};
  JunctionField field(H, W, uniform_far_junction(), window);
  std::vector<Junction> candidates;
  for (int i = 0; i < cfg.n_orientations; ++i)
    candidates.push_back(edge_junction({0.0, 0.0}, kPi * i / cfg.n_orientations));

#pragma omp parallel for schedule(dynamic, 16)
  for (int k = 0; k < W * H; ++k) {
    const int kx = k % W, ky = k / W;
    const double uniform = patch_reconstruction_error(image, kx, ky, uniform_far_junction(), window);
    double best = uniform - 1e-9 * (1.0 + uniform);
    for (const auto& g : candidates) {
      const double e = patch_reconstruction_error(image, kx, ky, g, window);
      if (e < best) {
        best = e;
        field.junction(static_cast<std::size_t>(k)) = g;
      }
    }
  }
  return field;
}

namespace {

struct Evaluation {
  std::vector<double> params;
  FieldForward<double> fwd;
  double energy = 0.0;
};

FieldKernelOptions kernel_options(const RefineConfig& cfg) {
  FieldKernelOptions opt;
  opt.smooth.tau = cfg.tau;
  opt.boundary_variance = cfg.boundary_variance;
  opt.reconstruction = true;
  return opt;
}

Evaluation evaluate(const ImageF& image, const RawField& raw, const RefineConfig& cfg) {
  Evaluation ev;
  ev.params.resize(raw.size() * kFieldParams);
  decode_params(raw.values.data(), ev.params.data(), raw.size());
  field_forward(raw.height, raw.width, image.channels(), ev.params.data(), image.data().data(),
                kernel_options(cfg), static_cast<const PatchSupervision<double>*>(nullptr), ev.fwd);
  double consistency = 0.0;
  for (std::size_t n = 0; n < raw.size(); ++n) consistency += ev.fwd.nu_f[n] + ev.fwd.nu_v[n];
  ev.energy = ev.fwd.recon + cfg.lambda_c * consistency;
  return ev;
}

std::vector<double> gradient(const ImageF& image, const RawField& raw, const RefineConfig& cfg,
                             const Evaluation& ev) {
  const std::size_t N = raw.size();
  const std::vector<double> lam(N, cfg.lambda_c);
  const FieldUpstream<double> up{nullptr, nullptr, lam.data(), lam.data(), 0.0, 0.0, 1.0};
  std::vector<double> gp(N * kFieldParams, 0.0);
  field_backward(ev.params.data(), image.data().data(), kernel_options(cfg),
                 static_cast<const PatchSupervision<double>*>(nullptr), ev.fwd, up, gp.data());
  std::vector<double> g(N * kRawParams, 0.0);
  decode_backward(raw.values.data(), gp.data(), g.data(), N);
  return g;
}

// Keeps (sin, cos) on the unit circle and logits bounded; decoding is unchanged
// except where the floor binds.
void normalize(RawField& raw, double floor) {
  for (std::size_t k = 0; k < raw.size(); ++k) {
    double* r = raw.pixel(k);
    const double n = std::hypot(r[2], r[3]);
    if (n > 0.0) {
      r[2] /= n;
      r[3] /= n;
    } else {
      r[2] = 0.0;
      r[3] = 1.0;
    }
    for (int block = 0; block < 2; ++block) {
      double* a = r + 4 + 3 * block;
      const double mx = std::max({a[0], a[1], a[2]});
      for (int j = 0; j < 3; ++j) a[j] = std::max(a[j] - mx, floor);
    }
  }
}

void check_finite(double e, int step) {
  if (!std::isfinite(e))
    throw std::runtime_error("refine: energy became non-finite at step " + std::to_string(step));
}

}  // namespace

double refine_energy(const ImageF& image, const RawField& raw, const RefineConfig& cfg, std::vector<double>* grad) {
  const Evaluation ev = evaluate(image, raw, cfg);
  if (grad) *grad = gradient(image, raw, cfg, ev);
  return ev.energy;
}

RefineResult refine_field(const ImageF& image, const JunctionField& init, const RefineConfig& cfg,
                          const RefineObserver& observer) {
  cfg.validate();
  require(init.matches(image), "refine_field: field and image dimensions differ");
  RefineResult res;
  res.raw = encode_field(init);
  normalize(res.raw, cfg.logit_floor);
  Evaluation cur = evaluate(image, res.raw, cfg);
  check_finite(cur.energy, 0);
  res.energy.push_back(cur.energy);
  if (observer) observer(0, res.raw);

  const std::size_t N = res.raw.size();
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto g = gradient(image, res.raw, cfg, cur);
    // Step direction: the gradient with each parameter block of each patch
    // (position, angle pair, angle logits, window logits) rescaled to at
    // most unit length.
    std::vector<double> dir(g.size());
    static constexpr int kBlocks[5] = {0, 2, 4, 7, 10};
    for (std::size_t k = 0; k < N; ++k) {
      for (int b = 0; b < 4; ++b) {
        double n2 = 0.0;
        for (int i = kBlocks[b]; i < kBlocks[b + 1]; ++i) n2 += g[k * kRawParams + i] * g[k * kRawParams + i];
        const double s = 1.0 / std::max(1.0, std::sqrt(n2));
        for (int i = kBlocks[b]; i < kBlocks[b + 1]; ++i) dir[k * kRawParams + i] = s * g[k * kRawParams + i];
      }
    }
    bool accepted = false;
    double eta = cfg.step_size;
    for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt, eta *= 0.5) {
      RawField trial = res.raw;
      for (std::size_t i = 0; i < trial.values.size(); ++i) trial.values[i] -= eta * dir[i];
      normalize(trial, cfg.logit_floor);
      Evaluation ev = evaluate(image, trial, cfg);
      check_finite(ev.energy, step);
      if (ev.energy <= cur.energy) {
        res.raw = std::move(trial);
        cur = std::move(ev);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    res.energy.push_back(cur.energy);
    if (observer) observer(step, res.raw);
  }
  return res;
}

}  // namespace ba
