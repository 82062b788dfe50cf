#include "ba/objective.hpp"

#include <cmath>
#include <iomanip>
#include <limits>

#include "ba/prepared.hpp"

namespace ba {

void LossConfig::validate() const {
  require(beta >= 0.0, "loss config: beta must be nonnegative");
  require(w_f >= 0.0 && w_d >= 0.0 && w_nu_f >= 0.0 && w_nu_d >= 0.0 && w_patch_f >= 0.0 && w_patch_d >= 0.0 &&
              final_iter_weight >= 0.0,
          "loss config: term weights must be nonnegative");
  require(smooth.tau > 0.0 && smooth.ray_eps > 0.0 && smooth.softmin_kappa > 0.0,
          "loss config: smoothing constants must be positive");
}

FieldKernelOptions LossConfig::kernel_options() const {
  FieldKernelOptions opt;
  opt.smooth = smooth;
  opt.boundary_variance = boundary_variance;
  return opt;
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "loss config: expected a JSON object");
  LossConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "boundary_variance") {
      cfg.boundary_variance = value.get<bool>();
      continue;
    }
    const double v = value.get<double>();
    if (key == "beta") cfg.beta = v;
    else if (key == "delta") cfg.delta = v;
    else if (key == "c_floor") cfg.c_floor = v;
    else if (key == "delta_prime") cfg.delta_prime = v;
    else if (key == "w_f") cfg.w_f = v;
    else if (key == "w_d") cfg.w_d = v;
    else if (key == "w_nu_f") cfg.w_nu_f = v;
    else if (key == "w_nu_d") cfg.w_nu_d = v;
    else if (key == "w_patch_f") cfg.w_patch_f = v;
    else if (key == "w_patch_d") cfg.w_patch_d = v;
    else if (key == "final_iter_weight") cfg.final_iter_weight = v;
    else if (key == "tau") cfg.smooth.tau = v;
    else if (key == "ray_eps") cfg.smooth.ray_eps = v;
    else if (key == "softmin_kappa") cfg.smooth.softmin_kappa = v;
    else throw ContractError("loss config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"beta", cfg.beta},
          {"delta", cfg.delta},
          {"c_floor", cfg.c_floor},
          {"delta_prime", cfg.delta_prime},
          {"w_f", cfg.w_f},
          {"w_d", cfg.w_d},
          {"w_nu_f", cfg.w_nu_f},
          {"w_nu_d", cfg.w_nu_d},
          {"w_patch_f", cfg.w_patch_f},
          {"w_patch_d", cfg.w_patch_d},
          {"final_iter_weight", cfg.final_iter_weight},
          {"boundary_variance", cfg.boundary_variance},
          {"tau", cfg.smooth.tau},
          {"ray_eps", cfg.smooth.ray_eps},
          {"softmin_kappa", cfg.smooth.softmin_kappa}};
}

Map pixel_importance(const Map& d_gt, const LossConfig& cfg) {
  Map out(d_gt.height(), d_gt.width(), 1);
  for (std::size_t n = 0; n < d_gt.pixels(); ++n)
    out.data()[n] = std::exp(-cfg.beta * (d_gt.data()[n] + cfg.delta)) + cfg.c_floor;
  return out;
}

double patch_importance(const Map& d_gt, std::size_t k, const LossConfig& cfg) {
  const int W = d_gt.width();
  const PatchBox box(static_cast<int>(k % W), static_cast<int>(k / W), W, d_gt.height());
  double s = 0.0;
  for (int y = box.y0; y <= box.y1; ++y)
    for (int x = box.x0; x <= box.x1; ++x) s += d_gt(x, y) + cfg.delta_prime;
  return 1.0 / s;
}

Map patch_importance_map(const Map& d_gt, const LossConfig& cfg) {
  Map out(d_gt.height(), d_gt.width(), 1);
  for (std::size_t k = 0; k < d_gt.pixels(); ++k) out.data()[k] = patch_importance(d_gt, k, cfg);
  return out;
}

double LossTerms::weighted(const LossConfig& cfg) const {
  return cfg.w_f * f + cfg.w_d * d + cfg.w_nu_f * nu_f + cfg.w_nu_d * nu_d + cfg.w_patch_f * patch_f +
         cfg.w_patch_d * patch_d;
}

namespace {

void check_supervision(const Supervision& sup, int height, int width, int channels) {
  require(sup.f_gt.height() == height && sup.f_gt.width() == width && sup.f_gt.channels() == channels,
          "supervision features do not match the prediction");
  require(sup.d_gt.height() == height && sup.d_gt.width() == width, "supervision distances do not match");
}

}  // namespace

LossTerms loss_global(const GlobalMaps& maps, const Supervision& sup, const LossConfig& cfg) {
  const int C = maps.features.channels();
  check_supervision(sup, maps.distance.height(), maps.distance.width(), C);
  const Map alpha = pixel_importance(sup.d_gt, cfg);
  const Map& var = cfg.boundary_variance ? maps.boundary_variance : maps.distance_variance;
  LossTerms t;
  for (std::size_t n = 0; n < alpha.pixels(); ++n) {
    const double a = alpha.data()[n];
    for (int c = 0; c < C; ++c) {
      const double e = maps.features.data()[n * C + c] - sup.f_gt.data()[n * C + c];
      t.f += a * e * e;
    }
    const double e = maps.distance.data()[n] - sup.d_gt.data()[n];
    t.d += a * e * e;
    t.nu_f += a * maps.feature_variance.data()[n];
    t.nu_d += a * var.data()[n];
  }
  return t;
}

PatchLosses loss_patchwise(const JunctionField& field, const WedgeFeatures& wedges, const Supervision& sup,
                           const LossConfig& cfg) {
  const int C = wedges.channels;
  const int W = field.width(), H = field.height();
  check_supervision(sup, H, W, C);
  const Map alpha = pixel_importance(sup.d_gt, cfg);
  PatchLosses out;
  for (std::size_t k = 0; k < field.size(); ++k) {
    const int kx = static_cast<int>(k % W), ky = static_cast<int>(k / W);
    const PreparedJunction g(field.junction(k));
    const double chi = patch_importance(sup.d_gt, k, cfg);
    const PatchBox box(kx, ky, W, H);
    double lf = 0.0, ld = 0.0;
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const Vec2 rel{static_cast<double>(x - kx), static_cast<double>(y - ky)};
        const double* f = wedges.feature(k, g.wedge(rel));
        const double a = alpha(x, y);
        for (int c = 0; c < C; ++c) {
          const double e = f[c] - sup.f_gt(x, y, c);
          lf += a * e * e;
        }
        const double e = g.distance(rel) - sup.d_gt(x, y);
        ld += a * e * e;
      }
    }
    out.f += chi * lf;
    out.d += chi * ld;
  }
  return out;
}

LossTerms exact_terms(const ImageF& image, const JunctionField& field, const Supervision& sup,
                      const LossConfig& cfg) {
  LossTerms t = loss_global(compute_global_maps(image, field), sup, cfg);
  const PatchLosses p = loss_patchwise(field, gather(image, field), sup, cfg);
  t.patch_f = p.f;
  t.patch_d = p.d;
  return t;
}

double total_loss(const LossTerms& previous, const LossTerms& final, const LossConfig& cfg) {
  return previous.weighted(cfg) + cfg.final_iter_weight * final.weighted(cfg);
}

template <class T>
void decode_params(const T* raw, T* params, std::size_t count) {
  for (std::size_t k = 0; k < count; ++k) {
    const T* r = raw + k * kRawParams;
    T* p = params + k * kFieldParams;
    p[0] = r[0];
    p[1] = r[1];
    const T n = std::sqrt(r[2] * r[2] + r[3] * r[3]) + static_cast<T>(kDecodeEps);
    p[2] = std::atan2(r[2] / n, r[3] / n);
    for (int block = 0; block < 2; ++block) {
      const T* a = r + 4 + 3 * block;
      T* out = p + 3 + 3 * block;
      const T mx = std::max({a[0], a[1], a[2]});
      T s = 0;
      for (int j = 0; j < 3; ++j) s += (out[j] = std::exp(a[j] - mx));
      for (int j = 0; j < 3; ++j) out[j] /= s;
    }
  }
}

template <class T>
void decode_backward(const T* raw, const T* grad_params, T* grad_raw, std::size_t count) {
  std::vector<T> dec(kFieldParams);
  for (std::size_t k = 0; k < count; ++k) {
    const T* r = raw + k * kRawParams;
    const T* g = grad_params + k * kFieldParams;
    T* out = grad_raw + k * kRawParams;
    decode_params(r, dec.data(), 1);
    out[0] += g[0];
    out[1] += g[1];
    const T r2 = r[2] * r[2] + r[3] * r[3];
    if (r2 > T(0)) {
      out[2] += g[2] * r[3] / r2;
      out[3] -= g[2] * r[2] / r2;
    }
    for (int block = 0; block < 2; ++block) {
      const T* s = dec.data() + 3 + 3 * block;
      const T* gs = g + 3 + 3 * block;
      const T mean = s[0] * gs[0] + s[1] * gs[1] + s[2] * gs[2];
      for (int j = 0; j < 3; ++j) out[4 + 3 * block + j] += s[j] * (gs[j] - mean);
    }
  }
}

void decode_pixel(const double* raw, Junction& g, WindowWeights& p) {
  double dec[kFieldParams];
  decode_params(raw, dec, 1);
  g = make_junction({dec[0], dec[1]}, dec[2], {dec[3], dec[4], dec[5]});
  p.p = {dec[6], dec[7], dec[8]};
}

void encode_pixel(const Junction& g, const WindowWeights& p, double* raw) {
  const auto w = g.omega_hat();
  raw[0] = g.u.x;
  raw[1] = g.u.y;
  raw[2] = std::sin(g.theta);
  raw[3] = std::cos(g.theta);
  for (int j = 0; j < 3; ++j) {
    raw[4 + j] = w[j] > 0.0 ? std::log(w[j]) : -std::numeric_limits<double>::infinity();
    raw[7 + j] = p.p[j] > 0.0 ? std::log(p.p[j]) : -std::numeric_limits<double>::infinity();
  }
}

template <class T>
LossBuffers<T> make_loss_buffers(const Supervision& sup, const LossConfig& cfg) {
  LossBuffers<T> b;
  b.height = sup.d_gt.height();
  b.width = sup.d_gt.width();
  b.channels = sup.f_gt.channels();
  check_supervision(sup, b.height, b.width, b.channels);
  const Map alpha = pixel_importance(sup.d_gt, cfg);
  const Map chi = patch_importance_map(sup.d_gt, cfg);
  b.alpha.assign(alpha.data().begin(), alpha.data().end());
  b.chi.assign(chi.data().begin(), chi.data().end());
  b.f_gt.assign(sup.f_gt.data().begin(), sup.f_gt.data().end());
  b.d_gt.assign(sup.d_gt.data().begin(), sup.d_gt.data().end());
  return b;
}

template <class T>
LossTerms surrogate_terms(const FieldForward<T>& fwd, const LossBuffers<T>& buf, const LossConfig& cfg, T scale,
                          LossUpstream<T>* up) {
  const int N = fwd.height * fwd.width;
  const int C = fwd.channels;
  require(buf.height == fwd.height && buf.width == fwd.width && buf.channels == C,
          "surrogate loss: supervision does not match the field");
  if (up) {
    up->fbar.assign(static_cast<std::size_t>(N) * C, T(0));
    up->dbar.assign(N, T(0));
    up->nu_f.assign(N, T(0));
    up->nu_v.assign(N, T(0));
    up->patch_f = scale * static_cast<T>(cfg.w_patch_f);
    up->patch_d = scale * static_cast<T>(cfg.w_patch_d);
  }
  LossTerms t;
  for (int n = 0; n < N; ++n) {
    const T a = buf.alpha[n];
    for (int c = 0; c < C; ++c) {
      const std::size_t i = static_cast<std::size_t>(n) * C + c;
      const T e = fwd.fbar[i] - buf.f_gt[i];
      t.f += static_cast<double>(a * e * e);
      if (up) up->fbar[i] = scale * static_cast<T>(2.0 * cfg.w_f) * a * e;
    }
    const T e = fwd.dbar[n] - buf.d_gt[n];
    t.d += static_cast<double>(a * e * e);
    t.nu_f += static_cast<double>(a * fwd.nu_f[n]);
    t.nu_d += static_cast<double>(a * fwd.nu_v[n]);
    if (up) {
      up->dbar[n] = scale * static_cast<T>(2.0 * cfg.w_d) * a * e;
      up->nu_f[n] = scale * static_cast<T>(cfg.w_nu_f) * a;
      up->nu_v[n] = scale * static_cast<T>(cfg.w_nu_d) * a;
    }
  }
  t.patch_f = static_cast<double>(fwd.patch_f);
  t.patch_d = static_cast<double>(fwd.patch_d);
  return t;
}

template <class T>
LossTerms surrogate_loss(int height, int width, int channels, const T* raw, const T* image,
                         const LossBuffers<T>& buf, const LossConfig& cfg, T scale, std::vector<T>* grad_raw) {
  const std::size_t N = static_cast<std::size_t>(height) * width;
  std::vector<T> params(N * kFieldParams);
  decode_params(raw, params.data(), N);
  const auto opt = cfg.kernel_options();
  const auto sup = buf.view();
  FieldForward<T> fwd;
  field_forward(height, width, channels, params.data(), image, opt, &sup, fwd);
  LossUpstream<T> up;
  const LossTerms terms = surrogate_terms(fwd, buf, cfg, scale, grad_raw ? &up : nullptr);
  if (grad_raw) {
    std::vector<T> gp(N * kFieldParams, T(0));
    field_backward(params.data(), image, opt, &sup, fwd, up.view(), gp.data());
    grad_raw->assign(N * kRawParams, T(0));
    decode_backward(raw, gp.data(), grad_raw->data(), N);
  }
  return terms;
}

LossCsv::LossCsv(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open " + path);
  if (!append) out_ << "step,f,d,nu_f,nu_d,patch_f,patch_d,total\n";
}

void LossCsv::write(long step, const LossTerms& t, double total) {
  out_ << step << std::setprecision(9) << ',' << t.f << ',' << t.d << ',' << t.nu_f << ',' << t.nu_d << ','
       << t.patch_f << ',' << t.patch_d << ',' << total << '\n';
  out_.flush();
}

#define BA_INSTANTIATE(T)                                                                                      \
  template void decode_params<T>(const T*, T*, std::size_t);                                                   \
  template void decode_backward<T>(const T*, const T*, T*, std::size_t);                                       \
  template LossBuffers<T> make_loss_buffers<T>(const Supervision&, const LossConfig&);                         \
  template LossTerms surrogate_terms<T>(const FieldForward<T>&, const LossBuffers<T>&, const LossConfig&, T,   \
                                        LossUpstream<T>*);                                                     \
  template LossTerms surrogate_loss<T>(int, int, int, const T*, const T*, const LossBuffers<T>&,              \
                                       const LossConfig&, T, std::vector<T>*);
BA_INSTANTIATE(float)
BA_INSTANTIATE(double)
#undef BA_INSTANTIATE

}  // namespace ba
