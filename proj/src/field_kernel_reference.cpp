#include "ba/field_kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ba/prepared.hpp"

namespace ba::reference {
namespace {

template <class T>
struct PatchGeom {
  T ux, uy, theta;
  std::array<T, 3> w, p;
  std::array<T, 3> ecx, ecy;  // wedge center directions
  std::array<T, 3> kappa;     // cos(pi * w_j)
  std::array<T, 3> erx, ery;  // ray directions

  explicit PatchGeom(const T* prm) {
    ux = prm[0];
    uy = prm[1];
    theta = prm[2];
    for (int j = 0; j < 3; ++j) {
      w[j] = prm[3 + j];
      p[j] = prm[6 + j];
    }
    const T pi = static_cast<T>(kPi);
    const std::array<T, 3> center{theta + pi * w[0], theta + 2 * pi * w[0] + pi * w[1],
                                  theta + 2 * pi * (w[0] + w[1]) + pi * w[2]};
    const std::array<T, 3> ray{theta, theta + 2 * pi * w[0], theta + 2 * pi * (w[0] + w[1])};
    for (int j = 0; j < 3; ++j) {
      ecx[j] = std::cos(center[j]);
      ecy[j] = std::sin(center[j]);
      kappa[j] = std::cos(pi * w[j]);
      erx[j] = std::cos(ray[j]);
      ery[j] = std::sin(ray[j]);
    }
  }
};

constexpr int kBoxArea = 289;

inline int box_slot(int dx, int dy) { return (dy + 8) * 17 + dx + 8; }

inline int box_bits(int dx, int dy) {
  const int r = std::max(std::abs(dx), std::abs(dy));
  return (r <= 1 ? 1 : 0) | (r <= 4 ? 2 : 0) | (r <= 8 ? 4 : 0);
}

template <class T>
inline T window_from_bits(const std::array<T, 3>& p, int bits) {
  return ((bits & 1) ? p[0] : T(0)) + ((bits & 2) ? p[1] : T(0)) + ((bits & 4) ? p[2] : T(0));
}

template <class T>
struct PairEval {
  T dx, dy, inv_r;
  std::array<T, 3> cosphi, s;
  std::array<T, 3> t, q, D, pi;
  T dist;
};

template <class T>
inline void eval_support(const PatchGeom<T>& g, T relx, T rely, T tau, PairEval<T>& e) {
  e.dx = relx - g.ux;
  e.dy = rely - g.uy;
  const T r = std::sqrt(e.dx * e.dx + e.dy * e.dy);
  e.inv_r = r > T(0) ? T(1) / r : T(0);
  std::array<T, 3> m;
  for (int j = 0; j < 3; ++j) {
    e.cosphi[j] = (e.dx * g.ecx[j] + e.dy * g.ecy[j]) * e.inv_r;
    m[j] = tau * (e.cosphi[j] - g.kappa[j]);
  }
  const T mx = std::max({m[0], m[1], m[2]});
  T sum = 0;
  for (int j = 0; j < 3; ++j) {
    e.s[j] = std::exp(m[j] - mx);
    sum += e.s[j];
  }
  for (int j = 0; j < 3; ++j) e.s[j] /= sum;
}

template <class T>
inline void eval_distance(const PatchGeom<T>& g, T eps2, T kappa, PairEval<T>& e) {
  T dmin = std::numeric_limits<T>::max();
  for (int i = 0; i < 3; ++i) {
    e.t[i] = e.dx * g.erx[i] + e.dy * g.ery[i];
    e.q[i] = g.erx[i] * e.dy - g.ery[i] * e.dx;
    const T behind = std::min(e.t[i], T(0));
    e.D[i] = std::sqrt(e.q[i] * e.q[i] + behind * behind + eps2);
    dmin = std::min(dmin, e.D[i]);
  }
  T sum = 0;
  for (int i = 0; i < 3; ++i) {
    e.pi[i] = std::exp(-(e.D[i] - dmin) / kappa);
    sum += e.pi[i];
  }
  for (int i = 0; i < 3; ++i) e.pi[i] /= sum;
  e.dist = dmin - kappa * std::log(sum);
}

template <class T>
struct PatchGrad {
  T gdx = 0, gdy = 0;  // w.r.t. the offset d = x_rel - u
  std::array<T, 3> gc{}, gk{}, ga{}, gp{};
};

template <class T>
inline void support_backward(const PatchGeom<T>& g, const PairEval<T>& e, const std::array<T, 3>& gs, T tau,
                             PatchGrad<T>& G) {
  const T mean = e.s[0] * gs[0] + e.s[1] * gs[1] + e.s[2] * gs[2];
  for (int j = 0; j < 3; ++j) {
    const T gm = tau * e.s[j] * (gs[j] - mean);
    if (e.inv_r > T(0)) {
      G.gdx += gm * (g.ecx[j] - e.cosphi[j] * e.dx * e.inv_r) * e.inv_r;
      G.gdy += gm * (g.ecy[j] - e.cosphi[j] * e.dy * e.inv_r) * e.inv_r;
      G.gc[j] += gm * (e.dy * g.ecx[j] - e.dx * g.ecy[j]) * e.inv_r;
    }
    G.gk[j] -= gm;
  }
}

template <class T>
inline void distance_backward(const PatchGeom<T>& g, const PairEval<T>& e, T gdist, PatchGrad<T>& G) {
  for (int i = 0; i < 3; ++i) {
    const T gD = gdist * e.pi[i] / e.D[i];
    const T behind = std::min(e.t[i], T(0));
    G.gdx += gD * (-e.q[i] * g.ery[i] + behind * g.erx[i]);
    G.gdy += gD * (e.q[i] * g.erx[i] + behind * g.ery[i]);
    if (e.t[i] >= T(0)) G.ga[i] -= gD * e.q[i] * e.t[i];
  }
}

template <class T>
void finalize_grad(const PatchGeom<T>& g, const PatchGrad<T>& G, T* out) {
  const T pi = static_cast<T>(kPi);
  out[0] -= G.gdx;
  out[1] -= G.gdy;
  out[2] += G.gc[0] + G.gc[1] + G.gc[2] + G.ga[0] + G.ga[1] + G.ga[2];
  out[3] += pi * G.gc[0] + 2 * pi * (G.gc[1] + G.gc[2]) + 2 * pi * (G.ga[1] + G.ga[2]) -
            pi * std::sin(pi * g.w[0]) * G.gk[0];
  out[4] += pi * G.gc[1] + 2 * pi * G.gc[2] + 2 * pi * G.ga[2] - pi * std::sin(pi * g.w[1]) * G.gk[1];
  out[5] += pi * G.gc[2] - pi * std::sin(pi * g.w[2]) * G.gk[2];
  for (int i = 0; i < 3; ++i) out[6 + i] += G.gp[i];
}

template <class T>
inline T strength(T d, T eta) {
  const T r = d / eta;
  return T(1) / (T(1) + r * r);
}

template <class T>
inline T strength_deriv(T d, T eta) {
  const T b = strength(d, eta);
  return -T(2) * d / (eta * eta) * b * b;
}

}  // namespace

template <class T>
void field_forward(int height, int width, int channels, const T* params, const T* image,
                   const FieldKernelOptions& opt, const PatchSupervision<T>* sup, FieldForward<T>& out) {
  require(channels >= 1 && channels <= 3, "field_forward: 1 to 3 channels");
  const int H = height, W = width, C = channels;
  const int N = H * W;
  const T tau = static_cast<T>(opt.smooth.tau);
  const T eps2 = static_cast<T>(opt.smooth.ray_eps * opt.smooth.ray_eps);
  const T kap = static_cast<T>(opt.smooth.softmin_kappa);
  const T eta = static_cast<T>(opt.eta);
  const bool dist = opt.distances;

  out.height = H;
  out.width = W;
  out.channels = C;
  out.fbar.assign(static_cast<std::size_t>(N) * C, T(0));
  out.dbar.assign(N, T(0));
  out.nu_f.assign(N, T(0));
  out.nu_v.assign(N, T(0));
  out.weight.assign(N, T(0));
  out.vmean.assign(N, T(0));
  out.wedge.assign(static_cast<std::size_t>(N) * 3 * C, T(0));
  out.den.assign(static_cast<std::size_t>(N) * 3, T(0));

  std::vector<PatchGeom<T>> geom;
  geom.reserve(N);
  for (int k = 0; k < N; ++k) geom.emplace_back(params + static_cast<std::size_t>(k) * kFieldParams);

  std::vector<T> rec(N, T(0));
#pragma omp parallel for schedule(static)
  for (int k = 0; k < N; ++k) {
    const int kx = k % W, ky = k / W;
    const auto& g = geom[k];
    const PatchBox box(kx, ky, W, H);
    std::array<T, 9> num{};
    std::array<T, 3> den{}, sq{};
    PairEval<T> e;
    for (int my = box.y0; my <= box.y1; ++my) {
      for (int mx = box.x0; mx <= box.x1; ++mx) {
        const T w = window_from_bits(g.p, box_bits(mx - kx, my - ky));
        if (w <= T(0)) continue;
        eval_support(g, static_cast<T>(mx - kx), static_cast<T>(my - ky), tau, e);
        const T* f = image + (static_cast<std::size_t>(my) * W + mx) * C;
        T ff = 0;
        for (int c = 0; c < C; ++c) ff += f[c] * f[c];
        for (int j = 0; j < 3; ++j) {
          const T ws = w * e.s[j];
          den[j] += ws;
          sq[j] += ws * ff;
          for (int c = 0; c < C; ++c) num[j * 3 + c] += ws * f[c];
        }
      }
    }
    T r = 0;
    for (int j = 0; j < 3; ++j) {
      out.den[static_cast<std::size_t>(k) * 3 + j] = den[j];
      T nn = 0;
      for (int c = 0; c < C; ++c) {
        const T v = num[j * 3 + c] / den[j];
        out.wedge[(static_cast<std::size_t>(k) * 3 + j) * C + c] = v;
        nn += num[j * 3 + c] * v;
      }
      r += sq[j] - nn;
    }
    rec[k] = r;
  }

  std::vector<T> pf(N, T(0)), pd(N, T(0));
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const int nx = n % W, ny = n / W;
    const PatchBox box(nx, ny, W, H);
    bool started = false;
    T wsum = 0, v0 = 0, vs = 0, vs2 = 0, d0 = 0, ds = 0;
    std::array<T, 3> f0{}, fs{}, fs2{};
    PairEval<T> e;
    for (int ky = box.y0; ky <= box.y1; ++ky) {
      for (int kx = box.x0; kx <= box.x1; ++kx) {
        const int k = ky * W + kx;
        const auto& g = geom[k];
        const T w = window_from_bits(g.p, box_bits(nx - kx, ny - ky));
        eval_support(g, static_cast<T>(nx - kx), static_cast<T>(ny - ky), tau, e);
        const T* fk = &out.wedge[static_cast<std::size_t>(k) * 3 * C];
        std::array<T, 3> sh{};
        for (int c = 0; c < C; ++c) sh[c] = fk[c] * e.s[0] + fk[C + c] * e.s[1] + fk[2 * C + c] * e.s[2];
        T d = 0;
        if (dist) {
          eval_distance(g, eps2, kap, e);
          d = e.dist;
        }
        if (sup) {
          const T a = sup->chi[k] * sup->alpha[n];
          T err = 0;
          for (int c = 0; c < C; ++c) {
            const T diff = sh[c] - sup->f_gt[static_cast<std::size_t>(n) * C + c];
            err += diff * diff;
          }
          pf[n] += a * err;
          if (dist) {
            const T dd = d - sup->d_gt[n];
            pd[n] += a * dd * dd;
          }
        }
        if (w <= T(0)) continue;
        const T v = opt.boundary_variance ? strength(d, eta) : d;
        if (!started) {
          started = true;
          f0 = sh;
          d0 = d;
          v0 = v;
        }
        wsum += w;
        for (int c = 0; c < C; ++c) {
          const T df = sh[c] - f0[c];
          fs[c] += w * df;
          fs2[c] += w * df * df;
        }
        ds += w * (d - d0);
        const T dv = v - v0;
        vs += w * dv;
        vs2 += w * dv * dv;
      }
    }
    out.weight[n] = wsum;
    T nf = 0;
    for (int c = 0; c < C; ++c) {
      const T m = fs[c] / wsum;
      out.fbar[static_cast<std::size_t>(n) * C + c] = f0[c] + m;
      nf += std::max(T(0), fs2[c] / wsum - m * m);
    }
    out.nu_f[n] = nf / C;
    if (dist) {
      out.dbar[n] = d0 + ds / wsum;
      const T mv = vs / wsum;
      out.vmean[n] = v0 + mv;
      out.nu_v[n] = std::max(T(0), vs2 / wsum - mv * mv);
    }
  }

  out.patch_f = out.patch_d = out.recon = T(0);
  for (int n = 0; n < N; ++n) {
    out.patch_f += pf[n];
    out.patch_d += pd[n];
  }
  if (opt.reconstruction)
    for (int k = 0; k < N; ++k) out.recon += rec[k];
}

template <class T>
void field_backward(const T* params, const T* image, const FieldKernelOptions& opt,
                    const PatchSupervision<T>* sup, const FieldForward<T>& fwd, const FieldUpstream<T>& up,
                    T* grad_params) {
  const int H = fwd.height, W = fwd.width, C = fwd.channels;
  const int N = H * W;
  const T tau = static_cast<T>(opt.smooth.tau);
  const T eps2 = static_cast<T>(opt.smooth.ray_eps * opt.smooth.ray_eps);
  const T kap = static_cast<T>(opt.smooth.softmin_kappa);
  const T eta = static_cast<T>(opt.eta);
  const bool dist = opt.distances;
  const bool use_pf = sup && up.patch_f != T(0);
  const bool use_pd = sup && dist && up.patch_d != T(0);
  const bool use_rec = opt.reconstruction && up.recon != T(0);

#pragma omp parallel for schedule(static)
  for (int k = 0; k < N; ++k) {
    const int kx = k % W, ky = k / W;
    const PatchGeom<T> g(params + static_cast<std::size_t>(k) * kFieldParams);
    const PatchBox box(kx, ky, W, H);
    const T* fk = &fwd.wedge[static_cast<std::size_t>(k) * 3 * C];
    PatchGrad<T> G;
    std::array<T, 9> gf{};
    std::array<PairEval<T>, kBoxArea> evals;

    // Slice side: pixels n covered by patch k.
    for (int ny = box.y0; ny <= box.y1; ++ny) {
      for (int nx = box.x0; nx <= box.x1; ++nx) {
        const int n = ny * W + nx;
        const int bits = box_bits(nx - kx, ny - ky);
        const T w = window_from_bits(g.p, bits);
        PairEval<T>& e = evals[box_slot(nx - kx, ny - ky)];
        eval_support(g, static_cast<T>(nx - kx), static_cast<T>(ny - ky), tau, e);
        std::array<T, 3> sh{}, gsh{};
        for (int c = 0; c < C; ++c) sh[c] = fk[c] * e.s[0] + fk[C + c] * e.s[1] + fk[2 * C + c] * e.s[2];
        T d = 0, gd = 0, gw = 0;
        if (dist) {
          eval_distance(g, eps2, kap, e);
          d = e.dist;
        }
        if (w > T(0)) {
          const T inv = T(1) / fwd.weight[n];
          const T* fb = &fwd.fbar[static_cast<std::size_t>(n) * C];
          if (up.fbar) {
            for (int c = 0; c < C; ++c) {
              const T gu = up.fbar[static_cast<std::size_t>(n) * C + c];
              gsh[c] += gu * w * inv;
              gw += gu * (sh[c] - fb[c]) * inv;
            }
          }
          if (up.nu_f && up.nu_f[n] != T(0)) {
            const T gu = up.nu_f[n];
            T dev2 = 0;
            for (int c = 0; c < C; ++c) {
              const T dv = sh[c] - fb[c];
              dev2 += dv * dv;
              gsh[c] += gu * T(2) * w * dv * inv / C;
            }
            gw += gu * (dev2 / C - fwd.nu_f[n]) * inv;
          }
          if (dist) {
            if (up.dbar) {
              gd += up.dbar[n] * w * inv;
              gw += up.dbar[n] * (d - fwd.dbar[n]) * inv;
            }
            if (up.nu_v && up.nu_v[n] != T(0)) {
              const T gu = up.nu_v[n];
              const T v = opt.boundary_variance ? strength(d, eta) : d;
              const T dv = v - fwd.vmean[n];
              const T gv = gu * T(2) * w * dv * inv;
              gd += opt.boundary_variance ? gv * strength_deriv(d, eta) : gv;
              gw += gu * (dv * dv - fwd.nu_v[n]) * inv;
            }
          }
        }
        if (use_pf) {
          const T a = T(2) * up.patch_f * sup->chi[k] * sup->alpha[n];
          for (int c = 0; c < C; ++c) gsh[c] += a * (sh[c] - sup->f_gt[static_cast<std::size_t>(n) * C + c]);
        }
        if (use_pd) gd += T(2) * up.patch_d * sup->chi[k] * sup->alpha[n] * (d - sup->d_gt[n]);

        std::array<T, 3> gs{};
        for (int j = 0; j < 3; ++j) {
          for (int c = 0; c < C; ++c) {
            gs[j] += gsh[c] * fk[j * C + c];
            gf[j * 3 + c] += gsh[c] * e.s[j];
          }
        }
        support_backward(g, e, gs, tau, G);
        if (dist && gd != T(0)) distance_backward(g, e, gd, G);
        for (int i = 0; i < 3; ++i)
          if (bits & (1 << i)) G.gp[i] += gw;
      }
    }

    // Gather side: f_kj = sum(w s f) / sum(w s) over pixels m of patch k.
    const T* den = &fwd.den[static_cast<std::size_t>(k) * 3];
    for (int my = box.y0; my <= box.y1; ++my) {
      for (int mx = box.x0; mx <= box.x1; ++mx) {
        const int bits = box_bits(mx - kx, my - ky);
        const T w = window_from_bits(g.p, bits);
        if (w <= T(0)) continue;
        const PairEval<T>& e = evals[box_slot(mx - kx, my - ky)];
        const T* f = image + (static_cast<std::size_t>(my) * W + mx) * C;
        std::array<T, 3> gs{};
        T gw = 0;
        for (int j = 0; j < 3; ++j) {
          T gws = 0, err = 0;
          for (int c = 0; c < C; ++c) {
            const T diff = f[c] - fk[j * C + c];
            gws += gf[j * 3 + c] * diff;
            err += diff * diff;
          }
          gws /= den[j];
          if (use_rec) gws += up.recon * err;
          gw += gws * e.s[j];
          gs[j] = gws * w;
        }
        support_backward(g, e, gs, tau, G);
        for (int i = 0; i < 3; ++i)
          if (bits & (1 << i)) G.gp[i] += gw;
      }
    }
    finalize_grad(g, G, grad_params + static_cast<std::size_t>(k) * kFieldParams);
  }
}

template void field_forward<double>(int, int, int, const double*, const double*, const FieldKernelOptions&,
                                    const PatchSupervision<double>*, FieldForward<double>&);
template void field_backward<double>(const double*, const double*, const FieldKernelOptions&,
                                     const PatchSupervision<double>*, const FieldForward<double>&,
                                     const FieldUpstream<double>&, double*);

}  // namespace ba::reference
