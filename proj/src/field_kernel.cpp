#include "ba/field_kernel.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

#include "ba/prepared.hpp"

namespace ba {
namespace {

constexpr int kMaxPairs = (2 * kPatchRadius + 1) * (2 * kPatchRadius + 1);
constexpr int kTile = 2 * kPatchRadius + 1;

template <class T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;

template <class T>
struct Geom {
  T ux, uy;
  std::array<T, 3> w, p;
  std::array<T, 3> ecx, ecy;  // wedge center directions
  std::array<T, 3> kappa;     // cos(pi * w_j)
  std::array<T, 3> erx, ery;  // ray directions

  explicit Geom(const T* prm) {
    ux = prm[0];
    uy = prm[1];
    const T theta = prm[2];
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

// Structure-of-arrays evaluation of one patch over its clipped box.
template <class T>
struct Work {
  int n = 0;
  std::array<int, kMaxPairs> pix{};
  std::array<Arr<T>, 3> box, cphi, s, t, q, D, pi, gs, img, sh, gsh, cp, cg;
  Arr<T> w, dx, dy, inv_r, dist, gd, gw, tmp, tmp2;
  Arr<T> cs, cr, cu, cv, cdb, cvm, cnv, ca, cdg;  // per-pixel coefficients gathered over the box

  Work() {
    for (auto* group : {&box, &cphi, &s, &t, &q, &D, &pi, &gs, &img, &sh, &gsh, &cp, &cg})
      for (auto& a : *group) a.setZero(kMaxPairs);
    for (auto* a : {&w, &dx, &dy, &inv_r, &dist, &gd, &gw, &tmp, &tmp2, &cs, &cr, &cu, &cv, &cdb, &cvm, &cnv, &ca, &cdg})
      a->setZero(kMaxPairs);
  }

  void fill(const Geom<T>& g, int kx, int ky, int width, int height, const T* image, int channels) {
    const PatchBox b(kx, ky, width, height);
    n = 0;
    for (int y = b.y0; y <= b.y1; ++y) {
      for (int x = b.x0; x <= b.x1; ++x, ++n) {
        const int r = std::max(std::abs(x - kx), std::abs(y - ky));
        pix[n] = y * width + x;
        box[0][n] = r <= 1 ? T(1) : T(0);
        box[1][n] = r <= 4 ? T(1) : T(0);
        box[2][n] = T(1);
        dx[n] = static_cast<T>(x - kx) - g.ux;
        dy[n] = static_cast<T>(y - ky) - g.uy;
        for (int c = 0; c < channels; ++c) img[c][n] = image[static_cast<std::size_t>(pix[n]) * channels + c];
      }
    }
    w.head(n) = g.p[0] * box[0].head(n) + g.p[1] * box[1].head(n) + g.p[2] * box[2].head(n);
  }

  void supports(const Geom<T>& g, T tau) {
    const auto DX = dx.head(n);
    const auto DY = dy.head(n);
    tmp.head(n) = (DX.square() + DY.square()).sqrt();
    inv_r.head(n) = (tmp.head(n) > T(0)).select(tmp.head(n).inverse(), T(0));
    for (int j = 0; j < 3; ++j) {
      cphi[j].head(n) = (DX * g.ecx[j] + DY * g.ecy[j]) * inv_r.head(n);
      s[j].head(n) = tau * (cphi[j].head(n) - g.kappa[j]);
    }
    tmp.head(n) = s[0].head(n).max(s[1].head(n)).max(s[2].head(n));
    for (int j = 0; j < 3; ++j) s[j].head(n) = (s[j].head(n) - tmp.head(n)).exp();
    tmp.head(n) = (s[0].head(n) + s[1].head(n) + s[2].head(n)).inverse();
    for (int j = 0; j < 3; ++j) s[j].head(n) *= tmp.head(n);
  }

  void distances(const Geom<T>& g, T eps2, T kap) {
    const auto DX = dx.head(n);
    const auto DY = dy.head(n);
    for (int i = 0; i < 3; ++i) {
      t[i].head(n) = DX * g.erx[i] + DY * g.ery[i];
      q[i].head(n) = DY * g.erx[i] - DX * g.ery[i];
      D[i].head(n) = (q[i].head(n).square() + t[i].head(n).min(T(0)).square() + eps2).sqrt();
    }
    tmp.head(n) = D[0].head(n).min(D[1].head(n)).min(D[2].head(n));
    for (int i = 0; i < 3; ++i) pi[i].head(n) = ((tmp.head(n) - D[i].head(n)) / kap).exp();
    tmp2.head(n) = pi[0].head(n) + pi[1].head(n) + pi[2].head(n);
    for (int i = 0; i < 3; ++i) pi[i].head(n) /= tmp2.head(n);
    dist.head(n) = tmp.head(n) - kap * tmp2.head(n).log();
  }
};

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

// Smoothed distance at the patch's own center, used as a variance shift.
template <class T>
T center_distance(const Geom<T>& g, T eps2, T kap) {
  std::array<T, 3> D;
  for (int i = 0; i < 3; ++i) {
    const T t = -g.ux * g.erx[i] - g.uy * g.ery[i];
    const T q = -g.uy * g.erx[i] + g.ux * g.ery[i];
    const T behind = std::min(t, T(0));
    D[i] = std::sqrt(q * q + behind * behind + eps2);
  }
  const T dmin = std::min({D[0], D[1], D[2]});
  T sum = 0;
  for (int i = 0; i < 3; ++i) sum += std::exp(-(D[i] - dmin) / kap);
  return dmin - kap * std::log(sum);
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
  const bool bvar = opt.boundary_variance;

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

  // Variance sums are shifted by the input value (features) and the pixel's
  // own patch distance, both close to the respective means.
  std::vector<T> dshift(N, T(0)), vshift(N, T(0));
  if (dist) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < N; ++k) {
      dshift[k] = center_distance(Geom<T>(params + static_cast<std::size_t>(k) * kFieldParams), eps2, kap);
      vshift[k] = bvar ? strength(dshift[k], eta) : dshift[k];
    }
  }

  std::vector<T> acc_f(static_cast<std::size_t>(N) * C, T(0)), acc_f2(static_cast<std::size_t>(N) * C, T(0));
  std::vector<T> acc_d(N, T(0)), acc_v(N, T(0)), acc_v2(N, T(0));
  std::vector<T> rec(N, T(0)), pf(N, T(0)), pd(N, T(0));

  // Patches scatter into their boxes. Tiles of the box width in a 2x2
  // colouring never write the same pixel concurrently, and every pixel sees
  // its contributions in a fixed order.
  const int tx = (W + kTile - 1) / kTile, ty = (H + kTile - 1) / kTile;
  for (int colour = 0; colour < 4; ++colour) {
#pragma omp parallel
    {
      Work<T> wk;
#pragma omp for schedule(dynamic)
      for (int tile = 0; tile < tx * ty; ++tile) {
        const int ti = tile % tx, tj = tile / tx;
        if ((ti % 2) + 2 * (tj % 2) != colour) continue;
        for (int ky = tj * kTile; ky < std::min(H, (tj + 1) * kTile); ++ky) {
          for (int kx = ti * kTile; kx < std::min(W, (ti + 1) * kTile); ++kx) {
            const int k = ky * W + kx;
            const Geom<T> g(params + static_cast<std::size_t>(k) * kFieldParams);
            wk.fill(g, kx, ky, W, H, image, C);
            wk.supports(g, tau);
            if (dist) wk.distances(g, eps2, kap);
            const int n = wk.n;

            T r = 0;
            T* fk = &out.wedge[static_cast<std::size_t>(k) * 3 * C];
            wk.tmp2.head(n) = T(0);
            for (int c = 0; c < C; ++c) wk.tmp2.head(n) += wk.img[c].head(n).square();
            for (int j = 0; j < 3; ++j) {
              wk.tmp.head(n) = wk.w.head(n) * wk.s[j].head(n);
              const T den = wk.tmp.head(n).sum();
              out.den[static_cast<std::size_t>(k) * 3 + j] = den;
              T nn = 0;
              for (int c = 0; c < C; ++c) {
                const T num = (wk.tmp.head(n) * wk.img[c].head(n)).sum();
                fk[j * C + c] = num / den;
                nn += num * num / den;
              }
              r += (wk.tmp.head(n) * wk.tmp2.head(n)).sum() - nn;
            }
            rec[k] = r;

            // Rendered feature of this patch at each pixel of its box.
            for (int c = 0; c < C; ++c)
              wk.img[c].head(n) =
                  fk[c] * wk.s[0].head(n) + fk[C + c] * wk.s[1].head(n) + fk[2 * C + c] * wk.s[2].head(n);

            T lf = 0, ld = 0;
            for (int i = 0; i < n; ++i) {
              const int m = wk.pix[i];
              const T w = wk.w[i];
              const std::size_t mc = static_cast<std::size_t>(m) * C;
              if (sup) {
                T err = 0;
                for (int c = 0; c < C; ++c) {
                  const T diff = wk.img[c][i] - sup->f_gt[mc + c];
                  err += diff * diff;
                }
                lf += sup->alpha[m] * err;
                if (dist) {
                  const T dd = wk.dist[i] - sup->d_gt[m];
                  ld += sup->alpha[m] * dd * dd;
                }
              }
              out.weight[m] += w;
              for (int c = 0; c < C; ++c) {
                const T df = wk.img[c][i] - image[mc + c];
                acc_f[mc + c] += w * df;
                acc_f2[mc + c] += w * df * df;
              }
              if (dist) {
                const T d = wk.dist[i];
                acc_d[m] += w * (d - dshift[m]);
                const T dv = (bvar ? strength(d, eta) : d) - vshift[m];
                acc_v[m] += w * dv;
                acc_v2[m] += w * dv * dv;
              }
            }
            if (sup) {
              pf[k] = sup->chi[k] * lf;
              pd[k] = sup->chi[k] * ld;
            }
          }
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const T wsum = out.weight[n];
    T nf = 0;
    for (int c = 0; c < C; ++c) {
      const std::size_t nc = static_cast<std::size_t>(n) * C + c;
      const T m = acc_f[nc] / wsum;
      out.fbar[nc] = image[nc] + m;
      nf += std::max(T(0), acc_f2[nc] / wsum - m * m);
    }
    out.nu_f[n] = nf / C;
    if (dist) {
      out.dbar[n] = dshift[n] + acc_d[n] / wsum;
      const T mv = acc_v[n] / wsum;
      out.vmean[n] = vshift[n] + mv;
      out.nu_v[n] = std::max(T(0), acc_v2[n] / wsum - mv * mv);
    }
  }

  out.patch_f = out.patch_d = out.recon = T(0);
  for (int k = 0; k < N; ++k) {
    out.patch_f += pf[k];
    out.patch_d += pd[k];
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
  const T pi = static_cast<T>(kPi);
  const bool bvar = opt.boundary_variance;
  const bool use_pf = sup && up.patch_f != T(0);
  const bool use_pd = sup && opt.distances && up.patch_d != T(0);
  const bool use_rec = opt.reconstruction && up.recon != T(0);
  const bool need_dist = opt.distances && (up.dbar || up.nu_v || use_pd);

  // Upstream terms folded into per-pixel coefficients so that, for a
  // rendered feature sh at pixel n with window weight w,
  //   d/d(sh_c) = w (P_c + 2 S sh_c),   d/dw = R + sum_c sh_c (P_c + S sh_c).
  std::vector<T> coef_p(static_cast<std::size_t>(N) * C), coef_s(N), coef_r(N), coef_u(N, T(0)), coef_v(N, T(0));
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const T inv = T(1) / fwd.weight[n];
    const T gnf = up.nu_f ? up.nu_f[n] : T(0);
    const T S = gnf * inv / C;
    T gfb = 0, fb2 = 0;
    for (int c = 0; c < C; ++c) {
      const std::size_t nc = static_cast<std::size_t>(n) * C + c;
      const T gu = up.fbar ? up.fbar[nc] : T(0);
      const T fb = fwd.fbar[nc];
      coef_p[nc] = inv * (gu - T(2) * gnf * fb / C);
      gfb += gu * fb;
      fb2 += fb * fb;
    }
    coef_s[n] = S;
    coef_r[n] = -inv * (gfb + gnf * fwd.nu_f[n]) + S * fb2;
    if (need_dist) {
      coef_u[n] = up.dbar ? up.dbar[n] * inv : T(0);
      coef_v[n] = up.nu_v ? up.nu_v[n] * inv : T(0);
    }
  }

#pragma omp parallel
  {
    Work<T> wk;
#pragma omp for schedule(static)
    for (int k = 0; k < N; ++k) {
      const int kx = k % W, ky = k / W;
      const Geom<T> g(params + static_cast<std::size_t>(k) * kFieldParams);
      wk.fill(g, kx, ky, W, H, image, C);
      wk.supports(g, tau);
      if (need_dist) wk.distances(g, eps2, kap);
      const int n = wk.n;
      const T* fk = &fwd.wedge[static_cast<std::size_t>(k) * 3 * C];
      const T* den = &fwd.den[static_cast<std::size_t>(k) * 3];
      std::array<T, 9> gf{};

      // Slice side: this patch's rendering at every pixel of its box.
      for (int i = 0; i < n; ++i) {
        const int m = wk.pix[i];
        for (int c = 0; c < C; ++c) wk.cp[c][i] = coef_p[static_cast<std::size_t>(m) * C + c];
        wk.cs[i] = coef_s[m];
        wk.cr[i] = coef_r[m];
        if (need_dist) {
          wk.cu[i] = coef_u[m];
          wk.cv[i] = coef_v[m];
          wk.cdb[i] = fwd.dbar[m];
          wk.cvm[i] = fwd.vmean[m];
          wk.cnv[i] = fwd.nu_v[m];
        }
        if (use_pf || use_pd) {
          wk.ca[i] = sup->alpha[m];
          for (int c = 0; c < C; ++c) wk.cg[c][i] = sup->f_gt[static_cast<std::size_t>(m) * C + c];
          if (use_pd) wk.cdg[i] = sup->d_gt[m];
        }
      }
      const auto Wt = wk.w.head(n);
      wk.gw.head(n) = wk.cr.head(n);
      for (int c = 0; c < C; ++c) {
        wk.sh[c].head(n) =
            fk[c] * wk.s[0].head(n) + fk[C + c] * wk.s[1].head(n) + fk[2 * C + c] * wk.s[2].head(n);
        const auto SH = wk.sh[c].head(n);
        wk.gw.head(n) += SH * (wk.cp[c].head(n) + wk.cs.head(n) * SH);
        wk.gsh[c].head(n) = Wt * (wk.cp[c].head(n) + T(2) * wk.cs.head(n) * SH);
        if (use_pf) wk.gsh[c].head(n) += (T(2) * up.patch_f * sup->chi[k]) * wk.ca.head(n) * (SH - wk.cg[c].head(n));
      }
      if (need_dist) {
        const auto Dd = wk.dist.head(n);
        if (bvar) {
          wk.tmp.head(n) = ((Dd / eta).square() + T(1)).inverse();
          wk.tmp2.head(n) = wk.tmp.head(n) - wk.cvm.head(n);
          wk.gd.head(n) = Wt * (wk.cu.head(n) + T(2) * wk.cv.head(n) * wk.tmp2.head(n) *
                                                    (T(-2) / (eta * eta)) * Dd * wk.tmp.head(n).square());
        } else {
          wk.tmp2.head(n) = Dd - wk.cvm.head(n);
          wk.gd.head(n) = Wt * (wk.cu.head(n) + T(2) * wk.cv.head(n) * wk.tmp2.head(n));
        }
        wk.gw.head(n) += wk.cu.head(n) * (Dd - wk.cdb.head(n)) +
                         wk.cv.head(n) * (wk.tmp2.head(n).square() - wk.cnv.head(n));
        if (use_pd) wk.gd.head(n) += (T(2) * up.patch_d * sup->chi[k]) * wk.ca.head(n) * (Dd - wk.cdg.head(n));
      }
      for (int j = 0; j < 3; ++j) {
        wk.gs[j].head(n) = T(0);
        for (int c = 0; c < C; ++c) {
          wk.gs[j].head(n) += fk[j * C + c] * wk.gsh[c].head(n);
          gf[j * 3 + c] = (wk.gsh[c].head(n) * wk.s[j].head(n)).sum();
        }
      }

      // Gather side: f_kj = sum(w s f) / sum(w s) over the box.
      for (int j = 0; j < 3; ++j) {
        wk.tmp.head(n) = T(0);
        wk.tmp2.head(n) = T(0);
        for (int c = 0; c < C; ++c) {
          wk.tmp.head(n) += gf[j * 3 + c] * (wk.img[c].head(n) - fk[j * C + c]);
          if (use_rec) wk.tmp2.head(n) += (wk.img[c].head(n) - fk[j * C + c]).square();
        }
        wk.tmp.head(n) /= den[j];
        if (use_rec) wk.tmp.head(n) += up.recon * wk.tmp2.head(n);
        wk.gw.head(n) += wk.tmp.head(n) * wk.s[j].head(n);
        wk.gs[j].head(n) += wk.tmp.head(n) * wk.w.head(n);
      }

      // Soft supports.
      T gdx = 0, gdy = 0;
      std::array<T, 3> gc{}, gk{}, ga{}, gp{};
      wk.tmp.head(n) = wk.s[0].head(n) * wk.gs[0].head(n) + wk.s[1].head(n) * wk.gs[1].head(n) +
                       wk.s[2].head(n) * wk.gs[2].head(n);
      const auto DX = wk.dx.head(n);
      const auto DY = wk.dy.head(n);
      const auto IR = wk.inv_r.head(n);
      for (int j = 0; j < 3; ++j) {
        wk.tmp2.head(n) = tau * wk.s[j].head(n) * (wk.gs[j].head(n) - wk.tmp.head(n));
        const auto GM = wk.tmp2.head(n);
        const auto CP = wk.cphi[j].head(n);
        gdx += (GM * (g.ecx[j] - CP * DX * IR) * IR).sum();
        gdy += (GM * (g.ecy[j] - CP * DY * IR) * IR).sum();
        gc[j] = (GM * (DY * g.ecx[j] - DX * g.ecy[j]) * IR).sum();
        gk[j] = -GM.sum();
      }

      // Smoothed distances.
      if (need_dist) {
        for (int i = 0; i < 3; ++i) {
          wk.tmp.head(n) = wk.gd.head(n) * wk.pi[i].head(n) / wk.D[i].head(n);
          const auto GD = wk.tmp.head(n);
          const auto Q = wk.q[i].head(n);
          const auto Tt = wk.t[i].head(n);
          gdx += (GD * (-Q * g.ery[i] + Tt.min(T(0)) * g.erx[i])).sum();
          gdy += (GD * (Q * g.erx[i] + Tt.min(T(0)) * g.ery[i])).sum();
          ga[i] = -((Tt >= T(0)).select(GD * Q * Tt, T(0))).sum();
        }
      }
      for (int i = 0; i < 3; ++i) gp[i] = (wk.gw.head(n) * wk.box[i].head(n)).sum();

      T* out = grad_params + static_cast<std::size_t>(k) * kFieldParams;
      out[0] -= gdx;
      out[1] -= gdy;
      out[2] += gc[0] + gc[1] + gc[2] + ga[0] + ga[1] + ga[2];
      out[3] += pi * gc[0] + 2 * pi * (gc[1] + gc[2]) + 2 * pi * (ga[1] + ga[2]) - pi * std::sin(pi * g.w[0]) * gk[0];
      out[4] += pi * gc[1] + 2 * pi * gc[2] + 2 * pi * ga[2] - pi * std::sin(pi * g.w[1]) * gk[1];
      out[5] += pi * gc[2] - pi * std::sin(pi * g.w[2]) * gk[2];
      for (int i = 0; i < 3; ++i) out[6 + i] += gp[i];
    }
  }
}

template void field_forward<float>(int, int, int, const float*, const float*, const FieldKernelOptions&,
                                   const PatchSupervision<float>*, FieldForward<float>&);
template void field_forward<double>(int, int, int, const double*, const double*, const FieldKernelOptions&,
                                    const PatchSupervision<double>*, FieldForward<double>&);
template void field_backward<float>(const float*, const float*, const FieldKernelOptions&,
                                    const PatchSupervision<float>*, const FieldForward<float>&,
                                    const FieldUpstream<float>&, float*);
template void field_backward<double>(const double*, const double*, const FieldKernelOptions&,
                                     const PatchSupervision<double>*, const FieldForward<double>&,
                                     const FieldUpstream<double>&, double*);

}  // namespace ba
