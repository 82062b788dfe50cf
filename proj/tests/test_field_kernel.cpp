#include "doctest.h"

#include <random>

#include "ba/field_kernel.hpp"

using namespace ba;

namespace {

struct Instance {
  int H, W, C;
  std::vector<double> params, image, gfbar, gdbar, gnuf, gnuv;
  std::vector<double> alpha, chi, fgt, dgt;
  double gpf, gpd, grec;
};

Instance random_instance(std::uint64_t seed, int H, int W, int C) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 1.0);
  Instance in{H, W, C, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, 0, 0, 0};
  const int N = H * W;
  for (int k = 0; k < N; ++k) {
    in.params.push_back(3.0 * U(rng));
    in.params.push_back(3.0 * U(rng));
    in.params.push_back(3.0 * U(rng));
    double a[3], s = 0;
    for (double& v : a) s += (v = std::exp(U(rng)));
    for (double v : a) in.params.push_back(v / s);
    s = 0;
    for (double& v : a) s += (v = std::exp(U(rng)));
    for (double v : a) in.params.push_back(v / s);
  }
  for (int i = 0; i < N * C; ++i) in.image.push_back(P(rng));
  for (int i = 0; i < N * C; ++i) in.gfbar.push_back(U(rng));
  for (int i = 0; i < N * C; ++i) in.fgt.push_back(P(rng));
  for (int i = 0; i < N; ++i) {
    in.gdbar.push_back(U(rng));
    in.gnuf.push_back(U(rng));
    in.gnuv.push_back(U(rng));
    in.alpha.push_back(0.3 + P(rng));
    in.chi.push_back(0.01 * P(rng));
    in.dgt.push_back(4.0 * P(rng));
  }
  in.gpf = U(rng);
  in.gpd = U(rng);
  in.grec = U(rng);
  return in;
}

double objective(const Instance& in, const std::vector<double>& params, const FieldKernelOptions& opt) {
  PatchSupervision<double> sup{in.alpha.data(), in.chi.data(), in.fgt.data(), in.dgt.data()};
  FieldForward<double> fwd;
  field_forward(in.H, in.W, in.C, params.data(), in.image.data(), opt, &sup, fwd);
  double L = in.gpf * fwd.patch_f + in.gpd * fwd.patch_d + in.grec * fwd.recon;
  for (std::size_t i = 0; i < fwd.fbar.size(); ++i) L += in.gfbar[i] * fwd.fbar[i];
  for (int n = 0; n < in.H * in.W; ++n)
    L += in.gdbar[n] * fwd.dbar[n] + in.gnuf[n] * fwd.nu_f[n] + in.gnuv[n] * fwd.nu_v[n];
  return L;
}

}  // namespace

TEST_CASE("field kernel backward matches central differences") {
  for (bool bvar : {false, true}) {
    const auto in = random_instance(bvar ? 7 : 3, 10, 11, 3);
    FieldKernelOptions opt;
    opt.reconstruction = true;
    opt.boundary_variance = bvar;
    PatchSupervision<double> sup{in.alpha.data(), in.chi.data(), in.fgt.data(), in.dgt.data()};
    FieldForward<double> fwd;
    field_forward(in.H, in.W, in.C, in.params.data(), in.image.data(), opt, &sup, fwd);
    FieldUpstream<double> up{in.gfbar.data(), in.gdbar.data(), in.gnuf.data(), in.gnuv.data(), in.gpf, in.gpd,
                             in.grec};
    std::vector<double> grad(in.params.size(), 0.0);
    field_backward(in.params.data(), in.image.data(), opt, &sup, fwd, up, grad.data());

    // Five-point stencil: the smoothed distances bend sharply on the scale of
    // the smoothing length, so the second-order stencil is too coarse.
    const double h = 5e-5;
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    double worst = 0.0;
    for (std::size_t i = 0; i < in.params.size(); ++i) {
      auto at = [&](double off) {
        auto p = in.params;
        p[i] += off;
        return objective(in, p, opt);
      };
      const double fd = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      const double err = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4 * scale});
      worst = std::max(worst, err);
    }
    MESSAGE("worst relative error " << worst);
    CHECK(worst < 1e-3);
  }
}
