#include "ba/fieldops.hpp"

#include "ba/prepared.hpp"

namespace ba {
namespace {

void check_dims(const ImageF& image, const JunctionField& field) {
  require(field.matches(image), "field and image dimensions differ");
}

void check_dims(const JunctionField& field, const WedgeFeatures& wedges) {
  require(wedges.height == field.height() && wedges.width == field.width(),
          "field and wedge feature dimensions differ");
}

std::vector<PreparedJunction> prepare(const JunctionField& field) {
  std::vector<PreparedJunction> out;
  out.reserve(field.size());
  for (std::size_t k = 0; k < field.size(); ++k) out.emplace_back(field.junction(k));
  return out;
}

// Window value as a function of an integer offset, via the box radii 1, 4, 8.
inline double window_at(const WindowWeights& p, int dx, int dy) {
  const int r = std::max(std::abs(dx), std::abs(dy));
  return (r <= 1 ? p.p[0] : 0.0) + (r <= 4 ? p.p[1] : 0.0) + (r <= 8 ? p.p[2] : 0.0);
}

// Slice sums are shifted by the first contribution so that agreeing patches
// give exactly zero variance.
struct PixelAccum {
  double weight = 0.0;
  bool started = false;
  double b0 = 0.0, b = 0.0, b2 = 0.0;
  double d0 = 0.0, d = 0.0, d2 = 0.0;
  std::array<double, 3> f0{}, f{}, f2{};

  double mean_d() const { return d0 + d / weight; }
  double var_d() const { return std::max(0.0, d2 / weight - (d / weight) * (d / weight)); }
  double mean_b() const { return b0 + b / weight; }
  double var_b() const { return std::max(0.0, b2 / weight - (b / weight) * (b / weight)); }
  double mean_f(int c) const { return f0[c] + f[c] / weight; }
  double var_f(int c) const { return std::max(0.0, f2[c] / weight - (f[c] / weight) * (f[c] / weight)); }
};

// Accumulates the window-weighted slice sums at pixel (x, y).
template <bool kFeatures>
PixelAccum accumulate_pixel(const JunctionField& field, const std::vector<PreparedJunction>& prep,
                            const WedgeFeatures* wedges, int x, int y, double eta) {
  PixelAccum acc;
  const PatchBox box(x, y, field.width(), field.height());
  const int C = wedges ? wedges->channels : 0;
  for (int ky = box.y0; ky <= box.y1; ++ky) {
    for (int kx = box.x0; kx <= box.x1; ++kx) {
      const std::size_t k = field.index(kx, ky);
      const double w = window_at(field.window(k), x - kx, y - ky);
      if (w <= 0.0) continue;
      const Vec2 rel{static_cast<double>(x - kx), static_cast<double>(y - ky)};
      const auto& g = prep[k];
      const double d = g.distance(rel);
      const double r = d / eta;
      const double bk = 1.0 / (1.0 + r * r);
      const double* f = nullptr;
      if constexpr (kFeatures) f = wedges->feature(k, g.wedge(rel));
      if (!acc.started) {
        acc.started = true;
        acc.d0 = d;
        acc.b0 = bk;
        for (int c = 0; c < C; ++c) acc.f0[c] = f[c];
      }
      acc.weight += w;
      const double dd = d - acc.d0;
      acc.d += w * dd;
      acc.d2 += w * dd * dd;
      const double db = bk - acc.b0;
      acc.b += w * db;
      acc.b2 += w * db * db;
      if constexpr (kFeatures) {
        for (int c = 0; c < C; ++c) {
          const double df = f[c] - acc.f0[c];
          acc.f[c] += w * df;
          acc.f2[c] += w * df * df;
        }
      }
    }
  }
  return acc;
}

}  // namespace

WedgeFeatures gather(const ImageF& image, const JunctionField& field) {
  check_dims(image, field);
  const int C = image.channels();
  require(C <= 3, "gather: at most 3 channels");
  WedgeFeatures out{field.height(), field.width(), C, {}, {}, {}};
  const std::size_t K = field.size();
  out.values.assign(K * 3 * C, 0.0);
  out.denominators.assign(K * 3, 0.0);
  out.valid.assign(K * 3, 0);
  const auto prep = prepare(field);
  const int W = field.width();
  const int H = field.height();

#pragma omp parallel for schedule(static)
  for (int ki = 0; ki < static_cast<int>(K); ++ki) {
    const std::size_t k = static_cast<std::size_t>(ki);
    const int kx = ki % W;
    const int ky = ki / W;
    const PatchBox box(kx, ky, W, H);
    std::array<double, 9> num{};
    std::array<double, 3> den{};
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const double w = window_at(field.window(k), x - kx, y - ky);
        if (w <= 0.0) continue;
        const int j = prep[k].wedge({static_cast<double>(x - kx), static_cast<double>(y - ky)});
        const auto f = image.pixel(image.index(x, y));
        den[j] += w;
        for (int c = 0; c < C; ++c) num[j * 3 + c] += w * f[c];
      }
    }
    const double total = den[0] + den[1] + den[2];
    for (int j = 0; j < 3; ++j) {
      out.denominators[k * 3 + j] = den[j];
      out.valid[k * 3 + j] = den[j] > 0.0;
      for (int c = 0; c < C; ++c) {
        const double v = den[j] > 0.0 ? num[j * 3 + c] / den[j]
                                      : (num[c] + num[3 + c] + num[6 + c]) / total;
        out.values[(k * 3 + j) * C + c] = v;
      }
    }
  }
  return out;
}

SliceMeans slice_means(const JunctionField& field, const WedgeFeatures& wedges) {
  check_dims(field, wedges);
  const int C = wedges.channels;
  SliceMeans out{ImageF(field.height(), field.width(), C), Map(field.height(), field.width(), 1)};
  const auto prep = prepare(field);
  const int W = field.width();
  const int N = static_cast<int>(field.size());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const auto acc = accumulate_pixel<true>(field, prep, &wedges, n % W, n / W, kDefaultEta);
    out.distance.data()[n] = acc.mean_d();
    for (int c = 0; c < C; ++c) out.features.data()[static_cast<std::size_t>(n) * C + c] = acc.mean_f(c);
  }
  return out;
}

SliceVariances slice_variances(const JunctionField& field, const WedgeFeatures& wedges) {
  check_dims(field, wedges);
  const int C = wedges.channels;
  SliceVariances out{Map(field.height(), field.width(), 1), Map(field.height(), field.width(), 1)};
  const auto prep = prepare(field);
  const int W = field.width();
  const int N = static_cast<int>(field.size());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const auto acc = accumulate_pixel<true>(field, prep, &wedges, n % W, n / W, kDefaultEta);
    out.distance.data()[n] = acc.var_d();
    double vf = 0.0;
    for (int c = 0; c < C; ++c) vf += acc.var_f(c);
    out.features.data()[n] = vf / C;
  }
  return out;
}

Map global_boundary_map(const JunctionField& field, double eta, double gamma_vis) {
  require(eta > 0.0, "global_boundary_map: eta must be positive");
  Map out(field.height(), field.width(), 1);
  const auto prep = prepare(field);
  const int W = field.width();
  const int N = static_cast<int>(field.size());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const auto acc = accumulate_pixel<false>(field, prep, nullptr, n % W, n / W, eta);
    const double b = acc.mean_b();
    out.data()[n] = gamma_vis == 1.0 ? b : std::pow(b, gamma_vis);
  }
  return out;
}

GlobalMaps compute_global_maps(const ImageF& image, const JunctionField& field, double eta) {
  const auto wedges = gather(image, field);
  const int C = image.channels();
  const int H = field.height();
  const int W = field.width();
  GlobalMaps out{ImageF(H, W, C), Map(H, W, 1), Map(H, W, 1), Map(H, W, 1), Map(H, W, 1), Map(H, W, 1)};
  const auto prep = prepare(field);
  const int N = static_cast<int>(field.size());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const auto acc = accumulate_pixel<true>(field, prep, &wedges, n % W, n / W, eta);
    out.distance.data()[n] = acc.mean_d();
    out.distance_variance.data()[n] = acc.var_d();
    out.boundary.data()[n] = acc.mean_b();
    out.boundary_variance.data()[n] = acc.var_b();
    double vf = 0.0;
    for (int c = 0; c < C; ++c) {
      out.features.data()[static_cast<std::size_t>(n) * C + c] = acc.mean_f(c);
      vf += acc.var_f(c);
    }
    out.feature_variance.data()[n] = vf / C;
  }
  return out;
}

AffinityKernel affinity_map(const JunctionField& field, const WedgeFeatures& wedges, int x, int y) {
  check_dims(field, wedges);
  require(x >= 0 && y >= 0 && x < field.width() && y < field.height(), "affinity_map: pixel out of bounds");
  AffinityKernel ker{x, y, Map(kAffinitySide, kAffinitySide, 1)};
  const int W = field.width();
  const int H = field.height();
  const PatchBox around(x, y, W, H);
  double total = 0.0;
  for (int ky = around.y0; ky <= around.y1; ++ky)
    for (int kx = around.x0; kx <= around.x1; ++kx)
      total += window_at(field.window(field.index(kx, ky)), x - kx, y - ky);

  for (int ky = around.y0; ky <= around.y1; ++ky) {
    for (int kx = around.x0; kx <= around.x1; ++kx) {
      const std::size_t k = field.index(kx, ky);
      const auto& p = field.window(k);
      const double wn = window_at(p, x - kx, y - ky);
      if (wn <= 0.0) continue;
      const PreparedJunction g(field.junction(k));
      const int j = g.wedge({static_cast<double>(x - kx), static_cast<double>(y - ky)});
      const double scale = wn / (total * wedges.denominators[k * 3 + j]);
      const PatchBox box(kx, ky, W, H);
      for (int my = box.y0; my <= box.y1; ++my) {
        for (int mx = box.x0; mx <= box.x1; ++mx) {
          const double wm = window_at(p, mx - kx, my - ky);
          if (wm <= 0.0) continue;
          if (g.wedge({static_cast<double>(mx - kx), static_cast<double>(my - ky)}) != j) continue;
          ker.weights(mx - x + kAffinityRadius, my - y + kAffinityRadius) += scale * wm;
        }
      }
    }
  }
  return ker;
}

std::vector<double> apply_kernel(const AffinityKernel& kernel, const ImageF& image) {
  const int C = image.channels();
  std::vector<double> out(C, 0.0);
  for (int oy = 0; oy < kAffinitySide; ++oy) {
    for (int ox = 0; ox < kAffinitySide; ++ox) {
      const double a = kernel.weights(ox, oy);
      if (a == 0.0) continue;
      const int mx = kernel.x + ox - kAffinityRadius;
      const int my = kernel.y + oy - kAffinityRadius;
      for (int c = 0; c < C; ++c) out[c] += a * image(mx, my, c);
    }
  }
  return out;
}

}  // namespace ba
