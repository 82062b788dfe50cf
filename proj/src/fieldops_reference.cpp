#include "ba/fieldops.hpp"

namespace ba::reference {
namespace {

Vec2 offset(int x, int y, int kx, int ky) { return {static_cast<double>(x - kx), static_cast<double>(y - ky)}; }

bool in_support(int x, int y, int kx, int ky) {
  return std::abs(x - kx) <= kPatchRadius && std::abs(y - ky) <= kPatchRadius;
}

}  // namespace

WedgeFeatures gather(const ImageF& image, const JunctionField& field) {
  require(field.matches(image), "field and image dimensions differ");
  const int C = image.channels();
  const int H = field.height();
  const int W = field.width();
  WedgeFeatures out{H, W, C, {}, {}, {}};
  out.values.assign(field.size() * 3 * C, 0.0);
  out.denominators.assign(field.size() * 3, 0.0);
  out.valid.assign(field.size() * 3, 0);
  for (int ky = 0; ky < H; ++ky) {
    for (int kx = 0; kx < W; ++kx) {
      const std::size_t k = field.index(kx, ky);
      const Junction& g = field.junction(k);
      std::vector<double> num(3 * C, 0.0), all(C, 0.0);
      double den[3] = {0.0, 0.0, 0.0};
      double den_all = 0.0;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (!in_support(x, y, kx, ky)) continue;
          const Vec2 rel = offset(x, y, kx, ky);
          const double w = window_value(field.window(k), rel);
          den_all += w;
          for (int c = 0; c < C; ++c) all[c] += w * image(x, y, c);
          for (int j = 1; j <= 3; ++j) {
            const double ws = w * wedge_support(g, j, rel);
            den[j - 1] += ws;
            for (int c = 0; c < C; ++c) num[(j - 1) * C + c] += ws * image(x, y, c);
          }
        }
      }
      for (int j = 0; j < 3; ++j) {
        out.denominators[k * 3 + j] = den[j];
        out.valid[k * 3 + j] = den[j] > 0.0;
        for (int c = 0; c < C; ++c)
          out.values[(k * 3 + j) * C + c] = den[j] > 0.0 ? num[j * C + c] / den[j] : all[c] / den_all;
      }
    }
  }
  return out;
}

namespace {

// Per-pixel list of (weight, distance, sliced feature) over contributing patches.
struct Contribution {
  double w;
  double d;
  std::vector<double> f;
};

std::vector<Contribution> contributions(const JunctionField& field, const WedgeFeatures& wedges, int x, int y) {
  std::vector<Contribution> out;
  for (int ky = 0; ky < field.height(); ++ky) {
    for (int kx = 0; kx < field.width(); ++kx) {
      if (!in_support(x, y, kx, ky)) continue;
      const std::size_t k = field.index(kx, ky);
      const Vec2 rel = offset(x, y, kx, ky);
      const double w = window_value(field.window(k), rel);
      if (w <= 0.0) continue;
      const Junction& g = field.junction(k);
      std::vector<double> f(wedges.channels, 0.0);
      for (int j = 1; j <= 3; ++j) {
        const int s = wedge_support(g, j, rel);
        for (int c = 0; c < wedges.channels; ++c) f[c] += s * wedges.feature(k, j - 1)[c];
      }
      out.push_back({w, junction_distance(g, rel), std::move(f)});
    }
  }
  return out;
}

}  // namespace

SliceMeans slice_means(const JunctionField& field, const WedgeFeatures& wedges) {
  const int C = wedges.channels;
  SliceMeans out{ImageF(field.height(), field.width(), C), Map(field.height(), field.width(), 1)};
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      double wsum = 0.0, dsum = 0.0;
      std::vector<double> fsum(C, 0.0);
      for (const auto& c : contributions(field, wedges, x, y)) {
        wsum += c.w;
        dsum += c.w * c.d;
        for (int i = 0; i < C; ++i) fsum[i] += c.w * c.f[i];
      }
      out.distance(x, y) = dsum / wsum;
      for (int i = 0; i < C; ++i) out.features(x, y, i) = fsum[i] / wsum;
    }
  }
  return out;
}

SliceVariances slice_variances(const JunctionField& field, const WedgeFeatures& wedges) {
  const int C = wedges.channels;
  const auto means = reference::slice_means(field, wedges);
  SliceVariances out{Map(field.height(), field.width(), 1), Map(field.height(), field.width(), 1)};
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      double wsum = 0.0, vd = 0.0, vf = 0.0;
      for (const auto& c : contributions(field, wedges, x, y)) {
        wsum += c.w;
        const double dd = c.d - means.distance(x, y);
        vd += c.w * dd * dd;
        for (int i = 0; i < C; ++i) {
          const double df = c.f[i] - means.features(x, y, i);
          vf += c.w * df * df;
        }
      }
      out.distance(x, y) = vd / wsum;
      out.features(x, y) = vf / (wsum * C);
    }
  }
  return out;
}

Map global_boundary_map(const JunctionField& field, double eta, double gamma_vis) {
  require(eta > 0.0, "global_boundary_map: eta must be positive");
  Map out(field.height(), field.width(), 1);
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      double wsum = 0.0, bsum = 0.0;
      for (int ky = 0; ky < field.height(); ++ky) {
        for (int kx = 0; kx < field.width(); ++kx) {
          if (!in_support(x, y, kx, ky)) continue;
          const std::size_t k = field.index(kx, ky);
          const Vec2 rel = offset(x, y, kx, ky);
          const double w = window_value(field.window(k), rel);
          if (w <= 0.0) continue;
          wsum += w;
          bsum += w * boundary_strength(field.junction(k), rel, eta);
        }
      }
      out(x, y) = std::pow(bsum / wsum, gamma_vis);
    }
  }
  return out;
}

}  // namespace ba::reference
