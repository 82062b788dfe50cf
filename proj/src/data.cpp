#include "ba/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "ba/imageio.hpp"

namespace ba {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(splitmix64(seed) + index);
}

bool is_validation(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x51ed27ULL)) % 10 == 0;
}

std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "perlin"; }

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "perlin") return NoiseKind::perlin;
  throw ContractError("unknown noise kind '" + s + "'");
}

StageOptions stage_defaults(int stage) {
  switch (stage) {
    case 1: return {0.02, 0.08, 0.0, 0.1};
    case 2: return {0.05, 0.15, 0.0, 0.1};
    case 3: return {0.10, 0.30, 0.5, 0.1};
    default: throw ContractError("stage must be 1, 2 or 3");
  }
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Color random_color(Rng& rng) { return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}; }

double color_distance(const Color& a, const Color& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Colors pairwise at least `min_dist` apart.
std::vector<Color> distinct_colors(Rng& rng, int n, double min_dist) {
  std::vector<Color> out;
  while (static_cast<int>(out.size()) < n) {
    const Color c = random_color(rng);
    bool ok = true;
    for (const auto& o : out) ok = ok && color_distance(c, o) >= min_dist;
    if (ok) out.push_back(c);
  }
  return out;
}

void to_gray_inplace(ImageF& img) {
  for (std::size_t k = 0; k < img.pixels(); ++k) {
    auto px = img.pixel(k);
    const double m = (px[0] + px[1] + px[2]) / 3.0;
    for (double& v : px) v = m;
  }
}

// Noise and optional grayscale conversion shared by every stage.
void finish_sample(Sample& s, Rng& rng, const StageOptions& opt) {
  const bool gray = uniform(rng, 0, 1) < opt.gray_probability;
  const bool perlin = uniform(rng, 0, 1) < opt.perlin_probability;
  const double level = uniform(rng, opt.noise_min, std::max(opt.noise_min, opt.noise_max) + 1e-300);
  const std::uint64_t noise_seed = rng();
  if (gray) to_gray_inplace(s.clean);
  const NoiseKind kind = perlin ? NoiseKind::perlin : NoiseKind::gaussian;
  s.input = add_noise(s.clean, kind, opt.noise_max > opt.noise_min ? level : opt.noise_min, noise_seed);
  if (gray) to_gray_inplace(s.input);
  s.meta["noise"] = {{"kind", to_string(kind)}, {"level", opt.noise_max > opt.noise_min ? level : opt.noise_min}};
  s.meta["gray"] = gray;
}

class Perlin {
public:
  explicit Perlin(std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < 256; ++i) perm_[i] = i;
    std::shuffle(perm_.begin(), perm_.begin() + 256, rng);
    for (int i = 0; i < 256; ++i) perm_[256 + i] = perm_[i];
  }

  double operator()(double x, double y) const {
    const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
    const double xf = x - xi, yf = y - yi;
    const int X = xi & 255, Y = yi & 255;
    const double u = fade(xf), v = fade(yf);
    const double n00 = grad(perm_[perm_[X] + Y], xf, yf);
    const double n10 = grad(perm_[perm_[X + 1] + Y], xf - 1, yf);
    const double n01 = grad(perm_[perm_[X] + Y + 1], xf, yf - 1);
    const double n11 = grad(perm_[perm_[X + 1] + Y + 1], xf - 1, yf - 1);
    const double a = n00 + u * (n10 - n00);
    const double b = n01 + u * (n11 - n01);
    return a + v * (b - a);
  }

private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double grad(int h, double x, double y) {
    static constexpr double r = 0.70710678118654752;
    static constexpr double gx[8] = {1, -1, 0, 0, r, -r, r, -r};
    static constexpr double gy[8] = {0, 0, 1, -1, r, r, -r, -r};
    return gx[h & 7] * x + gy[h & 7] * y;
  }
  std::array<int, 512> perm_{};
};

}  // namespace

ImageF add_noise(const ImageF& clean, NoiseKind kind, double level, std::uint64_t seed) {
  require(level >= 0.0, "add_noise: level must be nonnegative");
  ImageF out = clean;
  if (level == 0.0) return out;
  if (kind == NoiseKind::gaussian) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, level);
    for (double& v : out.data()) v = std::clamp(v + n(rng), 0.0, 1.0);
    return out;
  }
  constexpr double cell = 8.0;
  constexpr int octaves = 3;
  constexpr double persistence = 0.5;
  // Two-dimensional gradient noise stays within +-sqrt(1/2) per octave.
  double bound = 0.0;
  for (int o = 0; o < octaves; ++o) bound += std::pow(persistence, o) * std::sqrt(0.5);
  for (int c = 0; c < clean.channels(); ++c) {
    const Perlin noise(splitmix64(seed + c));
    for (int y = 0; y < clean.height(); ++y) {
      for (int x = 0; x < clean.width(); ++x) {
        double v = 0.0, amp = 1.0, freq = 1.0 / cell;
        for (int o = 0; o < octaves; ++o, amp *= persistence, freq *= 2.0) v += amp * noise(x * freq, y * freq);
        out(x, y, c) = std::clamp(clean(x, y, c) + level * v / bound, 0.0, 1.0);
      }
    }
  }
  return out;
}

double psnr(const ImageF& clean, const ImageF& noisy) {
  require(clean.same_shape(noisy), "psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < clean.data().size(); ++i) {
    const double e = clean.data()[i] - noisy.data()[i];
    mse += e * e;
  }
  mse /= static_cast<double>(clean.data().size());
  return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

Sample render_junction(const Junction& g, const std::array<Color, 3>& colors, int size, int supersample) {
  require(size >= 1 && supersample >= 1, "render_junction: bad size");
  Sample s{ImageF(size, size, 3), ImageF(size, size, 3), Map(size, size, 1), {}};
  const double center = 0.5 * (size - 1);
  const double step = 1.0 / supersample;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 rel{x - center, y - center};
      Color acc{};
      for (int i = 0; i < supersample; ++i) {
        for (int j = 0; j < supersample; ++j) {
          const Vec2 sub{rel.x - 0.5 + step * (i + 0.5), rel.y - 0.5 + step * (j + 0.5)};
          const Color& c = colors[wedge_index(g, sub) - 1];
          for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
        }
      }
      for (int ch = 0; ch < 3; ++ch) s.clean(x, y, ch) = acc[ch] / (supersample * supersample);
      s.distance(x, y) = junction_distance(g, rel);
    }
  }
  s.input = s.clean;
  return s;
}

Sample gen_stage1(std::uint64_t seed, const StageOptions& opt) {
  Rng rng(seed);
  const int type = static_cast<int>(rng() % 3);
  std::array<double, 3> omega{};
  const char* names[] = {"edge", "corner", "junction"};
  if (type == 0) {
    omega = {0.5, 0.5, 0.0};
  } else if (type == 1) {
    const double a = uniform(rng, 0.15, 0.85);
    omega = {a, 1.0 - a, 0.0};
  } else {
    omega = {uniform(rng, 0.15, 1.0), uniform(rng, 0.15, 1.0), uniform(rng, 0.15, 1.0)};
  }
  const Vec2 u{uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0)};
  const double theta = uniform(rng, 0.0, kTwoPi);
  const Junction g = make_junction(u, theta, omega);
  const auto cols = distinct_colors(rng, 3, 0.2);
  Sample s = render_junction(g, {cols[0], cols[1], cols[2]}, 21);
  s.meta = {{"stage", 1},
            {"seed", seed},
            {"junction", {{"type", names[type]}, {"u", {u.x, u.y}}, {"theta", g.theta}, {"omega", omega}}}};
  finish_sample(s, rng, opt);
  return s;
}

Sample gen_edge(std::uint64_t seed, int size) {
  Rng rng(seed);
  const Vec2 u{uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)};
  const Junction g = edge_junction(u, uniform(rng, 0.0, kTwoPi));
  const auto cols = distinct_colors(rng, 2, 0.3);
  Sample s = render_junction(g, {cols[0], cols[1], cols[1]}, size);
  s.meta = {{"kind", "edge"}, {"seed", seed}, {"u", {u.x, u.y}}, {"theta", g.theta}};
  return s;
}

bool Shape::contains(Vec2 p) const {
  if (kind == Kind::circle) {
    const Vec2 d = p - center;
    return dot(d, d) <= radius * radius;
  }
  const double c0 = cross(vertices[1] - vertices[0], p - vertices[0]);
  const double c1 = cross(vertices[2] - vertices[1], p - vertices[1]);
  const double c2 = cross(vertices[0] - vertices[2], p - vertices[2]);
  return (c0 >= 0 && c1 >= 0 && c2 >= 0) || (c0 <= 0 && c1 <= 0 && c2 <= 0);
}

bool SceneSpec::valid() const {
  if (height <= 0 || width <= 0) return false;
  const double mx = 0.2 * width, my = 0.2 * height;
  auto inside = [&](Vec2 p) { return p.x >= -mx && p.x <= width + mx && p.y >= -my && p.y <= height + my; };
  for (const auto& s : shapes) {
    for (double c : s.color)
      if (c < 0.0 || c > 1.0) return false;
    if (s.kind == Shape::Kind::circle) {
      if (s.radius <= 0.0 || !inside(s.center)) return false;
    } else {
      for (const auto& v : s.vertices)
        if (!inside(v)) return false;
    }
  }
  return true;
}

nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& sh : s.shapes) {
    if (sh.kind == Shape::Kind::circle) {
      shapes.push_back({{"kind", "circle"}, {"center", {sh.center.x, sh.center.y}}, {"radius", sh.radius},
                        {"color", sh.color}});
    } else {
      nlohmann::json v = nlohmann::json::array();
      for (const auto& p : sh.vertices) v.push_back({p.x, p.y});
      shapes.push_back({{"kind", "triangle"}, {"vertices", v}, {"color", sh.color}});
    }
  }
  return {{"height", s.height}, {"width", s.width}, {"background", s.background}, {"seed", s.seed},
          {"shapes", shapes}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.height = j.value("height", 240);
  s.width = j.value("width", 320);
  s.background = j.value("background", Color{0.5, 0.5, 0.5});
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.value("shapes", nlohmann::json::array())) {
    Shape sh;
    sh.color = e.at("color").get<Color>();
    if (e.at("kind") == "circle") {
      const auto c = e.at("center").get<std::array<double, 2>>();
      sh.center = {c[0], c[1]};
      sh.radius = e.at("radius").get<double>();
    } else if (e.at("kind") == "triangle") {
      sh.kind = Shape::Kind::triangle;
      const auto v = e.at("vertices").get<std::vector<std::array<double, 2>>>();
      require(v.size() == 3, "scene: triangles need three vertices");
      for (int i = 0; i < 3; ++i) sh.vertices[i] = {v[i][0], v[i][1]};
    } else {
      throw ContractError("scene: unknown shape kind");
    }
    s.shapes.push_back(sh);
  }
  require(s.valid(), "scene: shapes outside the expanded canvas or bad colors");
  return s;
}

namespace {

Shape random_shape(Rng& rng, int height, int width, bool triangle) {
  const double mx = 0.2 * width, my = 0.2 * height;
  const double scale = std::min(height, width);
  Shape s;
  s.color = random_color(rng);
  if (!triangle) {
    s.center = {uniform(rng, -mx, width + mx), uniform(rng, -my, height + my)};
    s.radius = uniform(rng, 0.05, 0.3) * scale;
    return s;
  }
  s.kind = Shape::Kind::triangle;
  for (;;) {
    const Vec2 c{uniform(rng, 0, width), uniform(rng, 0, height)};
    for (auto& v : s.vertices) {
      const double a = uniform(rng, 0, kTwoPi), r = uniform(rng, 0.1, 0.5) * scale;
      v = {std::clamp(c.x + r * std::cos(a), -mx, width + mx), std::clamp(c.y + r * std::sin(a), -my, height + my)};
    }
    // Degenerate (near zero-area) triangles are resampled.
    if (std::abs(cross(s.vertices[1] - s.vertices[0], s.vertices[2] - s.vertices[0])) > 0.01 * scale * scale)
      return s;
  }
}

Color color_at(const SceneSpec& spec, Vec2 p) {
  for (auto it = spec.shapes.rbegin(); it != spec.shapes.rend(); ++it)
    if (it->contains(p)) return it->color;
  return spec.background;
}

struct ContourPoint {
  Vec2 p;
  Vec2 normal;
};

std::vector<ContourPoint> contour(const Shape& s, double spacing) {
  std::vector<ContourPoint> out;
  if (s.kind == Shape::Kind::circle) {
    const int n = std::max(8, static_cast<int>(std::ceil(kTwoPi * s.radius / spacing)));
    for (int i = 0; i < n; ++i) {
      const double a = kTwoPi * i / n;
      const Vec2 nrm{std::cos(a), std::sin(a)};
      out.push_back({s.center + s.radius * nrm, nrm});
    }
    return out;
  }
  for (int e = 0; e < 3; ++e) {
    const Vec2 a = s.vertices[e], b = s.vertices[(e + 1) % 3];
    const double len = norm(b - a);
    const Vec2 dir = (1.0 / len) * (b - a);
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 0; i < n; ++i) out.push_back({a + (len * i / n) * dir, {dir.y, -dir.x}});
  }
  return out;
}

class PointGrid {
public:
  PointGrid(const std::vector<Vec2>& pts, double x0, double y0, double x1, double y1, double cell)
      : x0_(x0), y0_(y0), cell_(cell) {
    for (const auto& p : pts) {
      x0_ = std::min(x0_, p.x);
      y0_ = std::min(y0_, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    nx_ = static_cast<int>((x1 - x0_) / cell) + 1;
    ny_ = static_cast<int>((y1 - y0_) / cell) + 1;
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (const auto& p : pts) cells_[cell_index(cx(p.x), cy(p.y))].push_back(p);
  }

  double nearest(Vec2 q) const {
    const int qx = cx(q.x), qy = cy(q.y);
    double best2 = std::numeric_limits<double>::infinity();
    const int rmax = std::max(nx_, ny_);
    for (int r = 0; r <= rmax; ++r) {
      for (int y = qy - r; y <= qy + r; ++y) {
        if (y < 0 || y >= ny_) continue;
        const bool edge_row = y == qy - r || y == qy + r;
        for (int x = qx - r; x <= qx + r; x += edge_row ? 1 : 2 * r) {
          if (x >= 0 && x < nx_)
            for (const auto& p : cells_[cell_index(x, y)]) best2 = std::min(best2, dot(p - q, p - q));
          if (r == 0) break;
        }
      }
      const double bound = r * cell_;
      if (best2 <= bound * bound) break;
    }
    return std::sqrt(best2);
  }

private:
  int cx(double x) const { return std::clamp(static_cast<int>((x - x0_) / cell_), 0, nx_ - 1); }
  int cy(double y) const { return std::clamp(static_cast<int>((y - y0_) / cell_), 0, ny_ - 1); }
  std::size_t cell_index(int x, int y) const { return static_cast<std::size_t>(y) * nx_ + x; }

  double x0_, y0_, cell_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<Vec2>> cells_;
};

}  // namespace

SceneSpec random_scene(std::uint64_t seed, int height, int width, int min_shapes, int max_shapes) {
  require(min_shapes >= 0 && max_shapes >= min_shapes, "random_scene: bad shape count range");
  Rng rng(seed);
  SceneSpec s;
  s.height = height;
  s.width = width;
  s.seed = seed;
  s.background = random_color(rng);
  const int count = min_shapes + static_cast<int>(rng() % static_cast<std::uint64_t>(max_shapes - min_shapes + 1));
  for (int i = 0; i < count; ++i) s.shapes.push_back(random_shape(rng, height, width, rng() % 2 == 1));
  return s;
}

SceneRender gen_scene(const SceneSpec& spec) {
  require(spec.valid(), "gen_scene: invalid scene");
  const int H = spec.height, W = spec.width;
  SceneRender out{ImageF(H, W, 3), Map(H, W, 1)};
  constexpr int ss = 4;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Color acc{};
      for (int i = 0; i < ss; ++i)
        for (int j = 0; j < ss; ++j) {
          const Color c = color_at(spec, {x - 0.5 + (i + 0.5) / ss, y - 0.5 + (j + 0.5) / ss});
          for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
        }
      for (int ch = 0; ch < 3; ++ch) out.clean(x, y, ch) = acc[ch] / (ss * ss);
    }
  }

  constexpr double eps = 1e-3;
  std::vector<Vec2> boundary;
  for (std::size_t i = 0; i < spec.shapes.size(); ++i) {
    for (const auto& cp : contour(spec.shapes[i], 0.1)) {
      bool covered = false;
      for (std::size_t j = i + 1; j < spec.shapes.size() && !covered; ++j)
        covered = spec.shapes[j].contains(cp.p + eps * cp.normal) && spec.shapes[j].contains(cp.p - eps * cp.normal);
      if (covered) continue;
      if (color_at(spec, cp.p + eps * cp.normal) != color_at(spec, cp.p - eps * cp.normal)) boundary.push_back(cp.p);
    }
  }
  if (boundary.empty()) {
    std::fill(out.distance.data().begin(), out.distance.data().end(), std::hypot(H, W));
    return out;
  }
  const PointGrid grid(boundary, 0.0, 0.0, W, H, 4.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) out.distance(x, y) = grid.nearest({static_cast<double>(x), static_cast<double>(y)});
  return out;
}

namespace {

Sample crop_sample(const SceneRender& r, int x0, int y0, int size) {
  Sample s;
  s.clean = crop(r.clean, x0, y0, size, size);
  s.distance = crop(r.distance, x0, y0, size, size);
  return s;
}

}  // namespace

Sample gen_stage2(std::uint64_t seed, const StageOptions& opt) {
  Rng rng(seed);
  SceneSpec spec;
  spec.height = spec.width = 100;
  spec.seed = seed;
  const auto cols = distinct_colors(rng, 3, 0.2);
  spec.background = cols[0];
  // One circle and one triangle, kept mostly on the canvas.
  Shape circle;
  circle.center = {uniform(rng, 20, 80), uniform(rng, 20, 80)};
  circle.radius = uniform(rng, 8, 30);
  circle.color = cols[1];
  Shape tri = random_shape(rng, 100, 100, true);
  tri.color = cols[2];
  if (rng() % 2) spec.shapes = {circle, tri};
  else spec.shapes = {tri, circle};
  const auto r = gen_scene(spec);
  Sample s = crop_sample(r, 0, 0, 100);
  s.meta = {{"stage", 2}, {"seed", seed}, {"scene", to_json(spec)}};
  finish_sample(s, rng, opt);
  return s;
}

Sample gen_stage3(std::uint64_t seed, const StageOptions& opt) {
  Rng rng(seed);
  const SceneSpec spec = random_scene(rng(), 240, 320, 15, 20);
  const auto r = gen_scene(spec);
  const int x0 = static_cast<int>(rng() % (320 - 125 + 1));
  const int y0 = static_cast<int>(rng() % (240 - 125 + 1));
  Sample s = crop_sample(r, x0, y0, 125);
  s.meta = {{"stage", 3}, {"seed", seed}, {"scene_seed", spec.seed}, {"crop", {x0, y0}}};
  finish_sample(s, rng, opt);
  return s;
}

Sample gen_sample(int stage, std::uint64_t seed, const StageOptions& opt) {
  switch (stage) {
    case 1: return gen_stage1(seed, opt);
    case 2: return gen_stage2(seed, opt);
    case 3: return gen_stage3(seed, opt);
    default: throw ContractError("stage must be 1, 2 or 3");
  }
}

std::vector<Sample> generate_dataset(int stage, std::size_t count, std::uint64_t seed, const StageOptions& opt) {
  std::vector<Sample> out(count);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(count); ++i) {
    out[i] = gen_sample(stage, sample_seed(seed, i), opt);
    out[i].meta["split"] = is_validation(seed, i) ? "validation" : "train";
  }
  return out;
}

namespace {

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", i);
  return buf;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, int stage, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index = {{"version", 1}, {"stage", stage}, {"seed", seed}, {"count", samples.size()}};
  index["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string id = sample_id(i);
    const auto& s = samples[i];
    io::write_ppm((fs::path(dir) / (id + "_input.ppm")).string(), s.input);
    io::write_ppm((fs::path(dir) / (id + "_clean.ppm")).string(), s.clean);
    io::write_pfm((fs::path(dir) / (id + "_distance.pfm")).string(), s.distance);
    index["samples"].push_back({{"id", id},
                                {"split", is_validation(seed, i) ? "validation" : "train"},
                                {"files", {id + "_input.ppm", id + "_clean.ppm", id + "_distance.pfm"}},
                                {"meta", s.meta}});
  }
  std::ofstream out(fs::path(dir) / "index.json");
  if (!out) throw std::runtime_error("cannot write index.json in " + dir);
  out << index.dump(1) << '\n';
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / "index.json").string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path, e.byte, "index is not valid JSON");
  }
  Dataset ds;
  ds.dir = dir;
  ds.stage = index.at("stage").get<int>();
  ds.seed = index.value("seed", std::uint64_t{0});
  for (const auto& e : index.at("samples"))
    ds.entries.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(), e.value("meta", nlohmann::json::object())});
  return ds;
}

Sample Dataset::load(std::size_t i) const {
  namespace fs = std::filesystem;
  const auto& e = entries.at(i);
  Sample s;
  s.input = to_rgb(io::read_pnm((fs::path(dir) / (e.id + "_input.ppm")).string()));
  s.clean = to_rgb(io::read_pnm((fs::path(dir) / (e.id + "_clean.ppm")).string()));
  s.distance = io::read_pfm((fs::path(dir) / (e.id + "_distance.pfm")).string());
  s.meta = e.meta;
  return s;
}

std::vector<std::size_t> Dataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == split) out.push_back(i);
  return out;
}

}  // namespace ba
