#include "ba/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <queue>
#include <tuple>

namespace ba {

EvalConfig::EvalConfig() : thresholds(uniform_thresholds(33)) {}

std::vector<double> uniform_thresholds(int n) {
  require(n >= 1, "uniform_thresholds: n must be positive");
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1) / (n + 1);
  return t;
}

void EvalConfig::validate() const {
  require(tolerance > 0.0, "eval config: tolerance must be positive");
  require(!thresholds.empty(), "eval config: empty threshold grid");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    require(thresholds[i] > 0.0 && thresholds[i] < 1.0, "eval config: thresholds must lie in (0, 1)");
    if (i > 0) require(thresholds[i] > thresholds[i - 1], "eval config: thresholds must increase");
  }
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "eval config: expected a JSON object");
  EvalConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "tolerance") cfg.tolerance = value.get<double>();
    else if (key == "thresholds") {
      cfg.thresholds = value.is_number_integer() ? uniform_thresholds(value.get<int>())
                                                 : value.get<std::vector<double>>();
    } else if (key == "thin") cfg.thin = value.get<bool>();
    else throw ContractError("eval config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const EvalConfig& cfg) {
  return {{"tolerance", cfg.tolerance}, {"thresholds", cfg.thresholds}, {"thin", cfg.thin}};
}

double MatchCounts::fscore() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, double radius) {
  require(pred.height() == gt.height() && pred.width() == gt.width(), "match_boundaries: dimension mismatch");
  const int W = pred.width(), H = pred.height();
  const int reach = static_cast<int>(std::floor(radius));
  const double r2 = radius * radius;
  std::vector<std::tuple<int, int, int>> pairs;  // squared distance, pred index, gt index
  long n_pred = 0, n_gt = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (gt(x, y)) ++n_gt;
      if (!pred(x, y)) continue;
      ++n_pred;
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const int d2 = dx * dx + dy * dy;
          if (d2 > r2 || !gt.contains(x + dx, y + dy) || !gt(x + dx, y + dy)) continue;
          pairs.emplace_back(d2, y * W + x, (y + dy) * W + x + dx);
        }
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  const std::size_t N = static_cast<std::size_t>(W) * H;
  std::vector<int> match_p(N, -1), match_g(N, -1);
  MatchCounts m;
  for (const auto& [d2, p, g] : pairs) {
    if (match_p[p] >= 0 || match_g[g] >= 0) continue;
    match_p[p] = g;
    match_g[g] = p;
    ++m.tp;
  }

  // Augmenting paths turn the greedy assignment into a maximum matching.
  std::vector<std::vector<int>> adj(N);
  for (const auto& [d2, p, g] : pairs) adj[p].push_back(g);
  std::vector<int> seen(N, -1);
  std::function<bool(int, int)> augment = [&](int p, int round) {
    for (int g : adj[p]) {
      if (seen[g] == round) continue;
      seen[g] = round;
      if (match_g[g] < 0 || augment(match_g[g], round)) {
        match_g[g] = p;
        match_p[p] = g;
        return true;
      }
    }
    return false;
  };
  int round = 0;
  for (std::size_t p = 0; p < N; ++p)
    if (match_p[p] < 0 && !adj[p].empty() && augment(static_cast<int>(p), round++)) ++m.tp;
  m.fp = n_pred - m.tp;
  m.fn = n_gt - m.tp;
  return m;
}

BinaryMap thin(const BinaryMap& map) {
  BinaryMap img = map;
  const int W = img.width(), H = img.height();
  // Out-of-frame neighbours replicate the nearest pixel so boundaries that
  // leave the image are not eroded as line ends.
  auto at = [&](int x, int y) -> int { return img(std::clamp(x, 0, W - 1), std::clamp(y, 0, H - 1)) ? 1 : 0; };
  std::vector<std::size_t> remove;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (!img(x, y)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {at(x, y - 1), at(x + 1, y - 1), at(x + 1, y),     at(x + 1, y + 1),
                            at(x, y + 1), at(x - 1, y + 1), at(x - 1, y),     at(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (!p[i] && p[(i + 1) % 8]) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0 && ((p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6]))) continue;
          if (pass == 1 && ((p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6]))) continue;
          remove.push_back(img.index(x, y));
        }
      }
      for (auto k : remove) img.data()[k] = 0;
      if (!remove.empty()) changed = true;
    }
  }
  // Zhang-Suen leaves two-pixel-thick diagonal steps. Drop the inner corner
  // pixel of each step when nothing lies on the opposite side; its two
  // neighbours stay 8-connected.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!img(x, y)) continue;
      const int p[8] = {at(x, y - 1), at(x + 1, y - 1), at(x + 1, y),     at(x + 1, y + 1),
                        at(x, y + 1), at(x - 1, y + 1), at(x - 1, y),     at(x - 1, y - 1)};
      for (int r = 0; r < 4; ++r) {
        if (p[2 * r] && p[(2 * r + 2) % 8] && !p[(2 * r + 4) % 8] && !p[(2 * r + 5) % 8] && !p[(2 * r + 6) % 8]) {
          img(x, y) = 0;
          break;
        }
      }
    }
  }
  return img;
}

BinaryMap threshold_map(const Map& soft, double t, bool thin_result) {
  BinaryMap out(soft.height(), soft.width(), 1);
  for (std::size_t k = 0; k < soft.pixels(); ++k) out.data()[k] = soft.data()[k] >= t ? 1 : 0;
  return thin_result ? thin(out) : out;
}

BinaryMap boundary_from_distance(const Map& d_gt, double radius) {
  BinaryMap out(d_gt.height(), d_gt.width(), 1);
  for (std::size_t k = 0; k < d_gt.pixels(); ++k) out.data()[k] = d_gt.data()[k] <= radius ? 1 : 0;
  return thin(out);
}

OdsResult ods_from(std::size_t samples, const std::vector<double>& thresholds,
                   const std::function<BinaryMap(std::size_t, double)>& predict, const std::vector<BinaryMap>& gts,
                   double radius) {
  require(samples >= 1 && gts.size() == samples, "ods: need one ground truth per sample");
  OdsResult res;
  res.curve.resize(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    res.curve[i].threshold = thresholds[i];
    for (std::size_t s = 0; s < samples; ++s)
      res.curve[i].counts += match_boundaries(predict(s, thresholds[i]), gts[s], radius);
  }
  double best = -1.0;
  for (const auto& pt : res.curve) {
    const double f = pt.counts.fscore();
    if (f > best) {
      best = f;
      res.threshold = pt.threshold;
      res.f = f;
      res.precision = pt.counts.precision();
      res.recall = pt.counts.recall();
    }
  }
  return res;
}

OdsResult ods_fscore(const std::vector<Map>& preds, const std::vector<BinaryMap>& gts, const EvalConfig& cfg) {
  cfg.validate();
  return ods_from(
      preds.size(), cfg.thresholds, [&](std::size_t s, double t) { return threshold_map(preds[s], t, cfg.thin); },
      gts, cfg.tolerance);
}

std::vector<double> repeatability(const std::vector<std::vector<Map>>& levels, double t0, const EvalConfig& cfg) {
  require(!levels.empty(), "repeatability: no levels");
  std::vector<BinaryMap> pseudo;
  for (const auto& m : levels[0]) pseudo.push_back(threshold_map(m, t0, cfg.thin));
  std::vector<double> out;
  for (const auto& level : levels) {
    require(level.size() == pseudo.size(), "repeatability: levels differ in sample count");
    out.push_back(ods_fscore(level, pseudo, cfg).f);
  }
  return out;
}

namespace {

Map gaussian_blur(const Map& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (double& v : k) v /= s;
  const int W = in.width(), H = in.height();
  Map tmp(H, W, 1), out(H, W, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a = 0.0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * in(std::clamp(x + i, 0, W - 1), y);
      tmp(x, y) = a;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a = 0.0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * tmp(x, std::clamp(y + i, 0, H - 1));
      out(x, y) = a;
    }
  return out;
}

double bilinear(const Map& m, double x, double y) {
  x = std::clamp(x, 0.0, m.width() - 1.0);
  y = std::clamp(y, 0.0, m.height() - 1.0);
  const int x0 = std::min(static_cast<int>(x), m.width() - 1), y0 = std::min(static_cast<int>(y), m.height() - 1);
  const int x1 = std::min(x0 + 1, m.width() - 1), y1 = std::min(y0 + 1, m.height() - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * m(x0, y0) + fx * (1 - fy) * m(x1, y0) + (1 - fx) * fy * m(x0, y1) +
         fx * fy * m(x1, y1);
}

}  // namespace

CannyStages canny_stages(const ImageF& image, double sigma) {
  const Map g = gaussian_blur(to_gray(image), sigma);
  const int W = g.width(), H = g.height();
  auto px = [&](int x, int y) { return g(std::clamp(x, 0, W - 1), std::clamp(y, 0, H - 1)); };
  Map gx(H, W, 1), gy(H, W, 1);
  CannyStages st{Map(H, W, 1), BinaryMap(H, W, 1)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      gx(x, y) = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                 (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      gy(x, y) = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                 (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      st.magnitude(x, y) = 0.25 * std::hypot(gx(x, y), gy(x, y));
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = st.magnitude(x, y);
      if (m <= 0.0) continue;
      const double dx = gx(x, y) / (4.0 * m), dy = gy(x, y) / (4.0 * m);
      const double ahead = bilinear(st.magnitude, x + dx, y + dy);
      const double behind = bilinear(st.magnitude, x - dx, y - dy);
      // Asymmetric tie rule keeps one pixel of a symmetric plateau.
      st.nms(x, y) = m >= ahead && m > behind ? 1 : 0;
    }
  }
  return st;
}

BinaryMap canny_hysteresis(const CannyStages& st, double low, double high) {
  require(low < high, "canny: low threshold must be below high");
  const int W = st.nms.width(), H = st.nms.height();
  BinaryMap out(H, W, 1);
  std::queue<std::pair<int, int>> q;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (st.nms(x, y) && st.magnitude(x, y) >= high) {
        out(x, y) = 1;
        q.emplace(x, y);
      }
  while (!q.empty()) {
    const auto [x, y] = q.front();
    q.pop();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (!out.contains(nx, ny) || out(nx, ny) || !st.nms(nx, ny) || st.magnitude(nx, ny) < low) continue;
        out(nx, ny) = 1;
        q.emplace(nx, ny);
      }
  }
  return out;
}

BinaryMap canny(const ImageF& image, double low, double high, double sigma) {
  require(low < high, "canny: low threshold must be below high");
  return canny_hysteresis(canny_stages(image, sigma), low, high);
}

OdsResult canny_ods(const std::vector<ImageF>& images, const std::vector<BinaryMap>& gts, double sigma,
                    const EvalConfig& cfg) {
  cfg.validate();
  std::vector<CannyStages> stages;
  for (const auto& img : images) stages.push_back(canny_stages(img, sigma));
  return ods_from(
      images.size(), cfg.thresholds,
      [&](std::size_t s, double t) {
        BinaryMap m = canny_hysteresis(stages[s], kCannyLowRatio * t, t);
        return cfg.thin ? thin(m) : m;
      },
      gts,
      cfg.tolerance);
}

OdsResult canny_best(const std::vector<ImageF>& images, const std::vector<BinaryMap>& gts,
                     const std::vector<double>& sigmas, const EvalConfig& cfg, double* best_sigma) {
  require(!sigmas.empty(), "canny_best: no sigmas");
  OdsResult best;
  best.f = -1.0;
  for (double s : sigmas) {
    OdsResult r = canny_ods(images, gts, s, cfg);
    if (r.f > best.f) {
      best = std::move(r);
      if (best_sigma) *best_sigma = s;
    }
  }
  return best;
}

void write_curve_csv(const std::string& path, const OdsResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "threshold,tp,fp,fn,precision,recall,f\n" << std::setprecision(6);
  for (const auto& pt : r.curve)
    out << pt.threshold << ',' << pt.counts.tp << ',' << pt.counts.fp << ',' << pt.counts.fn << ','
        << pt.counts.precision() << ',' << pt.counts.recall() << ',' << pt.counts.fscore() << '\n';
}

nlohmann::json to_json(const OdsResult& r) {
  return {{"ods_f", r.f}, {"threshold", r.threshold}, {"precision", r.precision}, {"recall", r.recall}};
}

void write_pr_svg(const std::string& path, const std::vector<std::pair<std::string, OdsResult>>& curves) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  const int size = 400, pad = 40;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  auto sx = [&](double r) { return pad + r * (size - 2 * pad); };
  auto sy = [&](double p) { return size - pad - p * (size - 2 * pad); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size - 2 * pad << "\" height=\""
      << size - 2 * pad << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << size / 2 << "\" y=\"" << size - 10 << "\" text-anchor=\"middle\">recall</text>\n";
  out << "<text x=\"12\" y=\"" << size / 2 << "\" transform=\"rotate(-90 12 " << size / 2
      << ")\" text-anchor=\"middle\">precision</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* col = colors[i % 5];
    out << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
    for (const auto& pt : curves[i].second.curve)
      out << sx(pt.counts.recall()) << ',' << sy(pt.counts.precision()) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << pad + 8 << "\" y=\"" << pad + 16 * (i + 1) << "\" fill=\"" << col << "\">"
        << curves[i].first << " F=" << std::setprecision(3) << curves[i].second.f << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ba
