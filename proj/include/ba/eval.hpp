#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ba/image.hpp"
#include "json.hpp"

namespace ba {

using BinaryMap = Image<std::uint8_t>;

struct EvalConfig {
  double tolerance = 2.0;           // matching radius in pixels
  std::vector<double> thresholds;   // strictly increasing, in (0, 1)
  bool thin = true;                 // one-pixel thinning after thresholding

  EvalConfig();
  void validate() const;
};

/// Evenly spaced thresholds i / (n + 1), i = 1..n.
std::vector<double> uniform_thresholds(int n);

EvalConfig eval_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalConfig& cfg);

struct MatchCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double fscore() const;
};

/// One-to-one matching within `radius`: greedy in increasing distance order
/// (ties by pixel index), then extended by augmenting paths to a maximum
/// matching.
MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, double radius);

/// Zhang-Suen thinning to one-pixel-wide curves.
BinaryMap thin(const BinaryMap& map);

BinaryMap threshold_map(const Map& soft, double t, bool thin_result = true);

/// Ground-truth boundary pixels: distance at most `radius`, thinned.
BinaryMap boundary_from_distance(const Map& d_gt, double radius = 0.5);

struct OdsPoint {
  double threshold = 0.0;
  MatchCounts counts;
};

struct OdsResult {
  double threshold = 0.0;
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<OdsPoint> curve;
};

/// Dataset-level counts per threshold from a family of binary predictions.
OdsResult ods_from(std::size_t samples, const std::vector<double>& thresholds,
                   const std::function<BinaryMap(std::size_t sample, double t)>& predict,
                   const std::vector<BinaryMap>& gts, double radius);

/// ODS over soft maps thresholded on the configured grid.
OdsResult ods_fscore(const std::vector<Map>& preds, const std::vector<BinaryMap>& gts, const EvalConfig& cfg);

/// Level-0 predictions binarized at `t0` serve as ground truth for every
/// level; returns the ODS F per level (level 0 included).
std::vector<double> repeatability(const std::vector<std::vector<Map>>& levels, double t0, const EvalConfig& cfg);

struct CannyStages {
  Map magnitude;  // Sobel magnitude of the smoothed image, divided by 4
  BinaryMap nms;  // local maxima along the gradient direction
};

CannyStages canny_stages(const ImageF& image, double sigma);

/// Hysteresis on precomputed stages; thresholds are in magnitude units.
BinaryMap canny_hysteresis(const CannyStages& st, double low, double high);

/// Full pipeline; color input is averaged to gray.
BinaryMap canny(const ImageF& image, double low, double high, double sigma);

inline constexpr double kCannyLowRatio = 0.4;

/// ODS of Canny with high threshold on the configured grid and low = 0.4 high.
OdsResult canny_ods(const std::vector<ImageF>& images, const std::vector<BinaryMap>& gts, double sigma,
                    const EvalConfig& cfg);

/// Best Canny ODS over several smoothing scales; reports the winning sigma.
OdsResult canny_best(const std::vector<ImageF>& images, const std::vector<BinaryMap>& gts,
                     const std::vector<double>& sigmas, const EvalConfig& cfg, double* best_sigma = nullptr);

void write_curve_csv(const std::string& path, const OdsResult& r);
nlohmann::json to_json(const OdsResult& r);
/// Precision-recall plot of one or more named curves.
void write_pr_svg(const std::string& path, const std::vector<std::pair<std::string, OdsResult>>& curves);

}  // namespace ba
