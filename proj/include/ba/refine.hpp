#pragma once

#include <functional>
#include <vector>

#include "ba/field_io.hpp"
#include "json.hpp"

namespace ba {

struct RefineConfig {
  int n_orientations = 16;
  int steps = 300;
  double step_size = 0.03;
  double lambda_c = 0.1;
  double tau = 10.0;
  int max_halvings = 5;
  /// Raw logits are kept above this floor so zero weights stay recoverable.
  double logit_floor = -10.0;
  /// Consistency uses the variance of boundary strength instead of distance.
  bool boundary_variance = false;

  void validate() const;
};

RefineConfig refine_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RefineConfig& cfg);

/// Per patch: the best of n_orientations centered edges and the uniform-far
/// junction under the windowed reconstruction error; ties go to uniform.
/// Windows start at the largest box.
JunctionField init_field(const ImageF& image, const RefineConfig& cfg);

/// Windowed reconstruction error of one patch using hard supports.
double patch_reconstruction_error(const ImageF& image, int kx, int ky, const Junction& g, const WindowWeights& p);

/// Smoothed energy: reconstruction + lambda_c * sum(nu_f + nu_d).
double refine_energy(const ImageF& image, const RawField& raw, const RefineConfig& cfg,
                     std::vector<double>* grad = nullptr);

struct RefineResult {
  RawField raw;
  std::vector<double> energy;  // initial value, then one entry per accepted step
  bool stalled = false;        // line search gave up before the step budget ran out
};

using RefineObserver = std::function<void(int step, const RawField& raw)>;

RefineResult refine_field(const ImageF& image, const JunctionField& init, const RefineConfig& cfg,
                          const RefineObserver& observer = {});

}  // namespace ba
