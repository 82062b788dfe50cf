#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ba/field_kernel.hpp"
#include "ba/fieldops.hpp"
#include "json.hpp"

namespace ba {

struct LossConfig {
  double beta = 0.1;
  double delta = 1.0;
  double c_floor = 0.3;
  double delta_prime = 1.0;
  double w_f = 1.0;
  double w_d = 1.0;
  double w_nu_f = 1.0;
  double w_nu_d = 1.0;
  double w_patch_f = 1.0;
  double w_patch_d = 1.0;
  double final_iter_weight = 3.0;
  /// Second consistency term uses the variance of boundary strength instead
  /// of the variance of distance.
  bool boundary_variance = false;
  SmoothingConfig smooth{};

  void validate() const;
  FieldKernelOptions kernel_options() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
LossConfig loss_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossConfig& cfg);

struct Supervision {
  ImageF f_gt;
  Map d_gt;
};

/// alpha = exp(-beta (d + delta)) + C per pixel.
Map pixel_importance(const Map& d_gt, const LossConfig& cfg);

/// Inverse of sum(d + delta') over the clipped 17x17 support of patch k.
double patch_importance(const Map& d_gt, std::size_t k, const LossConfig& cfg);
Map patch_importance_map(const Map& d_gt, const LossConfig& cfg);

/// Unweighted loss components of one decoded field.
struct LossTerms {
  double f = 0.0;
  double d = 0.0;
  double nu_f = 0.0;
  double nu_d = 0.0;  // holds the boundary-strength variance term in that mode
  double patch_f = 0.0;
  double patch_d = 0.0;

  double weighted(const LossConfig& cfg) const;
};

/// Global supervision and consistency terms from exact maps.
LossTerms loss_global(const GlobalMaps& maps, const Supervision& sup, const LossConfig& cfg);

struct PatchLosses {
  double f = 0.0;
  double d = 0.0;
};

/// Patch-wise terms from each patch's own rendering (hard supports, exact distances).
PatchLosses loss_patchwise(const JunctionField& field, const WedgeFeatures& wedges, const Supervision& sup,
                           const LossConfig& cfg);

/// Global plus patch-wise terms of one field, evaluated exactly.
LossTerms exact_terms(const ImageF& image, const JunctionField& field, const Supervision& sup,
                      const LossConfig& cfg);

/// Final-iteration terms weighted by final_iter_weight, previous by one.
double total_loss(const LossTerms& previous, const LossTerms& final, const LossConfig& cfg);

// Raw per-pixel field parameterization shared by the network decoder, the
// refiner and the field file format:
//   ux, uy, sin(theta), cos(theta), omega logits x3, window logits x3

inline constexpr int kRawParams = 10;
inline constexpr double kDecodeEps = 1e-8;

template <class T>
void decode_params(const T* raw, T* params, std::size_t count);

/// Chains d(loss)/d(params) back to the raw parameterization (accumulates).
template <class T>
void decode_backward(const T* raw, const T* grad_params, T* grad_raw, std::size_t count);

/// Decoded junction and window of one raw parameter block.
void decode_pixel(const double* raw, Junction& g, WindowWeights& p);

/// Inverse of decode_pixel; zero weights become -inf logits.
void encode_pixel(const Junction& g, const WindowWeights& p, double* raw);

/// Supervision converted once into the kernel's flat per-pixel arrays.
template <class T>
struct LossBuffers {
  int height = 0, width = 0, channels = 0;
  std::vector<T> alpha, chi, f_gt, d_gt;

  PatchSupervision<T> view() const { return {alpha.data(), chi.data(), f_gt.data(), d_gt.data()}; }
};

template <class T>
LossBuffers<T> make_loss_buffers(const Supervision& sup, const LossConfig& cfg);

/// Upstream gradients of the weighted loss w.r.t. the kernel outputs.
template <class T>
struct LossUpstream {
  std::vector<T> fbar, dbar, nu_f, nu_v;
  T patch_f = 0, patch_d = 0;

  FieldUpstream<T> view() const {
    return {fbar.data(), dbar.data(), nu_f.data(), nu_v.data(), patch_f, patch_d, T(0)};
  }
};

/// Loss terms of a smoothed kernel evaluation. When `up` is given it receives
/// d(scale * weighted loss)/d(outputs).
template <class T>
LossTerms surrogate_terms(const FieldForward<T>& fwd, const LossBuffers<T>& buf, const LossConfig& cfg, T scale,
                          LossUpstream<T>* up);

/// Smoothed loss of a raw field with its gradient w.r.t. the raw parameters.
template <class T>
LossTerms surrogate_loss(int height, int width, int channels, const T* raw, const T* image,
                         const LossBuffers<T>& buf, const LossConfig& cfg, T scale, std::vector<T>* grad_raw);

/// CSV rows of per-step loss terms.
class LossCsv {
public:
  explicit LossCsv(const std::string& path, bool append = false);
  void write(long step, const LossTerms& terms, double total);

private:
  std::ofstream out_;
};

}  // namespace ba
