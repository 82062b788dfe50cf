#pragma once

#include <vector>

#include "ba/core.hpp"

namespace ba {

// Differentiable dense gather/slice over a field of decoded junction
// parameters. Hard wedge indicators are replaced by a softmax over
// per-wedge angular margins
//
//   m_j = cos(phi - c_j) - cos(pi * omega_j),
//
// where c_j is the wedge's central angle, so membership is smooth in every
// parameter and sums to one. The boundary distance uses a smooth ray
// distance sqrt(perp^2 + behind^2 + eps^2) combined across rays by a soft
// minimum of temperature kappa.
//
// Per-pixel parameter layout (kFieldParams values per pixel):
//   ux, uy, theta, omega_1..3 (on the simplex), p_1..3 (on the simplex)

inline constexpr int kFieldParams = 9;

struct SmoothingConfig {
  double tau = 10.0;           // angular sharpness of the wedge soft-assignment
  double ray_eps = 0.05;        // pixels
  double softmin_kappa = 0.04;  // pixels; kappa*log(3) < ray_eps keeps distances positive
};

struct FieldKernelOptions {
  SmoothingConfig smooth{};
  bool distances = true;            // compute distance mean / variance / patch distance loss
  bool boundary_variance = false;   // variance slot holds nu_b instead of nu_d
  bool reconstruction = false;      // per-patch windowed reconstruction energy
  double eta = kDefaultEta;
};

/// Optional supervision for the patch-wise losses. All pointers are per-pixel.
template <class T>
struct PatchSupervision {
  const T* alpha = nullptr;  // N
  const T* chi = nullptr;    // N (patch importance of patch k)
  const T* f_gt = nullptr;   // N x C
  const T* d_gt = nullptr;   // N
};

template <class T>
struct FieldForward {
  int height = 0, width = 0, channels = 0;
  std::vector<T> fbar;    // N x C
  std::vector<T> dbar;    // N
  std::vector<T> nu_f;    // N
  std::vector<T> nu_v;    // N, distance (or boundary) variance
  T patch_f = 0, patch_d = 0, recon = 0;

  // Saved for the backward pass.
  std::vector<T> wedge;   // K x 3 x C
  std::vector<T> den;     // K x 3
  std::vector<T> weight;  // N
  std::vector<T> vmean;   // N, mean of the variance-slot quantity
};

template <class T>
struct FieldUpstream {
  const T* fbar = nullptr;  // N x C, may be null
  const T* dbar = nullptr;
  const T* nu_f = nullptr;
  const T* nu_v = nullptr;
  T patch_f = 0, patch_d = 0, recon = 0;
};

template <class T>
void field_forward(int height, int width, int channels, const T* params, const T* image,
                   const FieldKernelOptions& opt, const PatchSupervision<T>* sup, FieldForward<T>& out);

/// Accumulates d(loss)/d(params) into grad_params (N x kFieldParams).
template <class T>
void field_backward(const T* params, const T* image, const FieldKernelOptions& opt,
                    const PatchSupervision<T>* sup, const FieldForward<T>& fwd, const FieldUpstream<T>& up,
                    T* grad_params);

extern template void field_forward<float>(int, int, int, const float*, const float*, const FieldKernelOptions&,
                                          const PatchSupervision<float>*, FieldForward<float>&);
extern template void field_forward<double>(int, int, int, const double*, const double*, const FieldKernelOptions&,
                                           const PatchSupervision<double>*, FieldForward<double>&);
extern template void field_backward<float>(const float*, const float*, const FieldKernelOptions&,
                                           const PatchSupervision<float>*, const FieldForward<float>&,
                                           const FieldUpstream<float>&, float*);
extern template void field_backward<double>(const double*, const double*, const FieldKernelOptions&,
                                            const PatchSupervision<double>*, const FieldForward<double>&,
                                            const FieldUpstream<double>&, double*);

namespace reference {

/// Serial pair-by-pair evaluation of the same quantities, for testing.
template <class T>
void field_forward(int height, int width, int channels, const T* params, const T* image,
                   const FieldKernelOptions& opt, const PatchSupervision<T>* sup, FieldForward<T>& out);
template <class T>
void field_backward(const T* params, const T* image, const FieldKernelOptions& opt,
                    const PatchSupervision<T>* sup, const FieldForward<T>& fwd, const FieldUpstream<T>& up,
                    T* grad_params);

extern template void field_forward<double>(int, int, int, const double*, const double*, const FieldKernelOptions&,
                                           const PatchSupervision<double>*, FieldForward<double>&);
extern template void field_backward<double>(const double*, const double*, const FieldKernelOptions&,
                                            const PatchSupervision<double>*, const FieldForward<double>&,
                                            const FieldUpstream<double>&, double*);

}  // namespace reference

}  // namespace ba
