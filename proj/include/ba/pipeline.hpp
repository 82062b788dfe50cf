#pragma once

#include <cstdint>
#include <vector>

#include "ba/data.hpp"
#include "ba/eval.hpp"
#include "ba/net.hpp"
#include "ba/refine.hpp"

namespace ba {

/// A field with the global maps it induces on its input image.
struct Inference {
  RawField field;
  GlobalMaps maps;
};

Inference infer_variational(const ImageF& image, const RefineConfig& cfg, const RefineObserver& observer = {});

/// Final-iteration field of the network. `iterations`, when given, receives
/// the field of every iteration.
Inference infer_net(const ModelWeights& w, const ImageF& image, std::vector<RawField>* iterations = nullptr);

/// The first `count` validation samples of a generated stage stream.
std::vector<Sample> validation_samples(int stage, std::uint64_t seed, std::size_t count);

struct HeldOutReport {
  OdsResult model;
  OdsResult canny;
  double canny_sigma = 0.0;
};

/// ODS of the network's boundary maps against the best-scale Canny on the
/// same samples.
HeldOutReport held_out_comparison(const ModelWeights& w, const std::vector<Sample>& samples,
                                  const EvalConfig& cfg, const std::vector<double>& canny_sigmas = {1, 1.5, 2, 3});

}  // namespace ba
