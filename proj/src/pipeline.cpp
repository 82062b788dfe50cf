#include "ba/pipeline.hpp"

namespace ba {

Inference infer_variational(const ImageF& image, const RefineConfig& cfg, const RefineObserver& observer) {
  Inference r;
  r.field = refine_field(image, init_field(image, cfg), cfg, observer).raw;
  r.maps = compute_global_maps(image, decode_field(r.field));
  return r;
}

Inference infer_net(const ModelWeights& w, const ImageF& image, std::vector<RawField>* iterations) {
  const ImageF rgb = to_rgb(image);
  const NetOutput<float> out = run_model(w, rgb);
  if (iterations)
    for (const auto& raw : out.raw) iterations->push_back(to_raw_field(raw, out.height, out.width));
  Inference r;
  r.field = to_raw_field(out.raw.back(), out.height, out.width);
  r.maps = compute_global_maps(rgb, decode_field(r.field));
  return r;
}

std::vector<Sample> validation_samples(int stage, std::uint64_t seed, std::size_t count) {
  const StageOptions opt = stage_defaults(stage);
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; idx.size() < count; ++k)
    if (is_validation(seed, k)) idx.push_back(k);
  std::vector<Sample> out(count);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(count); ++i) out[i] = gen_sample(stage, sample_seed(seed, idx[i]), opt);
  return out;
}

HeldOutReport held_out_comparison(const ModelWeights& w, const std::vector<Sample>& samples, const EvalConfig& cfg,
                                  const std::vector<double>& canny_sigmas) {
  std::vector<Map> preds(samples.size());
  std::vector<BinaryMap> gts(samples.size());
  std::vector<ImageF> images(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds[i] = infer_net(w, samples[i].input).maps.boundary;
    gts[i] = boundary_from_distance(samples[i].distance);
    images[i] = samples[i].input;
  }
  HeldOutReport r;
  r.model = ods_fscore(preds, gts, cfg);
  r.canny = canny_best(images, gts, canny_sigmas, cfg, &r.canny_sigma);
  return r;
}

}  // namespace ba
