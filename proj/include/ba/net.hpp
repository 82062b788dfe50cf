#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ba/data.hpp"
#include "ba/field_io.hpp"
#include "ba/objective.hpp"
#include "ba/tape.hpp"
#include "ba/tensor_file.hpp"
#include "json.hpp"

namespace ba {

struct ModelConfig {
  int hidden = 64;        // junction embedding width
  int window_dim = 8;     // windowing embedding width
  int channels = 3;       // image channels seen by the network
  int mixer_blocks = 4;
  int mixer_hidden = 128;
  int heads = 4;
  int radius = 5;         // 11 x 11 attention neighbourhood
  int attn_hidden = 128;
  int blocks = 2;
  int iterations_per_block = 4;
  int rounds = 2;         // cross-attention rounds per iteration

  int iterations() const { return blocks * iterations_per_block; }
  int query_width() const { return hidden + window_dim; }
  int key_width() const { return hidden + 2 * channels; }
  int min_input() const { return 2 * radius + 1; }
  void validate() const;
};

ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& cfg);

/// Named (rows x cols) float tensors in a fixed order.
struct ModelWeights {
  ModelConfig config;
  std::vector<io::NamedTensor> params;

  const io::NamedTensor& at(const std::string& name) const;
};

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed);
std::size_t param_count(const ModelWeights& w);
/// Counts per component (mixer, block1, block2, decoder, pi0).
std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelWeights& w);

void save_weights(const std::string& path, const ModelWeights& w, const nlohmann::json& meta = {});
ModelWeights load_weights(const std::string& path);
ModelWeights weights_from_file(const io::TensorFile& file);

/// Weights bound to a tape as leaves, in `ModelWeights::params` order.
template <class T>
struct NetParams {
  ModelConfig config;
  std::vector<nn::Var<T>> vars;
  std::vector<std::string> names;

  const nn::Var<T>& operator[](const std::string& name) const;
};

template <class T>
NetParams<T> bind_params(nn::Tape<T>& tape, const ModelWeights& w);

/// Flattened parameter gradients (zeros where none reached).
template <class T>
std::vector<T> param_grads(const NetParams<T>& p);

struct NetOptions {
  LossConfig loss{};
  bool keep_hidden = false;     // keep gamma of every iteration
  bool keep_attention = false;  // keep the last round's attention weights per iteration
  /// Diagnostic: restrict attention to the centre offset.
  bool center_only_attention = false;
};

template <class T>
struct NetOutput {
  int height = 0, width = 0;
  std::vector<nn::Mat<T>> raw;        // per iteration, pixels x kRawParams
  std::vector<nn::Mat<T>> hidden;     // per iteration, pixels x hidden (if kept)
  std::vector<nn::Mat<T>> attention;  // per iteration, pixels x heads*(2r+1)^2 (if kept)
  nn::Mat<T> gamma0;                  // mixer output
  LossTerms previous, final;          // loss terms at iterations T-1 and T (with targets)
  double loss = 0.0;                  // total loss of the two iterations
};

/// Full forward pass. With `targets` the losses of the last two iterations
/// are evaluated and, on a recording tape, injected into the backward pass
/// scaled by `scale`; tape.backward() then leaves parameter gradients.
template <class T>
NetOutput<T> model_forward(nn::Tape<T>& tape, const NetParams<T>& params, const ImageF& image,
                           const NetOptions& opt, const LossBuffers<T>* targets = nullptr, T scale = T(1));

/// Mixer alone (H x W x hidden as pixels x hidden).
template <class T>
nn::Var<T> mixer_forward(nn::Tape<T>& tape, const NetParams<T>& params, const ModelConfig& cfg,
                         const nn::Mat<T>& image, int height, int width);

/// Inference in float without a tape.
NetOutput<float> run_model(const ModelWeights& w, const ImageF& image, const NetOptions& opt = {});

RawField to_raw_field(const nn::Mat<float>& raw, int height, int width);

struct TrainConfig {
  int stage = 1;
  int batch = 16;
  int steps = 2000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 250;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

/// Training sample by stream index.
using SampleSource = std::function<Sample(std::size_t index)>;

/// Training stream of freshly generated curriculum samples; a validation
/// index of the seed is replaced by the next training index.
SampleSource generated_source(int stage, std::uint64_t seed);

struct TrainState {
  ModelWeights weights;
  std::vector<float> m, v;  // Adam moments, flattened
  long step = 0;            // completed steps
};

TrainState initial_state(const ModelConfig& cfg, std::uint64_t seed);
void save_checkpoint(const std::string& path, const TrainState& s, const TrainConfig& tc, const LossConfig& lc);
TrainState load_checkpoint(const std::string& path);

struct StepReport {
  long step = 0;
  LossTerms final;  // batch mean of the last iteration's terms
  double loss = 0;  // batch mean of the total loss
};

/// Runs Adam from `state.step` to `tc.steps`, writing `loss.csv` and
/// `checkpoint.bin` under `out_dir`. A non-finite loss saves the last good
/// state and throws.
void train(TrainState& state, const TrainConfig& tc, const LossConfig& lc, const SampleSource& source,
           const std::string& out_dir, const std::function<void(const StepReport&)>& progress = {});

}  // namespace ba
