#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ba/net.hpp"

namespace ba {

void TrainConfig::validate() const {
  require(stage >= 1 && stage <= 3, "train config: stage must be 1, 2 or 3");
  require(batch >= 1 && steps >= 0, "train config: batch must be positive and steps nonnegative");
  require(lr >= 0.0, "train config: learning rate must be nonnegative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train config: moments must lie in [0, 1)");
  require(adam_eps > 0.0, "train config: adam_eps must be positive");
  require(checkpoint_every >= 1, "train config: checkpoint_every must be positive");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "train config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "stage") c.stage = value.get<int>();
    else if (key == "batch") c.batch = value.get<int>();
    else if (key == "steps") c.steps = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "adam_eps") c.adam_eps = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
    else throw ContractError("train config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage", c.stage}, {"batch", c.batch},   {"steps", c.steps},         {"lr", c.lr},
          {"beta1", c.beta1}, {"beta2", c.beta2},   {"adam_eps", c.adam_eps}, {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

SampleSource generated_source(int stage, std::uint64_t seed) {
  const StageOptions opt = stage_defaults(stage);
  return [stage, seed, opt](std::size_t index) {
    std::size_t k = index;
    while (is_validation(seed, k)) ++k;
    return gen_sample(stage, sample_seed(seed, k), opt);
  };
}

TrainState initial_state(const ModelConfig& cfg, std::uint64_t seed) {
  TrainState s;
  s.weights = init_weights(cfg, seed);
  s.m.assign(param_count(s.weights), 0.0f);
  s.v.assign(s.m.size(), 0.0f);
  return s;
}

namespace {

void flatten_into(const TrainState& s, const std::string& prefix, const std::vector<float>& flat,
                  io::TensorFile& f) {
  std::size_t off = 0;
  for (const auto& p : s.weights.params) {
    io::NamedTensor t{prefix + p.name, p.shape,
                      std::vector<float>(flat.begin() + static_cast<long>(off),
                                         flat.begin() + static_cast<long>(off + p.data.size()))};
    off += p.data.size();
    f.tensors.push_back(std::move(t));
  }
}

// Drops trace rows logged after the checkpoint a run resumes from.
void truncate_trace(const std::string& path, long step) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (!keep.empty() && !line.empty() && std::stol(line.substr(0, line.find(','))) > step) break;
    keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& s, const TrainConfig& tc, const LossConfig& lc) {
  io::TensorFile f;
  f.meta = {{"model", to_json(s.weights.config)}, {"step", s.step}, {"train", to_json(tc)}, {"loss", to_json(lc)}};
  f.tensors = s.weights.params;
  flatten_into(s, "adam.m.", s.m, f);
  flatten_into(s, "adam.v.", s.v, f);
  const std::string tmp = path + ".tmp";
  io::write_tensor_file(tmp, f);
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::string& path) {
  const io::TensorFile f = io::read_tensor_file(path);
  TrainState s;
  s.weights = weights_from_file(f);
  require(f.meta.contains("step"), "checkpoint: missing step");
  s.step = f.meta.at("step").get<long>();
  for (const auto& p : s.weights.params) {
    const auto& m = f.at("adam.m." + p.name).data;
    const auto& v = f.at("adam.v." + p.name).data;
    if (m.size() != p.data.size() || v.size() != p.data.size())
      throw std::runtime_error("checkpoint: optimizer state does not match '" + p.name + "'");
    s.m.insert(s.m.end(), m.begin(), m.end());
    s.v.insert(s.v.end(), v.begin(), v.end());
  }
  return s;
}

void train(TrainState& state, const TrainConfig& tc, const LossConfig& lc, const SampleSource& source,
           const std::string& out_dir, const std::function<void(const StepReport&)>& progress) {
  tc.validate();
  lc.validate();
  std::filesystem::create_directories(out_dir);
  const std::string ckpt = out_dir + "/checkpoint.bin";
  const std::string csv_path = out_dir + "/loss.csv";
  if (state.step > 0) truncate_trace(csv_path, state.step);
  LossCsv csv(csv_path, state.step > 0 && std::filesystem::exists(csv_path));
  const std::size_t P = param_count(state.weights);
  require(state.m.size() == P && state.v.size() == P, "train: optimizer state does not match the weights");

  NetOptions opt;
  opt.loss = lc;
  const int B = tc.batch;
  std::vector<std::vector<float>> grads(static_cast<std::size_t>(B));
  std::vector<LossTerms> finals(static_cast<std::size_t>(B));
  std::vector<double> losses(static_cast<std::size_t>(B));

  while (state.step < tc.steps) {
    const long step = state.step + 1;
    // Samples of a step are fixed by seed and step, so resumed runs see the
    // same stream.
    std::mt19937_64 rng(splitmix64(tc.seed ^ splitmix64(static_cast<std::uint64_t>(step))));
    std::vector<std::size_t> idx(static_cast<std::size_t>(B));
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % 1000000007ULL);

#pragma omp parallel for schedule(dynamic, 1)
    for (int b = 0; b < B; ++b) {
      const Sample s = source(idx[static_cast<std::size_t>(b)]);
      const LossBuffers<float> buf = make_loss_buffers<float>(Supervision{s.clean, s.distance}, lc);
      nn::Tape<float> tape(true);
      const NetParams<float> params = bind_params(tape, state.weights);
      const NetOutput<float> out = model_forward(tape, params, s.input, opt, &buf, 1.0f / static_cast<float>(B));
      tape.backward();
      grads[static_cast<std::size_t>(b)] = param_grads(params);
      finals[static_cast<std::size_t>(b)] = out.final;
      losses[static_cast<std::size_t>(b)] = out.loss;
    }

    StepReport rep;
    rep.step = step;
    for (int b = 0; b < B; ++b) {
      const LossTerms& t = finals[static_cast<std::size_t>(b)];
      rep.loss += losses[static_cast<std::size_t>(b)] / B;
      rep.final.f += t.f / B;
      rep.final.d += t.d / B;
      rep.final.nu_f += t.nu_f / B;
      rep.final.nu_d += t.nu_d / B;
      rep.final.patch_f += t.patch_f / B;
      rep.final.patch_d += t.patch_d / B;
    }
    if (!std::isfinite(rep.loss)) {
      save_checkpoint(ckpt, state, tc, lc);
      throw std::runtime_error("training diverged at step " + std::to_string(step) +
                               "; last good state saved to " + ckpt);
    }

    // Reduction in batch order keeps the update independent of threading.
    const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
    std::size_t off = 0;
    for (auto& p : state.weights.params) {
      for (std::size_t i = 0; i < p.data.size(); ++i, ++off) {
        float g = 0.0f;
        for (int b = 0; b < B; ++b) g += grads[static_cast<std::size_t>(b)][off];
        float& m = state.m[off];
        float& v = state.v[off];
        m = static_cast<float>(tc.beta1 * m + (1.0 - tc.beta1) * g);
        v = static_cast<float>(tc.beta2 * v + (1.0 - tc.beta2) * g * g);
        const double mh = m / c1, vh = v / c2;
        p.data[i] -= static_cast<float>(tc.lr * mh / (std::sqrt(vh) + tc.adam_eps));
      }
    }
    state.step = step;
    csv.write(step, rep.final, rep.loss);
    if (progress) progress(rep);
    if (step % tc.checkpoint_every == 0 || step == tc.steps) save_checkpoint(ckpt, state, tc, lc);
  }
}

}  // namespace ba
