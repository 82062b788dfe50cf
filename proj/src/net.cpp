#include "ba/net.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "ba/field_kernel.hpp"

namespace ba {

using nn::Mat;
using nn::Tape;
using nn::Var;

void ModelConfig::validate() const {
  require(hidden >= 1 && window_dim >= 1 && mixer_blocks >= 0 && mixer_hidden >= 1 && attn_hidden >= 1,
          "model config: widths must be positive");
  require(channels == 3, "model config: the network sees three channels");
  require(heads >= 1 && hidden % heads == 0, "model config: hidden width must split evenly into heads");
  require(radius >= 1, "model config: radius must be positive");
  require(blocks >= 1 && iterations_per_block >= 1 && rounds >= 1, "model config: counts must be positive");
  require(iterations() >= 2, "model config: the loss needs two iterations");
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "model config: expected a JSON object");
  ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const int v = value.get<int>();
    if (key == "hidden") cfg.hidden = v;
    else if (key == "window_dim") cfg.window_dim = v;
    else if (key == "channels") cfg.channels = v;
    else if (key == "mixer_blocks") cfg.mixer_blocks = v;
    else if (key == "mixer_hidden") cfg.mixer_hidden = v;
    else if (key == "heads") cfg.heads = v;
    else if (key == "radius") cfg.radius = v;
    else if (key == "attn_hidden") cfg.attn_hidden = v;
    else if (key == "blocks") cfg.blocks = v;
    else if (key == "iterations_per_block") cfg.iterations_per_block = v;
    else if (key == "rounds") cfg.rounds = v;
    else throw ContractError("model config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},         {"window_dim", c.window_dim},
          {"channels", c.channels},     {"mixer_blocks", c.mixer_blocks},
          {"mixer_hidden", c.mixer_hidden}, {"heads", c.heads},
          {"radius", c.radius},         {"attn_hidden", c.attn_hidden},
          {"blocks", c.blocks},         {"iterations_per_block", c.iterations_per_block},
          {"rounds", c.rounds}};
}

const io::NamedTensor& ModelWeights::at(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw std::runtime_error("model weights: no parameter '" + name + "'");
}

namespace {

enum class Init { weight, residual, zero, one, position, embedding };

struct Spec {
  std::string name;
  int rows, cols;
  Init init;
};

std::vector<Spec> layout(const ModelConfig& c) {
  std::vector<Spec> s;
  auto lin = [&](const std::string& n, int in, int out, Init init = Init::weight) {
    s.push_back({n + ".w", in, out, init});
    s.push_back({n + ".b", 1, out, Init::zero});
  };
  auto norm = [&](const std::string& n, int width) {
    s.push_back({n + ".g", 1, width, Init::one});
    s.push_back({n + ".b", 1, width, Init::zero});
  };
  const int A = c.query_width(), B = c.key_width(), side = 2 * c.radius + 1;
  lin("mixer.lift", c.channels, c.hidden);
  for (int i = 0; i < c.mixer_blocks; ++i) {
    const std::string p = "mixer." + std::to_string(i);
    norm(p + ".norm1", c.hidden);
    s.push_back({p + ".conv.k", 9, c.hidden, Init::weight});
    s.push_back({p + ".conv.b", 1, c.hidden, Init::zero});
    norm(p + ".norm2", c.hidden);
    lin(p + ".mlp1", c.hidden, c.mixer_hidden);
    lin(p + ".mlp2", c.mixer_hidden, c.hidden, Init::residual);
  }
  for (int b = 1; b <= c.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    lin(p + ".skip", c.hidden, c.hidden, Init::residual);
    s.push_back({p + ".pos", side * side, B, Init::position});
    for (int r = 0; r < c.rounds; ++r) {
      const std::string q = p + ".round" + std::to_string(r);
      norm(q + ".norm_q", A);
      norm(q + ".norm_kv", B);
      lin(q + ".q", A, c.hidden);
      lin(q + ".k", B, c.hidden);
      lin(q + ".v", B, c.hidden);
      lin(q + ".out", c.hidden, A, Init::residual);
      norm(q + ".norm_mlp", A);
      lin(q + ".mlp1", A, c.attn_hidden);
      lin(q + ".mlp2", c.attn_hidden, A, Init::residual);
    }
  }
  lin("decoder.junction", c.hidden, 7);
  lin("decoder.window", c.window_dim, 3);
  s.push_back({"pi0", 1, c.window_dim, Init::embedding});
  return s;
}

}  // namespace

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights w;
  w.config = cfg;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (const auto& sp : layout(cfg)) {
    io::NamedTensor t{sp.name, {sp.rows, sp.cols}, std::vector<float>(static_cast<std::size_t>(sp.rows) * sp.cols)};
    float sd = 0.0f, fill = 0.0f;
    switch (sp.init) {
      case Init::weight: sd = 1.0f / std::sqrt(static_cast<float>(sp.rows)); break;
      case Init::residual: sd = 0.5f / std::sqrt(static_cast<float>(sp.rows)); break;
      case Init::position: sd = 0.1f; break;
      case Init::embedding: sd = 1.0f; break;
      case Init::one: fill = 1.0f; break;
      case Init::zero: break;
    }
    for (auto& x : t.data) x = sd > 0.0f ? sd * normal(rng) : fill;
    w.params.push_back(std::move(t));
  }
  return w;
}

std::size_t param_count(const ModelWeights& w) {
  std::size_t n = 0;
  for (const auto& p : w.params) n += p.data.size();
  return n;
}

std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelWeights& w) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& p : w.params) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    if (out.empty() || out.back().first != group) out.emplace_back(group, 0);
    out.back().second += p.data.size();
  }
  return out;
}

void save_weights(const std::string& path, const ModelWeights& w, const nlohmann::json& meta) {
  io::TensorFile f;
  f.meta = meta.is_object() ? meta : nlohmann::json::object();
  f.meta["model"] = to_json(w.config);
  f.tensors = w.params;
  io::write_tensor_file(path, f);
}

ModelWeights weights_from_file(const io::TensorFile& file) {
  require(file.meta.contains("model"), "weights file: missing model configuration");
  ModelWeights w;
  w.config = model_config_from_json(file.meta.at("model"));
  for (const auto& sp : layout(w.config)) {
    const auto& t = file.at(sp.name);
    if (t.shape != std::vector<int>{sp.rows, sp.cols})
      throw std::runtime_error("weights file: tensor '" + sp.name + "' has the wrong shape");
    w.params.push_back(t);
  }
  return w;
}

ModelWeights load_weights(const std::string& path) { return weights_from_file(io::read_tensor_file(path)); }

template <class T>
const Var<T>& NetParams<T>::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return vars[i];
  throw std::runtime_error("model parameters: no '" + name + "'");
}

template <class T>
NetParams<T> bind_params(Tape<T>& tape, const ModelWeights& w) {
  NetParams<T> p;
  p.config = w.config;
  for (const auto& t : w.params) {
    Mat<T> m(t.shape[0], t.shape[1]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(t.data[i]);
    p.vars.push_back(tape.parameter(std::move(m)));
    p.names.push_back(t.name);
  }
  return p;
}

template <class T>
std::vector<T> param_grads(const NetParams<T>& p) {
  std::vector<T> g;
  for (const auto& v : p.vars) {
    if (v->grad.size() == 0) g.insert(g.end(), static_cast<std::size_t>(v->value.size()), T(0));
    else g.insert(g.end(), v->grad.data(), v->grad.data() + v->grad.size());
  }
  return g;
}

namespace {

template <class T>
struct Layers {
  Tape<T>& t;
  const NetParams<T>& p;

  Var<T> lin(const Var<T>& x, const std::string& n) { return nn::linear(t, x, p[n + ".w"], p[n + ".b"]); }
  Var<T> norm(const Var<T>& x, const std::string& n) { return nn::layer_norm(t, x, p[n + ".g"], p[n + ".b"]); }
  Var<T> mlp(const Var<T>& x, const std::string& a, const std::string& b) {
    return lin(nn::gelu(t, lin(x, a)), b);
  }
};

/// Soft gather/slice of the decoded field; outputs the smoothed features.
/// With `targets` the loss terms land in `terms` and their gradient is
/// injected when the tape runs backward.
template <class T>
Var<T> field_step(Tape<T>& t, const Var<T>& raw, const std::vector<T>& image, int H, int W, bool distances,
                  const LossConfig& lc, const LossBuffers<T>* targets, T scale, LossTerms* terms) {
  struct State {
    std::vector<T> params;
    std::vector<T> image;
    FieldForward<T> fwd;
    LossUpstream<T> up;
    FieldKernelOptions opt;
    PatchSupervision<T> sup;
    bool supervised = false;
  };
  auto st = std::make_shared<State>();
  const std::size_t N = static_cast<std::size_t>(H) * W;
  st->params.resize(N * kFieldParams);
  st->image = image;
  decode_params(raw->value.data(), st->params.data(), N);
  st->opt = lc.kernel_options();
  st->opt.distances = distances;
  st->supervised = targets != nullptr;
  if (targets) st->sup = targets->view();
  field_forward(H, W, 3, st->params.data(), st->image.data(), st->opt, st->supervised ? &st->sup : nullptr, st->fwd);
  if (targets) *terms = surrogate_terms(st->fwd, *targets, lc, scale, t.recording() ? &st->up : nullptr);

  Mat<T> fbar = Eigen::Map<const Mat<T>>(st->fwd.fbar.data(), static_cast<Eigen::Index>(N), 3);
  auto out = t.node(std::move(fbar), raw->needs_grad);
  if (out->needs_grad) {
    t.record([=] {
      if (out->grad.size() == 0 && !st->supervised) return;
      FieldUpstream<T> up{};
      std::vector<T> gf;
      if (st->supervised) {
        gf = st->up.fbar;
        up = st->up.view();
      } else {
        gf.assign(N * 3, T(0));
      }
      if (out->grad.size() != 0)
        for (std::size_t i = 0; i < N * 3; ++i) gf[i] += out->grad.data()[i];
      up.fbar = gf.data();
      std::vector<T> gp(N * kFieldParams, T(0));
      field_backward(st->params.data(), st->image.data(), st->opt, st->supervised ? &st->sup : nullptr, st->fwd, up,
                     gp.data());
      decode_backward(raw->value.data(), gp.data(), raw->g().data(), N);
    });
  }
  return out;
}

template <class T>
Mat<T> image_rows(const ImageF& image) {
  const ImageF rgb = to_rgb(image);
  Mat<T> m(static_cast<Eigen::Index>(rgb.pixels()), 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rgb.data()[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace

template <class T>
Var<T> mixer_forward(Tape<T>& tape, const NetParams<T>& params, const ModelConfig& cfg, const Mat<T>& image,
                     int height, int width) {
  Layers<T> L{tape, params};
  Var<T> h = L.lin(tape.constant(image), "mixer.lift");
  for (int i = 0; i < cfg.mixer_blocks; ++i) {
    const std::string p = "mixer." + std::to_string(i);
    const Var<T> n1 = L.norm(h, p + ".norm1");
    h = nn::add(tape, h, nn::depthwise_conv3(tape, n1, params[p + ".conv.k"], params[p + ".conv.b"], height, width));
    h = nn::add(tape, h, L.mlp(L.norm(h, p + ".norm2"), p + ".mlp1", p + ".mlp2"));
  }
  return h;
}

template <class T>
NetOutput<T> model_forward(Tape<T>& tape, const NetParams<T>& params, const ImageF& image, const NetOptions& opt,
                           const LossBuffers<T>* targets, T scale) {
  const ModelConfig& cfg = params.config;
  const int H = image.height(), W = image.width();
  require(image.channels() == 1 || image.channels() == 3, "model_forward: image must have 1 or 3 channels");
  require(H >= cfg.min_input() && W >= cfg.min_input(), "model_forward: image is smaller than the attention window");
  require(!targets || (targets->height == H && targets->width == W), "model_forward: targets do not match");
  const int N = H * W, T_iter = cfg.iterations();
  Layers<T> L{tape, params};

  NetOutput<T> out;
  out.height = H;
  out.width = W;
  const Mat<T> img = image_rows<T>(image);
  const std::vector<T> img_flat(img.data(), img.data() + img.size());
  const Var<T> f = tape.constant(img);

  const Var<T> gamma0 = mixer_forward(tape, params, cfg, img, H, W);
  out.gamma0 = gamma0->value;
  Var<T> gamma = gamma0;
  Var<T> pi = nn::repeat_row(tape, params["pi0"], N);
  Var<T> fbar = f;

  std::vector<T> center_bias;
  if (opt.center_only_attention) {
    const int side = 2 * cfg.radius + 1;
    center_bias.assign(static_cast<std::size_t>(side) * side, -std::numeric_limits<T>::infinity());
    center_bias[static_cast<std::size_t>(cfg.radius) * side + cfg.radius] = T(0);
  }

  for (int it = 1; it <= T_iter; ++it) {
    const std::string blk = "block" + std::to_string((it - 1) / cfg.iterations_per_block + 1);
    gamma = nn::add(tape, gamma, L.lin(gamma0, blk + ".skip"));
    Var<T> a = nn::concat_cols<T>(tape, {gamma, pi});
    const Var<T> b = nn::concat_cols<T>(tape, {gamma, f, fbar});
    Mat<T> weights;
    for (int r = 0; r < cfg.rounds; ++r) {
      const std::string p = blk + ".round" + std::to_string(r);
      const Var<T> q = L.lin(L.norm(a, p + ".norm_q"), p + ".q");
      const Var<T> bn = L.norm(b, p + ".norm_kv");
      const Var<T> k = L.lin(bn, p + ".k");
      const Var<T> v = L.lin(bn, p + ".v");
      const Var<T> pk = nn::linear(tape, params[blk + ".pos"], params[p + ".k.w"], Var<T>{});
      const Var<T> pv = nn::linear(tape, params[blk + ".pos"], params[p + ".v.w"], Var<T>{});
      const bool keep = opt.keep_attention && r + 1 == cfg.rounds;
      const Var<T> att = nn::neighborhood_attention(tape, q, k, v, pk, pv, H, W, cfg.heads, cfg.radius,
                                                    keep ? &weights : nullptr,
                                                    center_bias.empty() ? nullptr : &center_bias);
      a = nn::add(tape, a, L.lin(att, p + ".out"));
      a = nn::add(tape, a, L.mlp(L.norm(a, p + ".norm_mlp"), p + ".mlp1", p + ".mlp2"));
    }
    gamma = nn::slice_cols(tape, a, 0, cfg.hidden);
    pi = nn::slice_cols(tape, a, cfg.hidden, cfg.window_dim);
    const Var<T> raw = nn::concat_cols<T>(tape, {L.lin(gamma, "decoder.junction"), L.lin(pi, "decoder.window")});
    out.raw.push_back(raw->value);
    if (opt.keep_hidden) out.hidden.push_back(gamma->value);
    if (opt.keep_attention) out.attention.push_back(std::move(weights));

    // The last two iterations carry the loss; without targets the final
    // iteration needs no smoothed features.
    const bool supervised = targets && it >= T_iter - 1;
    if (!supervised && it == T_iter) break;
    const T w = it == T_iter ? static_cast<T>(opt.loss.final_iter_weight) : T(1);
    LossTerms* terms = it == T_iter ? &out.final : &out.previous;
    fbar = field_step(tape, raw, img_flat, H, W, supervised, opt.loss, supervised ? targets : nullptr, scale * w,
                      terms);
  }
  if (targets) out.loss = total_loss(out.previous, out.final, opt.loss);
  return out;
}

NetOutput<float> run_model(const ModelWeights& w, const ImageF& image, const NetOptions& opt) {
  Tape<float> tape(false);
  const NetParams<float> p = bind_params(tape, w);
  return model_forward(tape, p, image, opt);
}

RawField to_raw_field(const Mat<float>& raw, int height, int width) {
  require(raw.rows() == static_cast<Eigen::Index>(height) * width && raw.cols() == kRawParams,
          "to_raw_field: shape mismatch");
  RawField r;
  r.height = height;
  r.width = width;
  r.values.assign(raw.data(), raw.data() + raw.size());
  return r;
}

#define BA_INSTANTIATE(T)                                                                                      \
  template struct NetParams<T>;                                                                                \
  template NetParams<T> bind_params<T>(Tape<T>&, const ModelWeights&);                                         \
  template std::vector<T> param_grads<T>(const NetParams<T>&);                                                 \
  template Var<T> mixer_forward<T>(Tape<T>&, const NetParams<T>&, const ModelConfig&, const Mat<T>&, int, int);\
  template NetOutput<T> model_forward<T>(Tape<T>&, const NetParams<T>&, const ImageF&, const NetOptions&,      \
                                         const LossBuffers<T>*, T);
BA_INSTANTIATE(float)
BA_INSTANTIATE(double)
#undef BA_INSTANTIATE

}  // namespace ba
