#include "ba/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ba/core.hpp"

namespace ba::nn {

template <class T>
Var<T> linear(Tape<T>& t, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require(x->value.cols() == w->value.rows(), "linear: input width does not match weight rows");
  Mat<T> y = x->value * w->value;
  if (b) y.rowwise() += b->value.row(0);
  const bool needs = x->needs_grad || w->needs_grad || (b && b->needs_grad);
  auto out = t.node(std::move(y), needs);
  if (out->needs_grad) {
    t.record([x, w, b, out] {
      if (out->grad.size() == 0) return;
      const Mat<T>& gy = out->grad;
      if (x->needs_grad) x->g().noalias() += gy * w->value.transpose();
      if (w->needs_grad) w->g().noalias() += x->value.transpose() * gy;
      if (b && b->needs_grad) b->g() += gy.colwise().sum();
    });
  }
  return out;
}

template <class T>
Var<T> add(Tape<T>& t, const Var<T>& a, const Var<T>& b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(), "add: shape mismatch");
  auto out = t.node(a->value + b->value, a->needs_grad || b->needs_grad);
  if (out->needs_grad) {
    t.record([a, b, out] {
      if (out->grad.size() == 0) return;
      if (a->needs_grad) a->g() += out->grad;
      if (b->needs_grad) b->g() += out->grad;
    });
  }
  return out;
}

template <class T>
Var<T> layer_norm(Tape<T>& t, const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const Eigen::Index N = x->value.rows(), D = x->value.cols();
  Mat<T> xhat(N, D);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto row = x->value.row(n);
    const T mean = row.mean();
    const T var = (row.array() - mean).square().mean();
    inv[n] = T(1) / std::sqrt(var + eps);
    xhat.row(n) = (row.array() - mean) * inv[n];
  }
  Mat<T> y = (xhat.array().rowwise() * gain->value.row(0).array()).matrix();
  y.rowwise() += bias->value.row(0);
  auto out = t.node(std::move(y), x->needs_grad || gain->needs_grad || bias->needs_grad);
  if (out->needs_grad) {
    t.record([x, gain, bias, out, xhat = std::move(xhat), inv = std::move(inv)] {
      if (out->grad.size() == 0) return;
      const Mat<T>& gy = out->grad;
      if (gain->needs_grad) gain->g() += (gy.array() * xhat.array()).colwise().sum().matrix();
      if (bias->needs_grad) bias->g() += gy.colwise().sum();
      if (!x->needs_grad) return;
      Mat<T>& gx = x->g();
      const Eigen::Index D = gy.cols();
      for (Eigen::Index n = 0; n < gy.rows(); ++n) {
        const auto gh = (gy.row(n).array() * gain->value.row(0).array()).eval();
        const T m1 = gh.sum() / T(D);
        const T m2 = (gh * xhat.row(n).array()).sum() / T(D);
        gx.row(n).array() += inv[n] * (gh - m1 - xhat.row(n).array() * m2);
      }
    });
  }
  return out;
}

template <class T>
Var<T> gelu(Tape<T>& t, const Var<T>& x) {
  // tanh form: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
  const T c = std::sqrt(T(2) / T(kPi));
  const auto xa = x->value.array();
  Mat<T> th = (c * (xa + T(0.044715) * xa.cube())).tanh().matrix();
  Mat<T> y = (T(0.5) * xa * (T(1) + th.array())).matrix();
  auto out = t.node(std::move(y), x->needs_grad);
  if (out->needs_grad) {
    t.record([x, out, c, th = std::move(th)] {
      if (out->grad.size() == 0) return;
      const auto xa = x->value.array();
      const auto ta = th.array();
      x->g().array() += out->grad.array() * (T(0.5) * (T(1) + ta) + T(0.5) * xa * (T(1) - ta.square()) * c *
                                                                        (T(1) + T(3 * 0.044715) * xa.square()));
    });
  }
  return out;
}

template <class T>
Var<T> depthwise_conv3(Tape<T>& t, const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int height,
                       int width) {
  const Eigen::Index C = x->value.cols();
  require(x->value.rows() == static_cast<Eigen::Index>(height) * width, "depthwise_conv3: grid mismatch");
  require(kernel->value.rows() == 9 && kernel->value.cols() == C, "depthwise_conv3: kernel must be 9 x C");
  Mat<T> y(x->value.rows(), C);
  y.rowwise() = bias->value.row(0);
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      auto row = y.row(static_cast<Eigen::Index>(py) * width + px);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = px + dx, sy = py + dy;
          if (sx < 0 || sy < 0 || sx >= width || sy >= height) continue;
          row.array() += kernel->value.row((dy + 1) * 3 + dx + 1).array() *
                         x->value.row(static_cast<Eigen::Index>(sy) * width + sx).array();
        }
    }
  auto out = t.node(std::move(y), x->needs_grad || kernel->needs_grad || bias->needs_grad);
  if (out->needs_grad) {
    t.record([x, kernel, bias, out, height, width] {
      if (out->grad.size() == 0) return;
      const Mat<T>& gy = out->grad;
      if (bias->needs_grad) bias->g() += gy.colwise().sum();
      for (int py = 0; py < height; ++py)
        for (int px = 0; px < width; ++px) {
          const auto g = gy.row(static_cast<Eigen::Index>(py) * width + px).array();
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int sx = px + dx, sy = py + dy;
              if (sx < 0 || sy < 0 || sx >= width || sy >= height) continue;
              const Eigen::Index m = static_cast<Eigen::Index>(sy) * width + sx;
              const int o = (dy + 1) * 3 + dx + 1;
              if (x->needs_grad) x->g().row(m).array() += kernel->value.row(o).array() * g;
              if (kernel->needs_grad) kernel->g().row(o).array() += x->value.row(m).array() * g;
            }
        }
    });
  }
  return out;
}

template <class T>
Var<T> concat_cols(Tape<T>& t, const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const Eigen::Index N = parts[0]->value.rows();
  Eigen::Index D = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require(p->value.rows() == N, "concat_cols: row mismatch");
    D += p->value.cols();
    needs = needs || p->needs_grad;
  }
  Mat<T> y(N, D);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p->value.cols()) = p->value;
    c += p->value.cols();
  }
  auto out = t.node(std::move(y), needs);
  if (out->needs_grad) {
    t.record([parts, out] {
      if (out->grad.size() == 0) return;
      Eigen::Index c = 0;
      for (const auto& p : parts) {
        if (p->needs_grad) p->g() += out->grad.middleCols(c, p->value.cols());
        c += p->value.cols();
      }
    });
  }
  return out;
}

template <class T>
Var<T> slice_cols(Tape<T>& t, const Var<T>& x, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= x->value.cols(), "slice_cols: out of range");
  auto out = t.node(x->value.middleCols(start, count), x->needs_grad);
  if (out->needs_grad) {
    t.record([x, out, start, count] {
      if (out->grad.size() == 0) return;
      x->g().middleCols(start, count) += out->grad;
    });
  }
  return out;
}

template <class T>
Var<T> repeat_row(Tape<T>& t, const Var<T>& x, int rows) {
  require(x->value.rows() == 1, "repeat_row: expects a single row");
  auto out = t.node(x->value.replicate(rows, 1), x->needs_grad);
  if (out->needs_grad) {
    t.record([x, out] {
      if (out->grad.size() == 0) return;
      x->g() += out->grad.colwise().sum();
    });
  }
  return out;
}

namespace {

struct Window {
  int y0, y1, x0, x1;  // in-grid offset ranges
};

inline Window window_at(int x, int y, int width, int height, int radius) {
  return {std::max(-radius, -y), std::min(radius, height - 1 - y), std::max(-radius, -x),
          std::min(radius, width - 1 - x)};
}

/// Per-head loops with the head width fixed at compile time when possible.
/// Terms involving the positional tables are dense products done outside.
template <class T, int DH>
struct AttentionKernel {
  using Vec = Eigen::Matrix<T, DH, 1>;
  using CMap = Eigen::Map<const Vec>;
  using MMap = Eigen::Map<Vec>;

  int height, width, D, heads, radius, dh;
  T scale;

  int side() const { return 2 * radius + 1; }
  int offsets() const { return side() * side(); }

  /// On entry P holds q . pos_k per (pixel, head, offset); on exit the
  /// attention weights. Y receives sum_o p v[n+o].
  void forward(const T* Q, const T* K, const T* V, const std::vector<T>* bias, T* P, T* Y) const {
    const int N = height * width, O = offsets(), S = side();
#pragma omp parallel for schedule(static) if (N >= 4096)
    for (int n = 0; n < N; ++n) {
      const int x = n % width, y = n / width;
      const Window w = window_at(x, y, width, height, radius);
      std::vector<T> s(static_cast<std::size_t>(O));
      for (int h = 0; h < heads; ++h) {
        const CMap q(Q + static_cast<std::size_t>(n) * D + h * dh, dh);
        T* p = P + (static_cast<std::size_t>(n) * heads + h) * O;
        // Scores of in-grid offsets, packed in window order.
        int c = 0;
        for (int dy = w.y0; dy <= w.y1; ++dy)
          for (int dx = w.x0; dx <= w.x1; ++dx, ++c) {
            const int o = (dy + radius) * S + dx + radius;
            const std::size_t m = static_cast<std::size_t>(n + dy * width + dx);
            T v = scale * (q.dot(CMap(K + m * D + h * dh, dh)) + p[o]);
            if (bias) v += (*bias)[static_cast<std::size_t>(o)];
            s[static_cast<std::size_t>(c)] = v;
          }
        auto sc = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(s.data(), c);
        sc = (sc - sc.maxCoeff()).exp();
        sc /= sc.sum();
        if (c < O) std::fill(p, p + O, T(0));
        Vec acc = Vec::Zero(dh);
        c = 0;
        for (int dy = w.y0; dy <= w.y1; ++dy)
          for (int dx = w.x0; dx <= w.x1; ++dx, ++c) {
            const int o = (dy + radius) * S + dx + radius;
            const T po = sc[c];
            p[o] = po;
            const std::size_t m = static_cast<std::size_t>(n + dy * width + dx);
            acc += po * CMap(V + m * D + h * dh, dh);
          }
        MMap(Y + static_cast<std::size_t>(n) * D + h * dh, dh) = acc;
      }
    }
  }

  /// On entry GS holds go . pos_v per (pixel, head, offset); on exit the
  /// score gradients (scaled). Accumulates the neighbour terms of gq, gk, gv.
  void backward(const T* Q, const T* K, const T* V, const T* P, const T* G, T* GS, T* gq, T* gk, T* gv) const {
    const int N = height * width, O = offsets(), S = side();
    for (int n = 0; n < N; ++n) {
      const int x = n % width, y = n / width;
      const Window w = window_at(x, y, width, height, radius);
      for (int h = 0; h < heads; ++h) {
        const std::size_t row = (static_cast<std::size_t>(n) * heads + h) * O;
        const T* p = P + row;
        T* gs = GS + row;
        const std::size_t qo = static_cast<std::size_t>(n) * D + h * dh;
        const CMap go(G + qo, dh);
        const CMap q(Q + qo, dh);
        T mean = 0;
        for (int dy = w.y0; dy <= w.y1; ++dy)
          for (int dx = w.x0; dx <= w.x1; ++dx) {
            const int o = (dy + radius) * S + dx + radius;
            const std::size_t m = static_cast<std::size_t>(n + dy * width + dx);
            gs[o] += go.dot(CMap(V + m * D + h * dh, dh));
            mean += p[o] * gs[o];
          }
        Vec gqa = Vec::Zero(dh);
        for (int o = 0; o < O; ++o) gs[o] = p[o] * (gs[o] - mean) * scale;
        for (int dy = w.y0; dy <= w.y1; ++dy)
          for (int dx = w.x0; dx <= w.x1; ++dx) {
            const int o = (dy + radius) * S + dx + radius;
            const std::size_t kv = static_cast<std::size_t>(n + dy * width + dx) * D + h * dh;
            if (gq) gqa += gs[o] * CMap(K + kv, dh);
            if (gk) MMap(gk + kv, dh) += gs[o] * q;
            if (gv) MMap(gv + kv, dh) += p[o] * go;
          }
        if (gq) MMap(gq + qo, dh) += gqa;
      }
    }
  }
};

template <class T, class F>
void with_kernel(int dh, F&& f) {
  if (dh == 16) f(AttentionKernel<T, 16>{});
  else if (dh == 8) f(AttentionKernel<T, 8>{});
  else f(AttentionKernel<T, Eigen::Dynamic>{});
}

}  // namespace

template <class T>
Var<T> neighborhood_attention(Tape<T>& t, const Var<T>& q, const Var<T>& k, const Var<T>& v, const Var<T>& pos_k,
                              const Var<T>& pos_v, int height, int width, int heads, int radius, Mat<T>* weights,
                              const std::vector<T>* score_bias) {
  const int N = height * width;
  const int D = static_cast<int>(q->value.cols());
  const int side = 2 * radius + 1, O = side * side;
  require(q->value.rows() == N && k->value.rows() == N && v->value.rows() == N, "attention: grid mismatch");
  require(k->value.cols() == D && v->value.cols() == D, "attention: width mismatch");
  require(pos_k->value.rows() == O && pos_v->value.rows() == O && pos_k->value.cols() == D &&
              pos_v->value.cols() == D,
          "attention: positional tables must be (2r+1)^2 x width");
  require(heads >= 1 && D % heads == 0, "attention: width must split evenly into heads");
  require(!score_bias || static_cast<int>(score_bias->size()) == O, "attention: one score bias per offset");
  const int dh = D / heads;
  const T scale = T(1) / std::sqrt(T(dh));

  // Per-head column blocks: probabilities (pixels x O) and features
  // (pixels x dh) of head h.
  Mat<T> probs(N, static_cast<Eigen::Index>(heads) * O);
  for (int h = 0; h < heads; ++h)
    probs.middleCols(h * O, O).noalias() =
        q->value.middleCols(h * dh, dh) * pos_k->value.middleCols(h * dh, dh).transpose();
  Mat<T> y(N, D);
  with_kernel<T>(dh, [&](auto kern) {
    kern = {height, width, D, heads, radius, dh, scale};
    kern.forward(q->value.data(), k->value.data(), v->value.data(), score_bias, probs.data(), y.data());
  });
  for (int h = 0; h < heads; ++h)
    y.middleCols(h * dh, dh).noalias() += probs.middleCols(h * O, O) * pos_v->value.middleCols(h * dh, dh);
  if (weights) *weights = probs;

  const bool needs = q->needs_grad || k->needs_grad || v->needs_grad || pos_k->needs_grad || pos_v->needs_grad;
  auto out = t.node(std::move(y), needs);
  if (out->needs_grad) {
    t.record([=, probs = std::move(probs)] {
      if (out->grad.size() == 0) return;
      const Mat<T>& G = out->grad;
      Mat<T> gs(N, static_cast<Eigen::Index>(heads) * O);
      for (int h = 0; h < heads; ++h) {
        gs.middleCols(h * O, O).noalias() = G.middleCols(h * dh, dh) * pos_v->value.middleCols(h * dh, dh).transpose();
        if (pos_v->needs_grad)
          pos_v->g().middleCols(h * dh, dh).noalias() += probs.middleCols(h * O, O).transpose() * G.middleCols(h * dh, dh);
      }
      with_kernel<T>(dh, [&](auto kern) {
        kern = {height, width, D, heads, radius, dh, scale};
        kern.backward(q->value.data(), k->value.data(), v->value.data(), probs.data(), G.data(), gs.data(),
                      q->needs_grad ? q->g().data() : nullptr, k->needs_grad ? k->g().data() : nullptr,
                      v->needs_grad ? v->g().data() : nullptr);
      });
      for (int h = 0; h < heads; ++h) {
        const auto gsh = gs.middleCols(h * O, O);
        if (q->needs_grad) q->g().middleCols(h * dh, dh).noalias() += gsh * pos_k->value.middleCols(h * dh, dh);
        if (pos_k->needs_grad)
          pos_k->g().middleCols(h * dh, dh).noalias() += gsh.transpose() * q->value.middleCols(h * dh, dh);
      }
    });
  }
  return out;
}

#define BA_INSTANTIATE(T)                                                                                        \
  template Var<T> linear<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                              \
  template Var<T> layer_norm<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, T);                     \
  template Var<T> gelu<T>(Tape<T>&, const Var<T>&);                                                            \
  template Var<T> depthwise_conv3<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int);         \
  template Var<T> concat_cols<T>(Tape<T>&, const std::vector<Var<T>>&);                                        \
  template Var<T> slice_cols<T>(Tape<T>&, const Var<T>&, int, int);                                            \
  template Var<T> repeat_row<T>(Tape<T>&, const Var<T>&, int);                                                 \
  template Var<T> neighborhood_attention<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,             \
                                            const Var<T>&, const Var<T>&, int, int, int, int, Mat<T>*,   \
                                            const std::vector<T>*);
BA_INSTANTIATE(float)
BA_INSTANTIATE(double)
#undef BA_INSTANTIATE

}  // namespace ba::nn
