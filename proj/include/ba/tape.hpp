#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace ba::nn {

/// Activations are (pixels x channels), one row per pixel.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Node {
  Mat<T> value;
  Mat<T> grad;  // allocated on first use
  bool needs_grad = false;

  Mat<T>& g() {
    if (grad.size() == 0) grad = Mat<T>::Zero(value.rows(), value.cols());
    return grad;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

/// Records backward closures in execution order. A tape that is not
/// recording records nothing, so intermediates die with their handles.
template <class T>
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var<T> constant(Mat<T> v) const {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return n;
  }
  Var<T> parameter(Mat<T> v) const {
    auto n = constant(std::move(v));
    n->needs_grad = recording_;
    return n;
  }

  /// Result node of an op; it needs a gradient when recording and some
  /// input does. Ops then record their closure only in that case.
  Var<T> node(Mat<T> v, bool needs) const {
    auto n = constant(std::move(v));
    n->needs_grad = recording_ && needs;
    return n;
  }
  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }

  /// Runs recorded closures in reverse. Seeds must already sit in the
  /// output gradients (or be injected by the closures themselves).
  void backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

private:
  bool recording_;
  std::vector<std::function<void()>> ops_;
};

/// x W + b, with b a 1 x out row (may be null).
template <class T>
Var<T> linear(Tape<T>& t, const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <class T>
Var<T> add(Tape<T>& t, const Var<T>& a, const Var<T>& b);

/// Per-row normalization to zero mean, unit variance, then gain and bias.
template <class T>
Var<T> layer_norm(Tape<T>& t, const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

/// GELU in its tanh form.
template <class T>
Var<T> gelu(Tape<T>& t, const Var<T>& x);

/// Depthwise 3x3 convolution over an H x W grid, zero padding; kernel is 9 x C
/// with row (dy + 1) * 3 + (dx + 1).
template <class T>
Var<T> depthwise_conv3(Tape<T>& t, const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int height,
                       int width);

template <class T>
Var<T> concat_cols(Tape<T>& t, const std::vector<Var<T>>& parts);

template <class T>
Var<T> slice_cols(Tape<T>& t, const Var<T>& x, int start, int count);

/// Repeats a single row `rows` times.
template <class T>
Var<T> repeat_row(Tape<T>& t, const Var<T>& x, int rows);

/// Multi-head attention of each pixel over its (2r+1)^2 neighbourhood.
/// Keys and values of neighbour offset o are k[n+o] + pos_k[o] and
/// v[n+o] + pos_v[o]; neighbours outside the grid are masked out.
/// Row-normalized weights are kept in `weights` (pixels x heads*(2r+1)^2)
/// when it is non-null. `score_bias`, if given, adds a constant per offset to
/// the scores (-inf masks an offset).
template <class T>
Var<T> neighborhood_attention(Tape<T>& t, const Var<T>& q, const Var<T>& k, const Var<T>& v, const Var<T>& pos_k,
                              const Var<T>& pos_v, int height, int width, int heads, int radius,
                              Mat<T>* weights = nullptr, const std::vector<T>* score_bias = nullptr);

}  // namespace ba::nn
