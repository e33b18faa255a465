#pragma once

// Network blocks, loss and optimizer.
//
// Blocks are templates over the value type V, which is either Tensor<T> (plain
// inference, no graph retained) or Var<T> (recorded for backpropagation).
// Parameter holders are templates over the same type so one structure serves
// as weight storage, as tape leaves, and as gradient storage.

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mamaf/autodiff.hpp"
#include "mamaf/ops.hpp"

namespace mamaf {

template <typename P>
struct ConvParams {
  P kernel;
  P bias;
};

/// weight is [in, out].
template <typename P>
struct DenseParams {
  P weight;
  P bias;
};

/// Four stride-2 3x3 convolutions, filters 64/32/16/8.
template <typename P>
using Conv2dBlockParams = std::array<ConvParams<P>, 4>;

template <typename P>
struct MotionAwareParams {
  ConvParams<P> embed;  ///< produces the per-frame features that get differenced
  ConvParams<P> gate;   ///< conv + ReLU producing the multiplicative gate
};

/// Two 3x3x3 convolutions with 3 filters, strides (5,2,2) and (5,1,1).
template <typename P>
using Conv3dBlockParams = std::array<ConvParams<P>, 2>;

template <typename P>
struct DenseHeadParams {
  DenseParams<P> hidden;
  DenseParams<P> output;
};

inline constexpr std::array<Index, 4> kConv2dFilters{64, 32, 16, 8};
inline constexpr Index kFeatureChannels = 8;
inline constexpr Index kConv3dFilters = 3;
inline constexpr Index kTemporalReduction = 25;
inline constexpr Index kSpatialReduction = 16;
inline constexpr Index kNumClasses = 2;

// ---------------------------------------------------------------------------
// Parameter enumeration
// ---------------------------------------------------------------------------

/// Flat, ordered (name, parameter) view used for serialization, optimizer
/// state, and lockstep mapping between parameter structures.
template <typename P>
using ParamList = std::vector<std::pair<std::string, P*>>;

template <typename P>
void collect_params(ConvParams<P>& c, const std::string& prefix, ParamList<P>& out) {
  out.emplace_back(prefix + ".kernel", &c.kernel);
  out.emplace_back(prefix + ".bias", &c.bias);
}

template <typename P>
void collect_params(DenseParams<P>& d, const std::string& prefix, ParamList<P>& out) {
  out.emplace_back(prefix + ".weight", &d.weight);
  out.emplace_back(prefix + ".bias", &d.bias);
}

template <typename P>
void collect_params(MotionAwareParams<P>& m, const std::string& prefix, ParamList<P>& out) {
  collect_params(m.embed, prefix + ".embed", out);
  collect_params(m.gate, prefix + ".gate", out);
}

template <typename P>
void collect_params(DenseHeadParams<P>& h, const std::string& prefix, ParamList<P>& out) {
  collect_params(h.hidden, prefix + ".hidden", out);
  collect_params(h.output, prefix + ".output", out);
}

template <typename P, std::size_t N>
void collect_params(std::array<ConvParams<P>, N>& convs, const std::string& prefix, ParamList<P>& out) {
  for (std::size_t i = 0; i < N; ++i) collect_params(convs[i], prefix + ".conv" + std::to_string(i), out);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> he_uniform(Shape shape, Index fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
ConvParams<Tensor<T>> init_conv2d(Index kh, Index kw, Index cin, Index cout, std::mt19937_64& rng) {
  return {he_uniform<T>(Shape{kh, kw, cin, cout}, kh * kw * cin, rng), Tensor<T>(Shape{cout})};
}

template <typename T>
ConvParams<Tensor<T>> init_conv3d(Index kt, Index kh, Index kw, Index cin, Index cout, std::mt19937_64& rng) {
  return {he_uniform<T>(Shape{kt, kh, kw, cin, cout}, kt * kh * kw * cin, rng), Tensor<T>(Shape{cout})};
}

template <typename T>
DenseParams<Tensor<T>> init_dense(Index in, Index out, std::mt19937_64& rng) {
  return {he_uniform<T>(Shape{in, out}, in, rng), Tensor<T>(Shape{out})};
}

template <typename T>
Conv2dBlockParams<Tensor<T>> init_conv2d_block(Index in_channels, std::mt19937_64& rng) {
  Conv2dBlockParams<Tensor<T>> p;
  Index cin = in_channels;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = init_conv2d<T>(3, 3, cin, kConv2dFilters[i], rng);
    cin = kConv2dFilters[i];
  }
  return p;
}

template <typename T>
MotionAwareParams<Tensor<T>> init_motion_aware(Index channels, std::mt19937_64& rng) {
  MotionAwareParams<Tensor<T>> p;
  p.embed = init_conv2d<T>(3, 3, channels, channels, rng);
  p.gate = init_conv2d<T>(3, 3, channels, channels, rng);
  return p;
}

template <typename T>
Conv3dBlockParams<Tensor<T>> init_conv3d_block(Index channels, std::mt19937_64& rng) {
  return {init_conv3d<T>(3, 3, 3, channels, kConv3dFilters, rng),
          init_conv3d<T>(3, 3, 3, kConv3dFilters, kConv3dFilters, rng)};
}

template <typename T>
DenseHeadParams<Tensor<T>> init_dense_head(Index in, Index hidden, std::mt19937_64& rng) {
  return {init_dense<T>(in, hidden, rng), init_dense<T>(hidden, kNumClasses, rng)};
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

/// [N,H,W,C] -> [N,H/16,W/16,8].
template <typename V>
V conv2d_block(const V& x, const Conv2dBlockParams<V>& p) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] % kSpatialReduction != 0 || s[2] % kSpatialReduction != 0) {
    throw ConfigError("conv2d_block: spatial dims must be divisible by 16, got input " + s.str());
  }
  V h = x;
  for (const auto& c : p) h = relu(conv2d(h, c.kernel, c.bias, Stride2{2, 2}, Padding::same));
  return h;
}

/// Self-attention applied per frame, tokens being the h*w spatial positions.
template <typename V>
V spatial_attention(const V& x) {
  const Shape s = x.shape();
  if (s.rank() != 4) throw ShapeError("spatial_attention: expected [N,h,w,d], got " + s.str());
  return reshape(attention(reshape(x, Shape{s[0], s[1] * s[2], s[3]})), s);
}

/// Temporal-difference attention gate. Shape preserving. With `gating` off the
/// module is bypassed (ablation control).
template <typename V>
V motion_aware(const V& x, const MotionAwareParams<V>& p, bool gating = true) {
  const Shape s = x.shape();
  if (s.rank() != 4 || s[3] != p.embed.kernel.shape()[2]) {
    throw ShapeError("motion_aware: input " + s.str() + " does not match module channels " +
                     std::to_string(p.embed.kernel.shape()[2]));
  }
  if (!gating) return x;
  const V phi = conv2d(x, p.embed.kernel, p.embed.bias, Stride2{1, 1}, Padding::same);
  const V delta = sub(phi, roll_forward(phi));
  const V enhanced = add(phi, spatial_attention(delta));
  const V gate = relu(conv2d(enhanced, p.gate.kernel, p.gate.bias, Stride2{1, 1}, Padding::same));
  return mul(x, gate);
}

/// Sum of per-branch spatial attention.
template <typename V, std::size_t B>
V multi_attention_fusion(const std::array<V, B>& branches) {
  static_assert(B >= 1);
  for (std::size_t i = 1; i < B; ++i) {
    if (!(branches[i].shape() == branches[0].shape())) {
      throw ShapeError("multi_attention_fusion: branch " + std::to_string(i) + " shape " + branches[i].shape().str() +
                       " != branch 0 shape " + branches[0].shape().str());
    }
  }
  V fused = spatial_attention(branches[0]);
  for (std::size_t i = 1; i < B; ++i) fused = add(fused, spatial_attention(branches[i]));
  return fused;
}

/// [N,h,w,8] -> [N/25, ceil(h/2), ceil(w/2), 3].
template <typename V>
V conv3d_block(const V& x, const Conv3dBlockParams<V>& p) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[0] % kTemporalReduction != 0) {
    throw ConfigError("conv3d_block: frame count must be a multiple of 25, got input " + s.str());
  }
  const V h = relu(conv3d(x, p[0].kernel, p[0].bias, Stride3{5, 2, 2}, Padding::same));
  return relu(conv3d(h, p[1].kernel, p[1].bias, Stride3{5, 1, 1}, Padding::same));
}

template <typename V>
V dense(const V& x, const DenseParams<V>& p) {
  return add_bias(matmul(x, p.weight), p.bias);
}

/// Flat features -> [2] class probabilities.
template <typename V>
V dense_head(const V& flat, const DenseHeadParams<V>& p) {
  const Index width = p.hidden.weight.shape()[0];
  if (flat.shape().rank() != 1 || flat.shape()[0] != width) {
    throw ShapeError("dense_head: input " + flat.shape().str() + " does not match head width " + std::to_string(width));
  }
  const V h = relu(dense(reshape(flat, Shape{1, width}), p.hidden));
  return reshape(softmax(dense(h, p.output), -1), Shape{kNumClasses});
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline constexpr double kLogEpsilon = 1e-7;

template <typename T>
void validate_one_hot(const Tensor<T>& target, const Shape& pred_shape) {
  require_same_shape(target.shape(), pred_shape, "cross_entropy");
  if (target.rank() != 2) throw ShapeError("cross_entropy: expected [B,C], got " + target.shape().str());
  const Index classes = target.shape()[1];
  for (Index b = 0; b < target.shape()[0]; ++b) {
    int ones = 0;
    for (Index c = 0; c < classes; ++c) {
      const T v = target[b * classes + c];
      if (v == T(1)) ++ones;
      else if (v != T(0)) ones = -100;
    }
    if (ones != 1) throw ShapeError("cross_entropy: target row " + std::to_string(b) + " is not one-hot");
  }
}

/// mean_b -sum_c target * log(pred + eps).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  validate_one_hot(target, pred.shape());
  const Index batch = pred.shape()[0];
  const T eps = static_cast<T>(kLogEpsilon);
  return Tensor<T>::scalar(-(target.array() * (pred.array() + eps).log()).sum() / static_cast<T>(batch));
}

template <typename T>
Var<T> cross_entropy(const Var<T>& pred, const Tensor<T>& target) {
  const std::size_t ip = pred.id();
  return pred.tape().record(cross_entropy(pred.value(), target), {ip}, [ip, target](Tape<T>& t, std::size_t self) {
    const Tensor<T>& p = t.value(ip);
    const T scale_by = t.upstream(self)[0] / static_cast<T>(p.shape()[0]);
    const T eps = static_cast<T>(kLogEpsilon);
    t.accumulate(ip, Tensor<T>(p.shape(), -scale_by * target.array() / (p.array() + eps)));
  });
}

/// [B] labels in {0,1} -> [B,2] one-hot, index 1 = positive class.
template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels) {
  Tensor<T> t(Shape{static_cast<Index>(labels.size()), kNumClasses});
  for (std::size_t b = 0; b < labels.size(); ++b) t(static_cast<Index>(b), labels[b] ? 1 : 0) = T(1);
  return t;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update, in place. `grads[i]` matches `*params[i]`.
template <typename T>
void adam_step(AdamState<T>& state, const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor<T>* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->shape(), grads[i].shape(), "adam_step");
    require_same_shape(params[i]->shape(), state.m[i].shape(), "adam_step state");
  }

  ++state.step;
  const AdamOptions& o = state.options;
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(o.beta1, static_cast<double>(state.step)));
  const T correction2 = static_cast<T>(1.0 - std::pow(o.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(o.lr), eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i].array();
    auto& v = state.v[i].array();
    const auto& g = grads[i].array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    params[i]->array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

}  // namespace mamaf
