#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mamaf/nn.hpp"

namespace mamaf {

inline constexpr std::size_t kNumViews = 4;

struct ModelConfig {
  Index seq_len = 75;    ///< frames per view; multiple of 25
  Index input_hw = 224;  ///< square frame side; multiple of 16
  Index channels = 3;
  Index head_hidden = 64;
  std::uint64_t init_seed = 0;
  /// false bypasses every motion-aware module (ablation control).
  bool motion_gating = true;

  void validate() const;

  Index feature_hw() const { return input_hw / kSpatialReduction; }
  Index reduced_hw() const { return (feature_hw() + 1) / 2; }
  /// Length of the flattened 3-D block output fed to the dense head.
  Index head_width() const { return (seq_len / kTemporalReduction) * reduced_hw() * reduced_hw() * kConv3dFilters; }
  Shape view_shape() const { return Shape{seq_len, input_hw, input_hw, channels}; }

  /// Sorted-key JSON text; stable across runs and embedded in checkpoints.
  std::string canonical() const;
  static ModelConfig from_canonical(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename P>
struct NetParams {
  std::array<Conv2dBlockParams<P>, kNumViews> conv2d;
  std::array<MotionAwareParams<P>, kNumViews> motion;
  Conv3dBlockParams<P> conv3d;
  DenseHeadParams<P> head;
};

template <typename P>
ParamList<P> collect_params(NetParams<P>& net) {
  ParamList<P> out;
  for (std::size_t b = 0; b < kNumViews; ++b) {
    const std::string prefix = "branch" + std::to_string(b);
    collect_params(net.conv2d[b], prefix + ".conv2d", out);
    collect_params(net.motion[b], prefix + ".motion", out);
  }
  collect_params(net.conv3d, "conv3d", out);
  collect_params(net.head, "head", out);
  return out;
}

template <typename P>
ParamList<const P> collect_params(const NetParams<P>& net) {
  ParamList<const P> out;
  for (auto& [name, p] : collect_params(const_cast<NetParams<P>&>(net))) out.emplace_back(name, p);
  return out;
}

template <typename T>
NetParams<Tensor<T>> init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  NetParams<Tensor<T>> net;
  for (std::size_t b = 0; b < kNumViews; ++b) {
    net.conv2d[b] = init_conv2d_block<T>(config.channels, rng);
    net.motion[b] = init_motion_aware<T>(kFeatureChannels, rng);
  }
  net.conv3d = init_conv3d_block<T>(kFeatureChannels, rng);
  net.head = init_dense_head<T>(config.head_width(), config.head_hidden, rng);
  return net;
}

template <typename U, typename T>
NetParams<Tensor<U>> cast_params(const NetParams<Tensor<T>>& net) {
  NetParams<Tensor<U>> out;
  auto src = collect_params(net);
  auto dst = collect_params(out);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

/// Registers every weight as a trainable leaf on `tape`.
template <typename T>
NetParams<Var<T>> record_params(Tape<T>& tape, const NetParams<Tensor<T>>& net) {
  NetParams<Var<T>> out;
  auto src = collect_params(net);
  auto dst = collect_params(out);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = tape.parameter(*src[i].second, src[i].first);
  return out;
}

/// Gradients for every parameter, in collect_params order.
template <typename T>
std::vector<Tensor<T>> gradients(const Tape<T>& tape, const NetParams<Var<T>>& vars) {
  std::vector<Tensor<T>> out;
  for (auto& [name, v] : collect_params(vars)) out.push_back(tape.grad_or_zero(*v));
  return out;
}

Index parameter_count(const ModelConfig& config);

/// Shapes observed at module boundaries during one forward pass.
struct ForwardTrace {
  std::array<Shape, kNumViews> branch;
  Shape fused, reduced, flat, output;
};

/// One subject: four views [N,H,W,C] -> [2] class probabilities
/// (index 1 = positive).
template <typename V>
V forward(const ModelConfig& config, const NetParams<V>& net, const std::array<V, kNumViews>& views,
          ForwardTrace* trace = nullptr) {
  const Shape expected = config.view_shape();
  for (std::size_t i = 0; i < kNumViews; ++i) {
    if (!(views[i].shape() == expected)) {
      throw ShapeError("forward: view " + std::to_string(i) + " has shape " + views[i].shape().str() + ", expected " +
                       expected.str());
    }
  }
  std::array<V, kNumViews> branches;
  for (std::size_t i = 0; i < kNumViews; ++i) {
    branches[i] = motion_aware(conv2d_block(views[i], net.conv2d[i]), net.motion[i], config.motion_gating);
    if (trace) trace->branch[i] = branches[i].shape();
  }
  const V fused = multi_attention_fusion(branches);
  const V reduced = conv3d_block(fused, net.conv3d);
  const V flat = flatten(reduced);
  V out = dense_head(flat, net.head);
  if (trace) {
    trace->fused = fused.shape();
    trace->reduced = reduced.shape();
    trace->flat = flat.shape();
    trace->output = out.shape();
  }
  return out;
}

/// Trained or freshly initialized network together with its configuration.
struct ModelWeights {
  ModelConfig config;
  NetParams<Tensorf> params;

  static ModelWeights initialize(const ModelConfig& config) { return {config, init_params<float>(config)}; }

  Tensorf predict(const std::array<Tensorf, kNumViews>& views) const { return forward(config, params, views); }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "MAMF", u32 version, length-prefixed canonical config,
/// u32 record count, then per record: name, rank, extents, little-endian f32 data.
void save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path);

/// Throws CheckpointError. When `expected` is given, the embedded config must
/// equal it (init_seed aside).
ModelWeights load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = {});

}  // namespace mamaf
