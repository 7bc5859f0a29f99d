#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cscale/rng.hpp"
#include "cscale/tensor.hpp"

namespace cscale {

// A convolution block: 3x3 cross-correlation, same padding, followed by
// ReLU. Frozen layers never enter the trainable-parameter set and their
// bytes must not change during training.
template <typename T>
struct ConvLayer {
  Tensor<T> kernel;  // (k, k, c_in, c_out)
  Tensor<T> bias;    // (c_out)
  bool frozen = true;
};

// Per-channel trainable importance weights, one per channel of the
// preceding convolution, each constrained to [0, 1].
template <typename T>
struct ScalingLayer {
  Tensor<T> scale;  // (c)
};

struct MaxPoolLayer {};

struct GapLayer {};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // (n, m)
  Tensor<T> bias;    // (m)
  bool trainable = true;
};

template <typename T>
using LayerSpec = std::variant<ConvLayer<T>, ScalingLayer<T>, MaxPoolLayer, GapLayer, DenseLayer<T>>;

enum class LayerKind { Conv, Scaling, MaxPool, Gap, Dense };

template <typename T>
LayerKind layer_kind(const LayerSpec<T>& layer) {
  return static_cast<LayerKind>(layer.index());
}

const char* layer_kind_name(LayerKind kind);

struct ModelMetadata {
  int iteration = 0;
  std::string provenance;
};

// An ordered layer chain: [conv | scaling | maxpool]* -> gap -> dense.
// Models are immutable values after construction; every transform
// (surgery, folding, training) returns a new model.
template <typename T>
struct NetworkModel {
  std::vector<LayerSpec<T>> layers;
  Shape input_shape;  // (h, w, c_in)
  ModelMetadata metadata;

  const ConvLayer<T>& conv(int layer_index) const { return std::get<ConvLayer<T>>(layers[layer_index]); }
  ConvLayer<T>& conv(int layer_index) { return std::get<ConvLayer<T>>(layers[layer_index]); }
  const ScalingLayer<T>& scaling(int layer_index) const { return std::get<ScalingLayer<T>>(layers[layer_index]); }
  ScalingLayer<T>& scaling(int layer_index) { return std::get<ScalingLayer<T>>(layers[layer_index]); }
  const DenseLayer<T>& dense(int layer_index) const { return std::get<DenseLayer<T>>(layers[layer_index]); }
  DenseLayer<T>& dense(int layer_index) { return std::get<DenseLayer<T>>(layers[layer_index]); }

  std::vector<int> conv_layer_indices() const;
  std::vector<int> scaling_layer_indices() const;
  int dense_layer_index() const;
  bool has_scaling() const { return !scaling_layer_indices().empty(); }
  int num_outputs() const;

  template <typename U>
  NetworkModel<U> cast() const {
    NetworkModel<U> out;
    out.input_shape = input_shape;
    out.metadata = metadata;
    for (const auto& layer : layers) {
      switch (layer_kind(layer)) {
        case LayerKind::Conv: {
          const auto& c = std::get<ConvLayer<T>>(layer);
          out.layers.push_back(ConvLayer<U>{c.kernel.template cast<U>(), c.bias.template cast<U>(), c.frozen});
          break;
        }
        case LayerKind::Scaling:
          out.layers.push_back(ScalingLayer<U>{std::get<ScalingLayer<T>>(layer).scale.template cast<U>()});
          break;
        case LayerKind::MaxPool:
          out.layers.push_back(MaxPoolLayer{});
          break;
        case LayerKind::Gap:
          out.layers.push_back(GapLayer{});
          break;
        case LayerKind::Dense: {
          const auto& d = std::get<DenseLayer<T>>(layer);
          out.layers.push_back(DenseLayer<U>{d.weight.template cast<U>(), d.bias.template cast<U>(), d.trainable});
          break;
        }
      }
    }
    return out;
  }
};

// Conv widths in network order with pool positions, e.g. "64,64,P,128".
struct ChannelPlan {
  static constexpr int kPool = -1;
  std::vector<int> entries;

  static ChannelPlan parse(const std::string& text);
  std::string str() const;
  std::vector<int> conv_widths() const;
  int pool_count() const;
};

// The 13-conv plan of the VGG16 feature extractor (4,224 channels total).
ChannelPlan vgg16_channel_plan();

// Trainable-parameter identifiers, e.g. "layer3.scale", "layer7.weight".
std::string param_id(int layer_index, const char* field);

// Seeded Glorot-uniform dense head with zero bias.
template <typename T>
DenseLayer<T> make_dense_head(int inputs, int outputs, Rng& rng);

// Builds the frozen-backbone baseline: conv(+ReLU) blocks and pools per
// plan, then GAP and a trainable dense head. Kernels come from the seeded
// initializer (He-normal conv, Glorot-uniform dense, zero biases).
template <typename T>
NetworkModel<T> build_baseline_model(const ChannelPlan& plan, const Shape& input_shape, int num_outputs, Rng& rng);

// Same architecture, conv kernels and biases copied from `weights_source`
// (e.g. converted pretrained weights); shapes must match exactly.
template <typename T>
NetworkModel<T> build_baseline_model(const ChannelPlan& plan, const Shape& input_shape, int num_outputs, Rng& rng,
                                     const NetworkModel<T>& weights_source);

// Inserts one scaling layer (s = 1) directly after each frozen conv block.
// The trainable set of the result is all scaling vectors plus the head.
template <typename T>
NetworkModel<T> attach_scaling(const NetworkModel<T>& model);

// Verifies structural invariants: layer ordering, channel compatibility,
// even extents at every pool, scaling placement, single dense head.
template <typename T>
void validate_model(const NetworkModel<T>& model);

struct ParameterCounts {
  int64_t total = 0;
  int64_t trainable = 0;
  std::vector<int64_t> per_layer;
};

template <typename T>
ParameterCounts count_parameters(const NetworkModel<T>& model);

// Output-channel width of each conv layer, in network order.
template <typename T>
std::vector<int> count_channels(const NetworkModel<T>& model);

}  // namespace cscale
