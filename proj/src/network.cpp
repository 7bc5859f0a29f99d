#include "cscale/network.hpp"

#include <cmath>
#include <sstream>

namespace cscale {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Scaling: return "scaling";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Gap: return "gap";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

template <typename T>
std::vector<int> NetworkModel<T>::conv_layer_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layer_kind(layers[i]) == LayerKind::Conv) out.push_back(static_cast<int>(i));
  }
  return out;
}

template <typename T>
std::vector<int> NetworkModel<T>::scaling_layer_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layer_kind(layers[i]) == LayerKind::Scaling) out.push_back(static_cast<int>(i));
  }
  return out;
}

template <typename T>
int NetworkModel<T>::dense_layer_index() const {
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layer_kind(layers[i]) == LayerKind::Dense) return static_cast<int>(i);
  }
  throw StateError("model has no dense head");
}

template <typename T>
int NetworkModel<T>::num_outputs() const {
  return dense(dense_layer_index()).weight.extent(1);
}

ChannelPlan ChannelPlan::parse(const std::string& text) {
  ChannelPlan plan;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) throw ConfigError("channel plan has an empty entry: '" + text + "'");
    item = item.substr(a, b - a + 1);
    if (item == "P" || item == "p") {
      plan.entries.push_back(kPool);
    } else {
      try {
        size_t pos = 0;
        int width = std::stoi(item, &pos);
        if (pos != item.size() || width < 1) throw std::invalid_argument(item);
        plan.entries.push_back(width);
      } catch (const std::exception&) {
        throw ConfigError("channel plan entry '" + item + "' is neither a width nor 'P'");
      }
    }
  }
  if (plan.conv_widths().empty()) throw ConfigError("channel plan '" + text + "' has no conv layers");
  return plan;
}

std::string ChannelPlan::str() const {
  std::ostringstream os;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (i) os << ",";
    if (entries[i] == kPool) {
      os << "P";
    } else {
      os << entries[i];
    }
  }
  return os.str();
}

std::vector<int> ChannelPlan::conv_widths() const {
  std::vector<int> out;
  for (int e : entries) {
    if (e != kPool) out.push_back(e);
  }
  return out;
}

int ChannelPlan::pool_count() const {
  int n = 0;
  for (int e : entries) n += (e == kPool);
  return n;
}

ChannelPlan vgg16_channel_plan() {
  return ChannelPlan::parse("64,64,P,128,128,P,256,256,256,P,512,512,512,P,512,512,512,P");
}

std::string param_id(int layer_index, const char* field) {
  return "layer" + std::to_string(layer_index) + "." + field;
}

namespace {

template <typename T>
Tensor<T> he_normal_kernel(int k, int c_in, int c_out, Rng& rng) {
  Tensor<T> kernel(Shape{k, k, c_in, c_out});
  const double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * c_in));
  for (int64_t i = 0; i < kernel.size(); ++i) kernel[i] = static_cast<T>(rng.normal(0.0, stddev));
  return kernel;
}

template <typename T>
Tensor<T> glorot_uniform_matrix(int n, int m, Rng& rng) {
  Tensor<T> weight(Shape{n, m});
  const double limit = std::sqrt(6.0 / (static_cast<double>(n) + m));
  for (int64_t i = 0; i < weight.size(); ++i) weight[i] = static_cast<T>(rng.uniform(-limit, limit));
  return weight;
}

}  // namespace

// Fresh seeded initialization for the dense head; also used when channel
// surgery changes the head width and the old weights cannot be carried.
template <typename T>
DenseLayer<T> make_dense_head(int inputs, int outputs, Rng& rng) {
  DenseLayer<T> head;
  head.weight = glorot_uniform_matrix<T>(inputs, outputs, rng);
  head.bias = Tensor<T>(Shape{outputs});
  head.trainable = true;
  return head;
}

template <typename T>
NetworkModel<T> build_baseline_model(const ChannelPlan& plan, const Shape& input_shape, int num_outputs, Rng& rng) {
  if (num_outputs < 1) throw ConfigError("num_outputs must be >= 1, got " + std::to_string(num_outputs));
  if (input_shape.rank() != 3) throw ShapeError("input shape must be rank 3 (h,w,c), got " + input_shape.str());

  NetworkModel<T> model;
  model.input_shape = input_shape;
  int c_prev = input_shape[2];
  for (int entry : plan.entries) {
    if (entry == ChannelPlan::kPool) {
      model.layers.push_back(MaxPoolLayer{});
    } else {
      ConvLayer<T> conv;
      conv.kernel = he_normal_kernel<T>(3, c_prev, entry, rng);
      conv.bias = Tensor<T>(Shape{entry});
      conv.frozen = true;
      model.layers.push_back(std::move(conv));
      c_prev = entry;
    }
  }
  model.layers.push_back(GapLayer{});
  model.layers.push_back(make_dense_head<T>(c_prev, num_outputs, rng));
  validate_model(model);
  return model;
}

template <typename T>
NetworkModel<T> build_baseline_model(const ChannelPlan& plan, const Shape& input_shape, int num_outputs, Rng& rng,
                                     const NetworkModel<T>& weights_source) {
  NetworkModel<T> model = build_baseline_model<T>(plan, input_shape, num_outputs, rng);
  const auto dst_convs = model.conv_layer_indices();
  const auto src_convs = weights_source.conv_layer_indices();
  if (dst_convs.size() != src_convs.size()) {
    throw FormatError("weight source has " + std::to_string(src_convs.size()) + " conv layers, plan needs " +
                      std::to_string(dst_convs.size()));
  }
  for (size_t i = 0; i < dst_convs.size(); ++i) {
    const auto& src = weights_source.conv(src_convs[i]);
    auto& dst = model.conv(dst_convs[i]);
    if (src.kernel.shape() != dst.kernel.shape()) {
      throw FormatError("conv " + std::to_string(i) + " kernel shape mismatch: weights " + src.kernel.shape().str() +
                        " vs plan " + dst.kernel.shape().str());
    }
    dst.kernel = src.kernel;
    dst.bias = src.bias;
  }
  return model;
}

template <typename T>
NetworkModel<T> attach_scaling(const NetworkModel<T>& model) {
  if (model.has_scaling()) throw StateError("model already has scaling layers");
  NetworkModel<T> out;
  out.input_shape = model.input_shape;
  out.metadata = model.metadata;
  for (const auto& layer : model.layers) {
    out.layers.push_back(layer);
    if (layer_kind(layer) == LayerKind::Conv && std::get<ConvLayer<T>>(layer).frozen) {
      const int c = std::get<ConvLayer<T>>(layer).kernel.extent(3);
      out.layers.push_back(ScalingLayer<T>{Tensor<T>::full(Shape{c}, T(1))});
    }
  }
  validate_model(out);
  return out;
}

template <typename T>
void validate_model(const NetworkModel<T>& model) {
  if (model.layers.size() < 2) throw ShapeError("model needs at least gap and dense layers");
  if (model.input_shape.rank() != 3) throw ShapeError("model input shape must be rank 3, got " + model.input_shape.str());

  int h = model.input_shape[0], w = model.input_shape[1], c = model.input_shape[2];
  bool seen_gap = false, seen_dense = false;
  const bool any_scaling = model.has_scaling();

  for (size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    const LayerKind kind = layer_kind(layer);
    if (seen_dense) throw ShapeError("dense head must be the final layer");
    if (seen_gap && kind != LayerKind::Dense) throw ShapeError("only the dense head may follow global average pooling");

    switch (kind) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        if (conv.kernel.rank() != 4) throw ShapeError("conv kernel must be rank 4, got " + conv.kernel.shape().str());
        if (conv.kernel.extent(2) != c) {
          throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(conv.kernel.extent(2)) +
                           " input channels, gets " + std::to_string(c));
        }
        if (conv.bias.rank() != 1 || conv.bias.extent(0) != conv.kernel.extent(3)) {
          throw ShapeError("layer " + std::to_string(i) + " bias shape " + conv.bias.shape().str() +
                           " does not match kernel " + conv.kernel.shape().str());
        }
        c = conv.kernel.extent(3);
        if (any_scaling && conv.frozen) {
          if (i + 1 >= model.layers.size() || layer_kind(model.layers[i + 1]) != LayerKind::Scaling) {
            throw ShapeError("frozen conv at layer " + std::to_string(i) +
                             " must be followed by a scaling layer in an augmented model");
          }
        }
        break;
      }
      case LayerKind::Scaling: {
        const auto& s = std::get<ScalingLayer<T>>(layer);
        if (i == 0 || layer_kind(model.layers[i - 1]) != LayerKind::Conv) {
          throw ShapeError("scaling layer " + std::to_string(i) + " must directly follow a conv layer");
        }
        if (s.scale.rank() != 1 || s.scale.extent(0) != c) {
          throw ShapeError("scaling layer " + std::to_string(i) + " has " + std::to_string(s.scale.extent(0)) +
                           " weights for " + std::to_string(c) + " channels");
        }
        break;
      }
      case LayerKind::MaxPool: {
        if (h % 2 != 0 || w % 2 != 0) {
          throw ShapeError("pool at layer " + std::to_string(i) + " sees odd spatial extents " +
                           Shape{h, w, c}.str());
        }
        h /= 2;
        w /= 2;
        break;
      }
      case LayerKind::Gap:
        seen_gap = true;
        break;
      case LayerKind::Dense: {
        if (!seen_gap) throw ShapeError("dense head requires global average pooling before it");
        const auto& dense = std::get<DenseLayer<T>>(layer);
        if (dense.weight.rank() != 2 || dense.weight.extent(0) != c) {
          throw ShapeError("dense head expects " + std::to_string(dense.weight.extent(0)) + " features, gets " +
                           std::to_string(c));
        }
        if (dense.weight.extent(1) < 1) throw ShapeError("dense head must have at least one output");
        if (dense.bias.rank() != 1 || dense.bias.extent(0) != dense.weight.extent(1)) {
          throw ShapeError("dense bias shape " + dense.bias.shape().str() + " does not match weight " +
                           dense.weight.shape().str());
        }
        seen_dense = true;
        break;
      }
    }
  }
  if (!seen_dense) throw ShapeError("model has no dense head");
}

template <typename T>
ParameterCounts count_parameters(const NetworkModel<T>& model) {
  ParameterCounts counts;
  counts.per_layer.resize(model.layers.size(), 0);
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    int64_t n = 0;
    bool trainable = false;
    switch (layer_kind(layer)) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        n = conv.kernel.size() + conv.bias.size();
        trainable = !conv.frozen;
        break;
      }
      case LayerKind::Scaling:
        n = std::get<ScalingLayer<T>>(layer).scale.size();
        trainable = true;
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        n = dense.weight.size() + dense.bias.size();
        trainable = dense.trainable;
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::Gap:
        break;
    }
    counts.per_layer[i] = n;
    counts.total += n;
    if (trainable) counts.trainable += n;
  }
  return counts;
}

template <typename T>
std::vector<int> count_channels(const NetworkModel<T>& model) {
  std::vector<int> widths;
  for (int idx : model.conv_layer_indices()) widths.push_back(model.conv(idx).kernel.extent(3));
  return widths;
}

template struct NetworkModel<float>;
template struct NetworkModel<double>;
template NetworkModel<double> NetworkModel<float>::cast<double>() const;
template NetworkModel<float> NetworkModel<double>::cast<float>() const;
template NetworkModel<float> NetworkModel<float>::cast<float>() const;
template NetworkModel<double> NetworkModel<double>::cast<double>() const;
template DenseLayer<float> make_dense_head<float>(int, int, Rng&);
template DenseLayer<double> make_dense_head<double>(int, int, Rng&);
template NetworkModel<float> build_baseline_model<float>(const ChannelPlan&, const Shape&, int, Rng&);
template NetworkModel<double> build_baseline_model<double>(const ChannelPlan&, const Shape&, int, Rng&);
template NetworkModel<float> build_baseline_model<float>(const ChannelPlan&, const Shape&, int, Rng&,
                                                         const NetworkModel<float>&);
template NetworkModel<double> build_baseline_model<double>(const ChannelPlan&, const Shape&, int, Rng&,
                                                           const NetworkModel<double>&);
template NetworkModel<float> attach_scaling(const NetworkModel<float>&);
template NetworkModel<double> attach_scaling(const NetworkModel<double>&);
template void validate_model(const NetworkModel<float>&);
template void validate_model(const NetworkModel<double>&);
template ParameterCounts count_parameters(const NetworkModel<float>&);
template ParameterCounts count_parameters(const NetworkModel<double>&);
template std::vector<int> count_channels(const NetworkModel<float>&);
template std::vector<int> count_channels(const NetworkModel<double>&);

}  // namespace cscale
