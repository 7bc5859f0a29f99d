#include "cscale/surgery.hpp"

#include <optional>

namespace cscale {

KeepSet KeepSet::all(const std::vector<int>& widths) {
  KeepSet keep;
  keep.layers.reserve(widths.size());
  for (int w : widths) {
    std::vector<int> idx(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) idx[static_cast<size_t>(i)] = i;
    keep.layers.push_back(std::move(idx));
  }
  return keep;
}

int KeepSet::total_kept() const {
  int n = 0;
  for (const auto& l : layers) n += static_cast<int>(l.size());
  return n;
}

namespace {

void validate_keep_list(const std::vector<int>& keep, int width, int conv_ordinal) {
  int prev = -1;
  for (int idx : keep) {
    if (idx < 0 || idx >= width) {
      throw ContractError("keep set for conv " + std::to_string(conv_ordinal) + " references channel " +
                          std::to_string(idx) + " of " + std::to_string(width));
    }
    if (idx <= prev) {
      throw ContractError("keep set for conv " + std::to_string(conv_ordinal) + " must be sorted and unique");
    }
    prev = idx;
  }
}

template <typename T>
Tensor<T> slice_kernel(const Tensor<T>& kernel, const std::vector<int>& in_keep, const std::vector<int>& out_keep) {
  const int k = kernel.extent(0);
  const int c_in = kernel.extent(2), c_out = kernel.extent(3);
  Tensor<T> out(Shape{k, k, static_cast<int>(in_keep.size()), static_cast<int>(out_keep.size())});
  const int n_in = static_cast<int>(in_keep.size()), n_out = static_cast<int>(out_keep.size());
  const T* src = kernel.data();
  T* dst = out.data();
  for (int di = 0; di < k; ++di) {
    for (int dj = 0; dj < k; ++dj) {
      const T* tap = src + (static_cast<int64_t>(di) * k + dj) * c_in * c_out;
      T* otap = dst + (static_cast<int64_t>(di) * k + dj) * n_in * n_out;
      for (int a = 0; a < n_in; ++a) {
        const T* row = tap + static_cast<int64_t>(in_keep[static_cast<size_t>(a)]) * c_out;
        T* orow = otap + static_cast<int64_t>(a) * n_out;
        for (int b = 0; b < n_out; ++b) orow[b] = row[out_keep[static_cast<size_t>(b)]];
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
NetworkModel<T> select_channels(const NetworkModel<T>& model, const KeepSet& keep, Rng* head_init_rng) {
  const auto conv_indices = model.conv_layer_indices();
  if (keep.layers.size() != conv_indices.size()) {
    throw ContractError("keep set covers " + std::to_string(keep.layers.size()) + " conv layers, model has " +
                        std::to_string(conv_indices.size()));
  }

  NetworkModel<T> out;
  out.input_shape = model.input_shape;
  out.metadata = model.metadata;

  // Input channels are never pruned.
  std::vector<int> prev_keep(static_cast<size_t>(model.input_shape[2]));
  for (size_t i = 0; i < prev_keep.size(); ++i) prev_keep[i] = static_cast<int>(i);

  int conv_ordinal = 0;
  bool cascaded = false;
  int surviving_width = model.input_shape[2];

  for (const auto& layer : model.layers) {
    switch (layer_kind(layer)) {
      case LayerKind::Conv: {
        if (cascaded) {
          ++conv_ordinal;
          break;
        }
        const auto& conv = std::get<ConvLayer<T>>(layer);
        const int width = conv.kernel.extent(3);
        const auto& this_keep = keep.layers[static_cast<size_t>(conv_ordinal)];
        validate_keep_list(this_keep, width, conv_ordinal);
        if (this_keep.empty()) {
          // Cascade removal: this conv and everything after it up to the
          // GAP disappears.
          cascaded = true;
          ++conv_ordinal;
          break;
        }
        ConvLayer<T> pruned;
        pruned.kernel = slice_kernel(conv.kernel, prev_keep, this_keep);
        Tensor<T> bias(Shape{static_cast<int>(this_keep.size())});
        for (size_t b = 0; b < this_keep.size(); ++b) bias[static_cast<int64_t>(b)] = conv.bias[this_keep[b]];
        pruned.bias = std::move(bias);
        pruned.frozen = conv.frozen;
        out.layers.push_back(std::move(pruned));
        prev_keep = this_keep;
        surviving_width = static_cast<int>(this_keep.size());
        ++conv_ordinal;
        break;
      }
      case LayerKind::Scaling:
        // Dropped; the caller re-attaches fresh scaling layers if needed.
        break;
      case LayerKind::MaxPool:
        if (!cascaded) out.layers.push_back(MaxPoolLayer{});
        break;
      case LayerKind::Gap:
        out.layers.push_back(GapLayer{});
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        if (cascaded) {
          if (!head_init_rng) {
            throw ContractError("cascade removal re-initializes the dense head and needs an initializer rng");
          }
          out.layers.push_back(make_dense_head<T>(surviving_width, dense.weight.extent(1), *head_init_rng));
        } else {
          DenseLayer<T> head;
          const int m = dense.weight.extent(1);
          Tensor<T> weight(Shape{static_cast<int>(prev_keep.size()), m});
          for (size_t a = 0; a < prev_keep.size(); ++a) {
            for (int j = 0; j < m; ++j) {
              weight[static_cast<int64_t>(a) * m + j] = dense.weight[static_cast<int64_t>(prev_keep[a]) * m + j];
            }
          }
          head.weight = std::move(weight);
          head.bias = dense.bias;
          head.trainable = dense.trainable;
          out.layers.push_back(std::move(head));
        }
        break;
      }
    }
  }

  validate_model(out);
  return out;
}

template <typename T>
NetworkModel<T> fold_scaling(const NetworkModel<T>& model, const KeepSet& keep, bool scale_biases,
                             Rng* head_init_rng) {
  if (!model.has_scaling()) throw StateError("fold requires a model with scaling layers");

  // Scaling weights per conv ordinal, read before surgery drops them.
  std::vector<std::optional<Tensor<T>>> scales;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    if (layer_kind(model.layers[i]) != LayerKind::Conv) continue;
    if (i + 1 < model.layers.size() && layer_kind(model.layers[i + 1]) == LayerKind::Scaling) {
      scales.push_back(std::get<ScalingLayer<T>>(model.layers[i + 1]).scale);
    } else {
      scales.push_back(std::nullopt);
    }
  }

  NetworkModel<T> out = select_channels(model, keep, head_init_rng);

  const auto conv_indices = out.conv_layer_indices();
  for (size_t l = 0; l < conv_indices.size(); ++l) {
    if (!scales[l]) continue;
    const Tensor<T>& s = *scales[l];
    auto& conv = out.conv(conv_indices[l]);
    const auto& kept = keep.layers[l];
    const int k = conv.kernel.extent(0);
    const int n_in = conv.kernel.extent(2), n_out = conv.kernel.extent(3);
    T* kd = conv.kernel.data();
    for (int64_t tap = 0; tap < static_cast<int64_t>(k) * k * n_in; ++tap) {
      T* row = kd + tap * n_out;
      for (int b = 0; b < n_out; ++b) row[b] *= s[kept[static_cast<size_t>(b)]];
    }
    if (scale_biases) {
      for (int b = 0; b < n_out; ++b) conv.bias[b] *= s[kept[static_cast<size_t>(b)]];
    }
  }

  // Final-model contract: only the head trains from here on.
  out.dense(out.dense_layer_index()).trainable = true;
  return out;
}

KeepSet compose_keepsets(const KeepSet& first, const KeepSet& second) {
  if (first.layers.size() != second.layers.size()) {
    throw ContractError("keep sets cover different conv counts: " + std::to_string(first.layers.size()) + " vs " +
                        std::to_string(second.layers.size()));
  }
  KeepSet out;
  out.layers.resize(first.layers.size());
  for (size_t l = 0; l < first.layers.size(); ++l) {
    out.layers[l].reserve(second.layers[l].size());
    for (int idx : second.layers[l]) {
      if (idx < 0 || idx >= static_cast<int>(first.layers[l].size())) {
        throw ContractError("composed keep set references pruned channel " + std::to_string(idx) + " at conv " +
                            std::to_string(l));
      }
      out.layers[l].push_back(first.layers[l][static_cast<size_t>(idx)]);
    }
  }
  return out;
}

template NetworkModel<float> select_channels(const NetworkModel<float>&, const KeepSet&, Rng*);
template NetworkModel<double> select_channels(const NetworkModel<double>&, const KeepSet&, Rng*);
template NetworkModel<float> fold_scaling(const NetworkModel<float>&, const KeepSet&, bool, Rng*);
template NetworkModel<double> fold_scaling(const NetworkModel<double>&, const KeepSet&, bool, Rng*);

}  // namespace cscale
