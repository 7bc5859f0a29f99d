#include "cscale/cam.hpp"

#include <algorithm>
#include <cmath>

#include "cscale/autodiff.hpp"

namespace cscale {

template <typename T>
void Heatmap<T>::validate() const {
  T max_value = T(0);
  for (int64_t i = 0; i < map.size(); ++i) {
    if (map[i] < T(0)) throw ContractError("heatmap holds a negative value");
    max_value = std::max(max_value, map[i]);
  }
  if (max_value > T(1) + T(1e-6)) throw ContractError("heatmap is not normalized");
}

namespace {

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& map, int out_h, int out_w) {
  const int h = map.extent(0), w = map.extent(1);
  Tensor<T> out(Shape{out_h, out_w});
  for (int i = 0; i < out_h; ++i) {
    const double fy = (i + 0.5) * (static_cast<double>(h) / out_h) - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int j = 0; j < out_w; ++j) {
      const double fx = (j + 0.5) * (static_cast<double>(w) / out_w) - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      const double top = static_cast<double>(map.at(y0, x0)) +
                         (static_cast<double>(map.at(y0, x1)) - static_cast<double>(map.at(y0, x0))) * wx;
      const double bot = static_cast<double>(map.at(y1, x0)) +
                         (static_cast<double>(map.at(y1, x1)) - static_cast<double>(map.at(y1, x0))) * wx;
      out.at(i, j) = static_cast<T>(top + (bot - top) * wy);
    }
  }
  return out;
}

}  // namespace

template <typename T>
Heatmap<T> grad_cam(const NetworkModel<T>& model, const Tensor<T>& image, int target) {
  const auto convs = model.conv_layer_indices();
  if (convs.empty()) throw ContractError("grad-cam requires at least one conv layer");
  if (target < 0 || target >= model.num_outputs()) {
    throw ContractError("grad-cam target " + std::to_string(target) + " out of range for " +
                        std::to_string(model.num_outputs()) + " outputs");
  }

  // Activation point: the last conv block's output, i.e. its scaling layer
  // when one follows.
  int act_layer = convs.back();
  if (act_layer + 1 < static_cast<int>(model.layers.size()) &&
      layer_kind(model.layers[static_cast<size_t>(act_layer + 1)]) == LayerKind::Scaling) {
    act_layer += 1;
  }

  GradientTape<T> tape;
  Tensor<T> logits = forward(model, image, &tape);
  Tensor<T> seed(logits.shape());
  seed[target] = T(1);
  Gradients<T> grads = backprop(tape, seed, {act_layer});

  const Tensor<T>& activation = tape.node_for_layer(act_layer).output;
  const Tensor<T>& act_grad = grads.activations.at(act_layer);
  const int h = activation.extent(0), w = activation.extent(1), c = activation.extent(2);
  const int64_t pixels = static_cast<int64_t>(h) * w;

  std::vector<T> alpha(static_cast<size_t>(c), T(0));
  for (int64_t p = 0; p < pixels; ++p) {
    for (int ch = 0; ch < c; ++ch) alpha[static_cast<size_t>(ch)] += act_grad[p * c + ch];
  }
  for (int ch = 0; ch < c; ++ch) alpha[static_cast<size_t>(ch)] /= static_cast<T>(pixels);

  Heatmap<T> heat;
  heat.map = Tensor<T>(Shape{h, w});
  T max_value = T(0);
  for (int64_t p = 0; p < pixels; ++p) {
    T acc = T(0);
    for (int ch = 0; ch < c; ++ch) acc += alpha[static_cast<size_t>(ch)] * activation[p * c + ch];
    const T v = acc > T(0) ? acc : T(0);
    heat.map[p] = v;
    max_value = std::max(max_value, v);
  }
  if (max_value > T(0)) {
    for (int64_t p = 0; p < pixels; ++p) heat.map[p] /= max_value;
  }
  heat.upsampled = upsample_bilinear(heat.map, model.input_shape[0], model.input_shape[1]);
  return heat;
}

template <typename T>
std::vector<double> channels_per_layer_report(const NetworkModel<T>& before, const NetworkModel<T>& after) {
  const std::vector<int> orig = count_channels(before);
  const std::vector<int> kept = count_channels(after);
  if (kept.size() > orig.size()) {
    throw ContractError("pruned model has more conv layers (" + std::to_string(kept.size()) + ") than the baseline (" +
                        std::to_string(orig.size()) + ")");
  }
  std::vector<double> fractions(orig.size(), 0.0);
  for (size_t l = 0; l < kept.size(); ++l) {
    if (kept[l] > orig[l]) {
      throw ContractError("conv " + std::to_string(l) + " has " + std::to_string(kept[l]) +
                          " channels, baseline has " + std::to_string(orig[l]));
    }
    fractions[l] = static_cast<double>(kept[l]) / orig[l];
  }
  return fractions;
}

template struct Heatmap<float>;
template struct Heatmap<double>;
template Heatmap<float> grad_cam(const NetworkModel<float>&, const Tensor<float>&, int);
template Heatmap<double> grad_cam(const NetworkModel<double>&, const Tensor<double>&, int);
template std::vector<double> channels_per_layer_report(const NetworkModel<float>&, const NetworkModel<float>&);
template std::vector<double> channels_per_layer_report(const NetworkModel<double>&, const NetworkModel<double>&);

}  // namespace cscale
