#include "cscale/autodiff.hpp"

#include <algorithm>

namespace cscale {

template <typename T>
const TapeNode<T>& GradientTape<T>::node_for_layer(int layer_index) const {
  for (const auto& node : nodes) {
    if (node.layer_index == layer_index) return node;
  }
  throw StateError("activation for layer " + std::to_string(layer_index) + " was not recorded on the tape");
}

template <typename T>
Tensor<T> forward(const NetworkModel<T>& model, const Tensor<T>& input, GradientTape<T>* tape) {
  require_shape(input.shape() == model.input_shape, "model expects input " + model.input_shape.str() + ", got " +
                                                        input.shape().str());
  return forward_from(model, input, 0, tape);
}

template <typename T>
Tensor<T> forward_from(const NetworkModel<T>& model, const Tensor<T>& activation, int begin_layer,
                       GradientTape<T>* tape) {
  if (begin_layer < 0 || begin_layer > static_cast<int>(model.layers.size())) {
    throw ContractError("begin layer " + std::to_string(begin_layer) + " out of range");
  }
  if (tape) {
    tape->model = &model;
    tape->nodes.clear();
    tape->nodes.reserve(model.layers.size() - static_cast<size_t>(begin_layer));
  }

  Tensor<T> x = activation;
  for (size_t i = static_cast<size_t>(begin_layer); i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    TapeNode<T> node;
    node.layer_index = static_cast<int>(i);
    node.kind = layer_kind(layer);

    Tensor<T> y;
    switch (node.kind) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        y = relu(conv2d_forward(x, conv.kernel, conv.bias));
        break;
      }
      case LayerKind::Scaling:
        y = channel_scaling_forward(x, std::get<ScalingLayer<T>>(layer).scale);
        break;
      case LayerKind::MaxPool:
        y = max_pool_2x2(x, tape ? &node.pool_argmax : nullptr);
        break;
      case LayerKind::Gap:
        y = global_average_pool(x);
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        y = dense_forward(x, dense.weight, dense.bias);
        break;
      }
    }
    if (tape) {
      node.input = x;
      node.output = y;
      tape->nodes.push_back(std::move(node));
    }
    x = std::move(y);
  }
  return x;
}

template <typename T>
Tensor<T> forward_prefix(const NetworkModel<T>& model, const Tensor<T>& input, int end_layer) {
  require_shape(input.shape() == model.input_shape, "model expects input " + model.input_shape.str() + ", got " +
                                                        input.shape().str());
  if (end_layer < 0 || end_layer > static_cast<int>(model.layers.size())) {
    throw ContractError("end layer " + std::to_string(end_layer) + " out of range");
  }
  Tensor<T> x = input;
  for (int i = 0; i < end_layer; ++i) {
    const auto& layer = model.layers[static_cast<size_t>(i)];
    switch (layer_kind(layer)) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        x = relu(conv2d_forward(x, conv.kernel, conv.bias));
        break;
      }
      case LayerKind::Scaling:
        x = channel_scaling_forward(x, std::get<ScalingLayer<T>>(layer).scale);
        break;
      case LayerKind::MaxPool:
        x = max_pool_2x2(x);
        break;
      case LayerKind::Gap:
        x = global_average_pool(x);
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        x = dense_forward(x, dense.weight, dense.bias);
        break;
      }
    }
  }
  return x;
}

template <typename T>
Tensor<T> predict_proba(const NetworkModel<T>& model, const Tensor<T>& input) {
  Tensor<T> logits = forward(model, input);
  for (int64_t i = 0; i < logits.size(); ++i) logits[i] = sigmoid(logits[i]);
  return logits;
}

template <typename T>
Gradients<T> backprop(const GradientTape<T>& tape, const Tensor<T>& output_grad,
                      const std::vector<int>& requested_activations) {
  if (!tape.recorded()) throw StateError("gradient tape is empty; record a forward pass first");
  const NetworkModel<T>& model = *tape.model;

  Gradients<T> grads;
  for (int layer_index : requested_activations) {
    // Fails fast when a requested layer was never recorded.
    tape.node_for_layer(layer_index);
  }

  Tensor<T> g = output_grad;
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    const TapeNode<T>& node = *it;
    require_shape(g.shape() == node.output.shape(),
                  "gradient shape " + g.shape().str() + " does not match activation " + node.output.shape().str() +
                      " at layer " + std::to_string(node.layer_index));
    if (std::find(requested_activations.begin(), requested_activations.end(), node.layer_index) !=
        requested_activations.end()) {
      grads.activations.emplace(node.layer_index, g);
    }

    switch (node.kind) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(model.layers[node.layer_index]);
        if (!conv.frozen) {
          throw StateError("conv layer " + std::to_string(node.layer_index) +
                           " is trainable; kernel gradients are not supported");
        }
        // ReLU mask from the saved post-activation output, then the conv
        // transpose. Frozen kernel: no parameter gradient.
        Tensor<T> masked = relu_input_grad(g, node.output);
        g = conv2d_input_grad(masked, conv.kernel);
        break;
      }
      case LayerKind::Scaling: {
        const auto& scaling = std::get<ScalingLayer<T>>(model.layers[node.layer_index]);
        grads.params.emplace(param_id(node.layer_index, "scale"), channel_scaling_scale_grad(g, node.input));
        g = channel_scaling_input_grad(g, scaling.scale);
        break;
      }
      case LayerKind::MaxPool:
        g = max_pool_2x2_input_grad(g, node.input.shape(), node.pool_argmax);
        break;
      case LayerKind::Gap:
        g = global_average_pool_input_grad(g, node.input.shape());
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(model.layers[node.layer_index]);
        if (dense.trainable) {
          grads.params.emplace(param_id(node.layer_index, "weight"), dense_weight_grad(g, node.input));
          grads.params.emplace(param_id(node.layer_index, "bias"), g);
        }
        g = dense_input_grad(g, dense.weight);
        break;
      }
    }
  }
  grads.input = std::move(g);
  return grads;
}

template <typename T>
Gradients<T> backprop_scalar(const GradientTape<T>& tape, T loss_gradient,
                             const std::vector<int>& requested_activations) {
  if (!tape.recorded()) throw StateError("gradient tape is empty; record a forward pass first");
  const Shape out_shape = tape.nodes.back().output.shape();
  require_shape(out_shape.elements() == 1,
                "scalar backprop needs a single-logit head, model output is " + out_shape.str());
  Tensor<T> seed(out_shape);
  seed[0] = loss_gradient;
  return backprop(tape, seed, requested_activations);
}

template struct GradientTape<float>;
template struct GradientTape<double>;
template Tensor<float> forward(const NetworkModel<float>&, const Tensor<float>&, GradientTape<float>*);
template Tensor<double> forward(const NetworkModel<double>&, const Tensor<double>&, GradientTape<double>*);
template Tensor<float> forward_from(const NetworkModel<float>&, const Tensor<float>&, int, GradientTape<float>*);
template Tensor<double> forward_from(const NetworkModel<double>&, const Tensor<double>&, int, GradientTape<double>*);
template Tensor<float> forward_prefix(const NetworkModel<float>&, const Tensor<float>&, int);
template Tensor<double> forward_prefix(const NetworkModel<double>&, const Tensor<double>&, int);
template Tensor<float> predict_proba(const NetworkModel<float>&, const Tensor<float>&);
template Tensor<double> predict_proba(const NetworkModel<double>&, const Tensor<double>&);
template Gradients<float> backprop(const GradientTape<float>&, const Tensor<float>&, const std::vector<int>&);
template Gradients<double> backprop(const GradientTape<double>&, const Tensor<double>&, const std::vector<int>&);
template Gradients<float> backprop_scalar(const GradientTape<float>&, float, const std::vector<int>&);
template Gradients<double> backprop_scalar(const GradientTape<double>&, double, const std::vector<int>&);

}  // namespace cscale
