#pragma once

#include <map>
#include <string>
#include <vector>

#include "cscale/network.hpp"
#include "cscale/ops.hpp"

namespace cscale {

// One recorded layer application: the saved input and output activations
// plus max-pool routing. Activations are saved by value; nothing is
// recomputed during the reverse pass, so replaying a tape is bitwise
// deterministic.
template <typename T>
struct TapeNode {
  int layer_index = -1;
  LayerKind kind = LayerKind::Conv;
  Tensor<T> input;
  Tensor<T> output;
  std::vector<int64_t> pool_argmax;
};

// Record of one forward pass through a model. Single-owner: recorded and
// replayed by one logical thread; movable, never shared mutably.
template <typename T>
struct GradientTape {
  const NetworkModel<T>* model = nullptr;
  std::vector<TapeNode<T>> nodes;

  bool recorded() const { return !nodes.empty(); }
  const TapeNode<T>& node_for_layer(int layer_index) const;
};

// Reverse-pass result: gradients per trainable parameter id, gradients of
// requested intermediate activations (by layer index, w.r.t. that layer's
// output), and the gradient at the network input.
template <typename T>
struct Gradients {
  std::map<std::string, Tensor<T>> params;
  std::map<int, Tensor<T>> activations;
  Tensor<T> input;
};

// Runs the model on one input (h, w, c_in) and returns the head logits
// (m). When `tape` is non-null the pass is recorded for backprop.
template <typename T>
Tensor<T> forward(const NetworkModel<T>& model, const Tensor<T>& input, GradientTape<T>* tape = nullptr);

// Resumes from an intermediate activation at `begin_layer` (0 runs the
// whole model and checks the input shape). Lets callers cache the output
// of a frozen prefix and replay only the suffix.
template <typename T>
Tensor<T> forward_from(const NetworkModel<T>& model, const Tensor<T>& activation, int begin_layer,
                       GradientTape<T>* tape = nullptr);

// Runs only layers [0, end_layer) without recording.
template <typename T>
Tensor<T> forward_prefix(const NetworkModel<T>& model, const Tensor<T>& input, int end_layer);

// Convenience: sigmoid over the logits.
template <typename T>
Tensor<T> predict_proba(const NetworkModel<T>& model, const Tensor<T>& input);

// Propagates `output_grad` (gradient of a scalar loss w.r.t. the logits)
// back through the recorded pass. Frozen conv layers receive no parameter
// gradient but propagate the upstream gradient exactly. Layer indices in
// `requested_activations` select extra activation gradients to return.
template <typename T>
Gradients<T> backprop(const GradientTape<T>& tape, const Tensor<T>& output_grad,
                      const std::vector<int>& requested_activations = {});

// Scalar seed for single-logit heads; defaults to d(loss)/d(logit) = 1.
template <typename T>
Gradients<T> backprop_scalar(const GradientTape<T>& tape, T loss_gradient = T(1),
                             const std::vector<int>& requested_activations = {});

}  // namespace cscale
