#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cscale/autodiff.hpp"
#include "cscale/dataset.hpp"
#include "cscale/network.hpp"
#include "cscale/rng.hpp"

namespace cscale {

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 32;
  int epochs = 50;
  double l1_lambda = 0.0;
  double augment_probability = 0.8;
  double rotation_limit_degrees = 10.0;
  double shift_limit_fraction = 0.1;
  uint64_t rng_seed = 0;
  // 0 = auto (hardware threads, capped); 1 = sequential. Parallel batches
  // reduce per-sample gradients in fixed order, so results are identical
  // to sequential execution.
  int worker_threads = 0;

  void validate() const;
};

// Prediction clamp for the cross-entropy; keeps the loss finite under a
// saturated sigmoid.
inline constexpr double kBceClamp = 1e-7;

// -(y ln p + (1-y) ln(1-p)) with p clamped to [kBceClamp, 1-kBceClamp].
template <typename T>
T bce_loss(T prediction, int label);

// Mean of per-sample losses.
template <typename T>
T bce_loss_batch(const std::vector<T>& predictions, const std::vector<int>& labels);

// d(bce)/d(logit) for p = sigmoid(logit): (p - y) inside the clamp region,
// 0 where the clamp saturates.
template <typename T>
T bce_logit_grad(T prediction, int label);

// lambda * sum_i |s_i| over all scaling vectors of the model.
template <typename T>
T l1_penalty(const NetworkModel<T>& model, T lambda);

template <typename T>
T l1_penalty(const std::vector<T>& values, T lambda);

// Subgradient: lambda * sign(s); 0 at s == 0 so weights pruned to zero
// stay at rest.
template <typename T>
T l1_subgradient(T value, T lambda);

// Clamps every component to [0,1]; applied to every scaling vector after
// each optimizer step.
template <typename T>
Tensor<T> project_unit_interval(Tensor<T> v);

// Nesterov-momentum Adam. Formulation (pinned; locked by the scalar-oracle
// test): biased moments m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2, bias
// corrections with step t, update direction
//   (b1 * m_hat + (1-b1) * g / (1 - b1^t)) / (sqrt(v_hat) + eps).
struct NadamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct NadamState {
  NadamConfig config;
  int64_t step = 0;  // completed steps
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

// One update over all parameters present in `grads`. Moment slots are
// created on first use; shapes must match thereafter. Throws on non-finite
// gradients, naming the parameter id.
template <typename T>
void nadam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
                NadamState<T>& state, double learning_rate);

// Rotation (degrees, about the image center) followed by translation
// (pixels, rows then columns), realized as one inverse-mapped bilinear
// resample with zero fill outside the source.
template <typename T>
Tensor<T> warp_rotate_shift(const Tensor<T>& image, double angle_degrees, double shift_rows, double shift_cols);

// With probability `augment_probability`: rotation ~ U(-limit, +limit) and
// shifts ~ U(-fraction, +fraction) of each spatial extent; otherwise the
// image passes through unchanged. Draw order: gate, angle, row shift,
// column shift.
template <typename T>
Tensor<T> augment(const Tensor<T>& image, const TrainConfig& config, Rng& rng);

template <typename T>
struct LossGradients {
  double loss = 0.0;
  std::map<std::string, Tensor<T>> grads;
};

// The exact quantity one optimizer step consumes: mean cross-entropy over
// the batch plus the L1 term on scaling weights, with gradients for every
// trainable parameter. `start_layer` > 0 treats the inputs as cached
// activations of the frozen prefix. Per-sample passes may run on
// `worker_threads`; gradients reduce in sample order, so the result is
// identical to sequential execution.
template <typename T>
LossGradients<T> batch_loss_gradients(const NetworkModel<T>& model, const std::vector<const Tensor<T>*>& inputs,
                                      const std::vector<int>& labels, double l1_lambda, int start_layer = 0,
                                      int worker_threads = 1);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auc_roc = 0.0;
  double val_auc_pr = 0.0;
};

template <typename T>
struct TrainResult {
  NetworkModel<T> model;
  std::vector<EpochStats> history;
};

// Trains the model's trainable parameters (scaling vectors and/or the
// dense head) with Nadam on binary cross-entropy plus the L1 penalty on
// scaling weights. Frozen tensors are never touched; scaling vectors are
// projected into [0,1] after every step. History has one row per epoch
// with the mean training loss and validation AUCs.
template <typename T>
TrainResult<T> train(const NetworkModel<T>& model, const DatasetContainer<T>& data, const TrainConfig& config);

}  // namespace cscale
