#pragma once

#include <vector>

#include "cscale/tensor.hpp"

namespace cscale {

// Forward operators used by the network. All are pure functions over
// immutable inputs; convolution is cross-correlation (no kernel flip) with
// stride 1 and zero "same" padding, the convention of the VGG family whose
// pretrained weights this engine imports.

// input (h, w, c_in), kernel (k, k, c_in, c_out) with k odd, bias (c_out)
// -> (h, w, c_out).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

// Gradient of conv2d w.r.t. its input. Kernels here are frozen by contract,
// so no kernel gradient is computed; the upstream gradient is still
// propagated exactly.
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& out_grad, const Tensor<T>& kernel);

// x (h, w, c) scaled per channel by s (c); every s_i must lie in [0, 1].
template <typename T>
Tensor<T> channel_scaling_forward(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> channel_scaling_input_grad(const Tensor<T>& out_grad, const Tensor<T>& s);

// d(loss)/d(s_i) = sum over pixels of out_grad * x, per channel.
template <typename T>
Tensor<T> channel_scaling_scale_grad(const Tensor<T>& out_grad, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Mask taken from the forward input; the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_input_grad(const Tensor<T>& out_grad, const Tensor<T>& x);

// 2x2 window, stride 2. Spatial extents must be even; odd extents are a
// configuration error, never silently truncated. `argmax`, when non-null,
// receives the flat input index chosen per output element (first maximum in
// row-major window order), which the backward pass routes gradients to.
template <typename T>
Tensor<T> max_pool_2x2(const Tensor<T>& x, std::vector<int64_t>* argmax = nullptr);

template <typename T>
Tensor<T> max_pool_2x2_input_grad(const Tensor<T>& out_grad, const Shape& input_shape,
                                  const std::vector<int64_t>& argmax);

// (h, w, c) -> (c); output channel i is the spatial mean of channel i.
template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> global_average_pool_input_grad(const Tensor<T>& out_grad, const Shape& input_shape);

// v (n), W (n, m), b (m) -> (m): out = W^T v + b.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& v, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> dense_input_grad(const Tensor<T>& out_grad, const Tensor<T>& weight);

template <typename T>
Tensor<T> dense_weight_grad(const Tensor<T>& out_grad, const Tensor<T>& v);

// Numerically stable logistic function.
template <typename T>
T sigmoid(T v);

}  // namespace cscale
