#pragma once

#include <vector>

#include "cscale/network.hpp"
#include "cscale/tensor.hpp"

namespace cscale {

// Class-activation heatmap at the final conv block's spatial resolution,
// nonnegative and normalized so the maximum is 1 (or all zeros when the
// target gradient vanishes).
template <typename T>
struct Heatmap {
  Tensor<T> map;  // (h, w)
  Tensor<T> upsampled;  // (H, W) at input resolution, bilinear

  void validate() const;
};

// Gradient-weighted class activation map: channel weights are the spatial
// means of d(target logit)/d(final conv activation), the map is the ReLU
// of the weighted activation sum. The activation point is the output of
// the last conv block (its scaling layer when present).
template <typename T>
Heatmap<T> grad_cam(const NetworkModel<T>& model, const Tensor<T>& image, int target = 0);

// Remaining channel fraction per conv layer of `after` relative to
// `before`; both models must have the same conv-layer topology up to
// channel removal (cascade-removed layers report 0).
template <typename T>
std::vector<double> channels_per_layer_report(const NetworkModel<T>& before, const NetworkModel<T>& after);

}  // namespace cscale
