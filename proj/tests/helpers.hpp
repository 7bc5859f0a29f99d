#pragma once

// Shared test utilities: independent reference implementations (kept free
// of the library's fast paths on purpose) and small model/data builders.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "cscale/autodiff.hpp"
#include "cscale/dataset.hpp"
#include "cscale/metrics.hpp"
#include "cscale/network.hpp"
#include "cscale/rng.hpp"
#include "cscale/tensor.hpp"
#include "cscale/trainer.hpp"

namespace testutil {

using namespace cscale;

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Direct six-nested-loop convolution, written independently of the
// library's loop ordering.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  const int h = input.extent(0), w = input.extent(1), c_in = input.extent(2);
  const int k = kernel.extent(0), c_out = kernel.extent(3);
  const int pad = k / 2;
  Tensor<T> out(Shape{h, w, c_out});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int oc = 0; oc < c_out; ++oc) {
        T acc = bias[oc];
        for (int di = 0; di < k; ++di) {
          for (int dj = 0; dj < k; ++dj) {
            for (int ic = 0; ic < c_in; ++ic) {
              const int ii = i + di - pad;
              const int jj = j + dj - pad;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              acc += input.at(ii, jj, ic) * kernel.at(di, dj, ic, oc);
            }
          }
        }
        out.at(i, j, oc) = acc;
      }
    }
  }
  return out;
}

// Pair counting with half credit for ties; the O(P*N) probabilistic
// definition of the ROC AUC.
inline double roc_auc_bruteforce(const ScoredSet& set) {
  double credit = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < set.labels.size(); ++i) {
    if (set.labels[i] != 1) continue;
    for (size_t j = 0; j < set.labels.size(); ++j) {
      if (set.labels[j] != 0) continue;
      ++pairs;
      if (set.scores[i] > set.scores[j]) {
        credit += 1.0;
      } else if (set.scores[i] == set.scores[j]) {
        credit += 0.5;
      }
    }
  }
  return credit / static_cast<double>(pairs);
}

// Step-wise PR area by exhaustive recounting at every unique threshold.
inline double pr_auc_reference(const ScoredSet& set) {
  std::vector<double> thresholds = set.scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const int pos = set.positives();
  double auc = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (size_t i = 0; i < set.scores.size(); ++i) {
      if (set.scores[i] >= t) {
        if (set.labels[i] == 1) {
          ++tp;
        } else {
          ++fp;
        }
      }
    }
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / pos;
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return auc;
}

// Random frozen-conv toy model: 1..max_convs conv layers of 2..max_width
// channels, a pool after the first conv when the input is large enough,
// GAP and a 1-unit head.
template <typename T>
NetworkModel<T> random_toy_model(Rng& rng, int input_size = 8, int input_channels = 2, int max_convs = 3,
                                 int max_width = 8, bool with_pool = true) {
  ChannelPlan plan;
  const int convs = rng.uniform_int(1, max_convs);
  for (int l = 0; l < convs; ++l) {
    plan.entries.push_back(rng.uniform_int(2, max_width));
    if (l == 0 && with_pool && input_size % 2 == 0) plan.entries.push_back(ChannelPlan::kPool);
  }
  return build_baseline_model<T>(plan, Shape{input_size, input_size, input_channels}, 1, rng);
}

// Flatten / restore the trainable parameters (scaling vectors, dense head)
// for finite-difference probing.
template <typename T>
std::vector<double> get_trainable(const NetworkModel<T>& model) {
  std::vector<double> out;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    switch (layer_kind(model.layers[i])) {
      case LayerKind::Scaling: {
        const auto& s = model.scaling(static_cast<int>(i)).scale;
        for (int64_t e = 0; e < s.size(); ++e) out.push_back(static_cast<double>(s[e]));
        break;
      }
      case LayerKind::Dense: {
        const auto& d = model.dense(static_cast<int>(i));
        if (!d.trainable) break;
        for (int64_t e = 0; e < d.weight.size(); ++e) out.push_back(static_cast<double>(d.weight[e]));
        for (int64_t e = 0; e < d.bias.size(); ++e) out.push_back(static_cast<double>(d.bias[e]));
        break;
      }
      default:
        break;
    }
  }
  return out;
}

template <typename T>
void set_trainable(NetworkModel<T>& model, const std::vector<double>& values) {
  size_t cursor = 0;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    switch (layer_kind(model.layers[i])) {
      case LayerKind::Scaling: {
        auto& s = model.scaling(static_cast<int>(i)).scale;
        for (int64_t e = 0; e < s.size(); ++e) s[e] = static_cast<T>(values.at(cursor++));
        break;
      }
      case LayerKind::Dense: {
        auto& d = model.dense(static_cast<int>(i));
        if (!d.trainable) break;
        for (int64_t e = 0; e < d.weight.size(); ++e) d.weight[e] = static_cast<T>(values.at(cursor++));
        for (int64_t e = 0; e < d.bias.size(); ++e) d.bias[e] = static_cast<T>(values.at(cursor++));
        break;
      }
      default:
        break;
    }
  }
}

// Gradient map flattened in the same order as get_trainable.
template <typename T>
std::vector<double> flatten_grads(const NetworkModel<T>& model, const std::map<std::string, Tensor<T>>& grads) {
  std::vector<double> out;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const int idx = static_cast<int>(i);
    switch (layer_kind(model.layers[i])) {
      case LayerKind::Scaling: {
        const auto& g = grads.at(param_id(idx, "scale"));
        for (int64_t e = 0; e < g.size(); ++e) out.push_back(static_cast<double>(g[e]));
        break;
      }
      case LayerKind::Dense: {
        if (!model.dense(idx).trainable) break;
        const auto& gw = grads.at(param_id(idx, "weight"));
        for (int64_t e = 0; e < gw.size(); ++e) out.push_back(static_cast<double>(gw[e]));
        const auto& gb = grads.at(param_id(idx, "bias"));
        for (int64_t e = 0; e < gb.size(); ++e) out.push_back(static_cast<double>(gb[e]));
        break;
      }
      default:
        break;
    }
  }
  return out;
}

// Full training loss over a fixed batch as a pure function of the
// trainable parameter vector; the finite-difference side never touches
// backprop.
template <typename T>
double full_loss_at(NetworkModel<T> model, const std::vector<Tensor<T>>& inputs, const std::vector<int>& labels,
                    double lambda, const std::vector<double>& theta) {
  set_trainable(model, theta);
  double loss = 0.0;
  for (size_t s = 0; s < inputs.size(); ++s) {
    Tensor<T> logits = forward(model, inputs[s]);
    loss += static_cast<double>(bce_loss(sigmoid(logits[0]), labels[s]));
  }
  loss /= static_cast<double>(inputs.size());
  loss += static_cast<double>(l1_penalty(model, static_cast<T>(lambda)));
  return loss;
}

inline bool models_bitwise_equal(const NetworkModel<float>& a, const NetworkModel<float>& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i) {
    if (layer_kind(a.layers[i]) != layer_kind(b.layers[i])) return false;
    switch (layer_kind(a.layers[i])) {
      case LayerKind::Conv: {
        const auto& ca = std::get<ConvLayer<float>>(a.layers[i]);
        const auto& cb = std::get<ConvLayer<float>>(b.layers[i]);
        if (!ca.kernel.same_bytes(cb.kernel) || !ca.bias.same_bytes(cb.bias) || ca.frozen != cb.frozen) return false;
        break;
      }
      case LayerKind::Scaling:
        if (!std::get<ScalingLayer<float>>(a.layers[i]).scale.same_bytes(
                std::get<ScalingLayer<float>>(b.layers[i]).scale)) {
          return false;
        }
        break;
      case LayerKind::Dense: {
        const auto& da = std::get<DenseLayer<float>>(a.layers[i]);
        const auto& db = std::get<DenseLayer<float>>(b.layers[i]);
        if (!da.weight.same_bytes(db.weight) || !da.bias.same_bytes(db.bias) || da.trainable != db.trainable) {
          return false;
        }
        break;
      }
      default:
        break;
    }
  }
  return a.input_shape == b.input_shape;
}

}  // namespace testutil
