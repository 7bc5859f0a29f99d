#include "cscale/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "cscale/metrics.hpp"

namespace cscale {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (l1_lambda < 0) throw ConfigError("train.l1_lambda must be >= 0");
  if (augment_probability < 0 || augment_probability > 1) {
    throw ConfigError("train.augment_probability must lie in [0,1]");
  }
  if (rotation_limit_degrees < 0) throw ConfigError("train.rotation_limit_degrees must be >= 0");
  if (shift_limit_fraction < 0) throw ConfigError("train.shift_limit_fraction must be >= 0");
  if (worker_threads < 0) throw ConfigError("train.worker_threads must be >= 0");
}

template <typename T>
T bce_loss(T prediction, int label) {
  if (label != 0 && label != 1) throw ContractError("label must be 0 or 1, got " + std::to_string(label));
  const T lo = static_cast<T>(kBceClamp);
  const T hi = T(1) - lo;
  const T p = std::clamp(prediction, lo, hi);
  return label == 1 ? -std::log(p) : -std::log(T(1) - p);
}

template <typename T>
T bce_loss_batch(const std::vector<T>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw ContractError("batch loss needs equal-length, non-empty prediction and label arrays");
  }
  T acc = T(0);
  for (size_t i = 0; i < predictions.size(); ++i) acc += bce_loss(predictions[i], labels[i]);
  return acc / static_cast<T>(predictions.size());
}

template <typename T>
T bce_logit_grad(T prediction, int label) {
  if (label != 0 && label != 1) throw ContractError("label must be 0 or 1, got " + std::to_string(label));
  const T lo = static_cast<T>(kBceClamp);
  const T hi = T(1) - lo;
  if (prediction <= lo || prediction >= hi) return T(0);  // clamp plateau
  return prediction - static_cast<T>(label);
}

template <typename T>
T l1_penalty(const std::vector<T>& values, T lambda) {
  if (lambda < T(0)) throw ContractError("l1 lambda must be >= 0");
  T acc = T(0);
  for (T v : values) acc += std::abs(v);
  return lambda * acc;
}

template <typename T>
T l1_penalty(const NetworkModel<T>& model, T lambda) {
  if (lambda < T(0)) throw ContractError("l1 lambda must be >= 0");
  T acc = T(0);
  for (int idx : model.scaling_layer_indices()) {
    const Tensor<T>& s = model.scaling(idx).scale;
    for (int64_t i = 0; i < s.size(); ++i) acc += std::abs(s[i]);
  }
  return lambda * acc;
}

template <typename T>
T l1_subgradient(T value, T lambda) {
  if (value > T(0)) return lambda;
  if (value < T(0)) return -lambda;
  return T(0);
}

template <typename T>
Tensor<T> project_unit_interval(Tensor<T> v) {
  for (int64_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], T(0), T(1));
  return v;
}

template <typename T>
void nadam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
                NadamState<T>& state, double learning_rate) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double b1 = state.config.beta1;
  const double b2 = state.config.beta2;
  const double b1t = 1.0 - std::pow(b1, t);
  const double b2t = 1.0 - std::pow(b2, t);

  for (const auto& [id, grad] : grads) {
    auto pit = params.find(id);
    if (pit == params.end()) throw ContractError("gradient for unknown parameter '" + id + "'");
    Tensor<T>& param = *pit->second;
    if (param.shape() != grad.shape()) {
      throw ShapeError("gradient shape " + grad.shape().str() + " does not match parameter '" + id + "' " +
                       param.shape().str());
    }
    auto& m = state.first_moment.try_emplace(id, Tensor<T>(param.shape())).first->second;
    auto& v = state.second_moment.try_emplace(id, Tensor<T>(param.shape())).first->second;
    if (m.shape() != param.shape()) {
      throw ShapeError("optimizer state for '" + id + "' has stale shape " + m.shape().str());
    }

    for (int64_t i = 0; i < param.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      if (!std::isfinite(g)) {
        throw StateError("non-finite gradient for parameter '" + id + "' at element " + std::to_string(i));
      }
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / b1t;
      const double v_hat = vi / b2t;
      const double direction = (b1 * m_hat + (1.0 - b1) * g / b1t) / (std::sqrt(v_hat) + state.config.epsilon);
      param[i] = static_cast<T>(static_cast<double>(param[i]) - learning_rate * direction);
    }
  }
}

template <typename T>
Tensor<T> warp_rotate_shift(const Tensor<T>& image, double angle_degrees, double shift_rows, double shift_cols) {
  require_shape(image.rank() == 3, "augmentation needs (h,w,c), got " + image.shape().str());
  const int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  const double angle = angle_degrees * 3.14159265358979323846 / 180.0;
  const double cos_a = std::cos(angle), sin_a = std::sin(angle);
  const double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;

  Tensor<T> out(image.shape());
  const T* src = image.data();
  T* dst = out.data();

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      // Inverse map: undo the shift, then the rotation.
      const double r = static_cast<double>(i) - shift_rows - cr;
      const double q = static_cast<double>(j) - shift_cols - cc;
      const double sr = cos_a * r + sin_a * q + cr;
      const double sc = -sin_a * r + cos_a * q + cc;
      const int r0 = static_cast<int>(std::floor(sr));
      const int c0 = static_cast<int>(std::floor(sc));
      const double fr = sr - r0;
      const double fc = sc - c0;
      T* orow = dst + (static_cast<int64_t>(i) * w + j) * c;

      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int di = 0; di < 2; ++di) {
          const int rr = r0 + di;
          if (rr < 0 || rr >= h) continue;
          const double wr = di == 0 ? 1.0 - fr : fr;
          for (int dj = 0; dj < 2; ++dj) {
            const int cc2 = c0 + dj;
            if (cc2 < 0 || cc2 >= w) continue;
            const double wc = dj == 0 ? 1.0 - fc : fc;
            acc += wr * wc * static_cast<double>(src[(static_cast<int64_t>(rr) * w + cc2) * c + ch]);
          }
        }
        orow[ch] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> augment(const Tensor<T>& image, const TrainConfig& config, Rng& rng) {
  if (!rng.bernoulli(config.augment_probability)) return image;
  const double angle = rng.uniform(-config.rotation_limit_degrees, config.rotation_limit_degrees);
  const double dr = rng.uniform(-config.shift_limit_fraction, config.shift_limit_fraction) * image.extent(0);
  const double dc = rng.uniform(-config.shift_limit_fraction, config.shift_limit_fraction) * image.extent(1);
  return warp_rotate_shift(image, angle, dr, dc);
}

namespace {

// Reference into a model's trainable tensor plus whether it is a scaling
// vector (and so subject to L1 and interval projection).
template <typename T>
struct ParamSlot {
  std::string id;
  Tensor<T>* tensor;
  bool is_scaling;
};

template <typename T>
std::vector<ParamSlot<T>> trainable_slots(NetworkModel<T>& model) {
  std::vector<ParamSlot<T>> slots;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const int idx = static_cast<int>(i);
    switch (layer_kind(model.layers[i])) {
      case LayerKind::Conv:
        if (!std::get<ConvLayer<T>>(model.layers[i]).frozen) {
          throw StateError("conv layer " + std::to_string(i) + " is marked trainable; kernel training is unsupported");
        }
        break;
      case LayerKind::Scaling:
        slots.push_back({param_id(idx, "scale"), &model.scaling(idx).scale, true});
        break;
      case LayerKind::Dense:
        if (model.dense(idx).trainable) {
          slots.push_back({param_id(idx, "weight"), &model.dense(idx).weight, false});
          slots.push_back({param_id(idx, "bias"), &model.dense(idx).bias, false});
        }
        break;
      default:
        break;
    }
  }
  return slots;
}

// Per-sample loss and parameter gradients for one forward/backward pass.
template <typename T>
struct SampleResult {
  double loss = 0.0;
  std::map<std::string, Tensor<T>> grads;
};

template <typename T>
SampleResult<T> sample_pass(const NetworkModel<T>& model, const Tensor<T>& input, int label, int start_layer) {
  GradientTape<T> tape;
  Tensor<T> logits = forward_from(model, input, start_layer, &tape);
  require_shape(logits.size() == 1, "training requires a single-output head");
  const T p = sigmoid(logits[0]);
  SampleResult<T> result;
  result.loss = static_cast<double>(bce_loss(p, label));
  Tensor<T> seed(Shape{1});
  seed[0] = bce_logit_grad(p, label);
  Gradients<T> grads = backprop(tape, seed);
  result.grads = std::move(grads.params);
  return result;
}

}  // namespace

template <typename T>
LossGradients<T> batch_loss_gradients(const NetworkModel<T>& model, const std::vector<const Tensor<T>*>& inputs,
                                      const std::vector<int>& labels, double l1_lambda, int start_layer,
                                      int worker_threads) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw ContractError("batch needs equal-length, non-empty input and label arrays");
  }
  if (l1_lambda < 0) throw ContractError("l1 lambda must be >= 0");
  const int n = static_cast<int>(inputs.size());

  std::vector<SampleResult<T>> sample_results(static_cast<size_t>(n));
  const int workers = std::max(1, std::min(worker_threads, n));
  if (workers <= 1) {
    for (int s = 0; s < n; ++s) {
      sample_results[static_cast<size_t>(s)] =
          sample_pass(model, *inputs[static_cast<size_t>(s)], labels[static_cast<size_t>(s)], start_layer);
    }
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (int s = t; s < n; s += workers) {
            sample_results[static_cast<size_t>(s)] =
                sample_pass(model, *inputs[static_cast<size_t>(s)], labels[static_cast<size_t>(s)], start_layer);
          }
        } catch (...) {
          errors[static_cast<size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  // Fixed-order reduction over samples, then the L1 term once per batch.
  LossGradients<T> out;
  for (int s = 0; s < n; ++s) {
    out.loss += sample_results[static_cast<size_t>(s)].loss;
    for (auto& [id, g] : sample_results[static_cast<size_t>(s)].grads) {
      auto it = out.grads.find(id);
      if (it == out.grads.end()) {
        out.grads.emplace(id, g);
      } else {
        Tensor<T>& acc = it->second;
        for (int64_t e = 0; e < acc.size(); ++e) acc[e] += g[e];
      }
    }
  }
  out.loss /= n;
  const T inv = T(1) / static_cast<T>(n);
  for (auto& [id, g] : out.grads) {
    for (int64_t e = 0; e < g.size(); ++e) g[e] *= inv;
  }

  if (l1_lambda > 0) {
    const T lambda = static_cast<T>(l1_lambda);
    for (size_t i = 0; i < model.layers.size(); ++i) {
      if (layer_kind(model.layers[i]) != LayerKind::Scaling) continue;
      const Tensor<T>& s = model.scaling(static_cast<int>(i)).scale;
      const std::string id = param_id(static_cast<int>(i), "scale");
      auto it = out.grads.find(id);
      if (it == out.grads.end()) it = out.grads.emplace(id, Tensor<T>(s.shape())).first;
      Tensor<T>& g = it->second;
      for (int64_t e = 0; e < g.size(); ++e) g[e] += l1_subgradient(s[e], lambda);
      out.loss += static_cast<double>(l1_penalty(s.raw(), lambda));
    }
  }
  return out;
}

template <typename T>
TrainResult<T> train(const NetworkModel<T>& model, const DatasetContainer<T>& data, const TrainConfig& config) {
  config.validate();
  data.validate();
  validate_model(model);
  if (model.num_outputs() != 1) {
    throw ContractError("training requires a 1-output head, model has " + std::to_string(model.num_outputs()));
  }

  const std::vector<int> train_idx = data.indices_of(Split::Train);
  const std::vector<int> val_idx = data.indices_of(Split::Validation);
  if (train_idx.empty()) throw StateError("training split is empty");

  TrainResult<T> result{model, {}};
  if (config.epochs == 0) return result;

  NetworkModel<T>& net = result.model;
  auto slots = trainable_slots(net);
  if (slots.empty()) throw StateError("model has no trainable parameters");

  std::map<std::string, Tensor<T>*> params;
  for (auto& slot : slots) params.emplace(slot.id, slot.tensor);

  NadamState<T> opt_state;
  Rng rng(config.rng_seed);

  const bool augment_on = config.augment_probability > 0;
  // Layers strictly before the first trainable parameter are frozen and see
  // fixed inputs when augmentation is off, so their activations can be
  // computed once per sample and reused every epoch. Identical arithmetic
  // to the uncached path, just not repeated.
  int first_trainable_layer = static_cast<int>(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerKind kind = layer_kind(net.layers[i]);
    if (kind == LayerKind::Scaling || (kind == LayerKind::Dense && net.dense(static_cast<int>(i)).trainable)) {
      first_trainable_layer = static_cast<int>(i);
      break;
    }
  }
  const bool use_cache = !augment_on && first_trainable_layer > 0;
  std::vector<Tensor<T>> prefix_cache;
  if (use_cache) {
    prefix_cache.resize(data.images.size());
    for (size_t i = 0; i < data.images.size(); ++i) {
      if (data.splits[i] == Split::Test) continue;  // not touched during training
      prefix_cache[i] = forward_prefix(net, data.images[i], first_trainable_layer);
    }
  }
  const int start_layer = use_cache ? first_trainable_layer : 0;

  int threads = config.worker_threads;
  if (threads == 0) {
    threads = static_cast<int>(std::min<unsigned>(std::thread::hardware_concurrency(), 8));
    if (threads < 1) threads = 1;
  }

  std::vector<int> order = train_idx;
  std::vector<EpochStats> history;
  history.reserve(static_cast<size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batch_count = 0;

    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      const int n = static_cast<int>(end - begin);

      // Inputs materialize sequentially so augmentation draws stay in
      // sample order regardless of worker count.
      std::vector<const Tensor<T>*> inputs(static_cast<size_t>(n));
      std::vector<Tensor<T>> augmented(static_cast<size_t>(n));
      std::vector<int> labels(static_cast<size_t>(n));
      for (int s = 0; s < n; ++s) {
        const int idx = order[begin + static_cast<size_t>(s)];
        labels[static_cast<size_t>(s)] = data.labels[static_cast<size_t>(idx)];
        if (use_cache) {
          inputs[static_cast<size_t>(s)] = &prefix_cache[static_cast<size_t>(idx)];
        } else if (augment_on) {
          augmented[static_cast<size_t>(s)] = augment(data.images[static_cast<size_t>(idx)], config, rng);
          inputs[static_cast<size_t>(s)] = &augmented[static_cast<size_t>(s)];
        } else {
          inputs[static_cast<size_t>(s)] = &data.images[static_cast<size_t>(idx)];
        }
      }

      LossGradients<T> batch = batch_loss_gradients(net, inputs, labels, config.l1_lambda, start_layer, threads);
      if (!std::isfinite(batch.loss)) {
        throw StateError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_count));
      }

      nadam_step(params, batch.grads, opt_state, config.learning_rate);
      for (const auto& slot : slots) {
        if (slot.is_scaling) *slot.tensor = project_unit_interval(std::move(*slot.tensor));
      }

      epoch_loss += batch.loss;
      ++batch_count;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / std::max(batch_count, 1);

    // Validation AUCs when the split carries both classes; NaN otherwise.
    ScoredSet val_set;
    for (int idx : val_idx) {
      const Tensor<T>& input = use_cache ? prefix_cache[static_cast<size_t>(idx)] : data.images[static_cast<size_t>(idx)];
      Tensor<T> logits = forward_from(net, input, start_layer, static_cast<GradientTape<T>*>(nullptr));
      val_set.scores.push_back(static_cast<double>(sigmoid(logits[0])));
      val_set.labels.push_back(data.labels[static_cast<size_t>(idx)]);
    }
    if (val_set.positives() > 0 && val_set.negatives() > 0) {
      stats.val_auc_roc = roc_auc(val_set);
      stats.val_auc_pr = pr_auc(val_set);
    } else {
      stats.val_auc_roc = std::numeric_limits<double>::quiet_NaN();
      stats.val_auc_pr = std::numeric_limits<double>::quiet_NaN();
    }
    history.push_back(stats);
  }

  result.history = std::move(history);
  return result;
}

template float bce_loss(float, int);
template double bce_loss(double, int);
template float bce_loss_batch(const std::vector<float>&, const std::vector<int>&);
template double bce_loss_batch(const std::vector<double>&, const std::vector<int>&);
template float bce_logit_grad(float, int);
template double bce_logit_grad(double, int);
template float l1_penalty(const std::vector<float>&, float);
template double l1_penalty(const std::vector<double>&, double);
template float l1_penalty(const NetworkModel<float>&, float);
template double l1_penalty(const NetworkModel<double>&, double);
template float l1_subgradient(float, float);
template double l1_subgradient(double, double);
template Tensor<float> project_unit_interval(Tensor<float>);
template Tensor<double> project_unit_interval(Tensor<double>);
template void nadam_step(std::map<std::string, Tensor<float>*>&, const std::map<std::string, Tensor<float>>&,
                         NadamState<float>&, double);
template void nadam_step(std::map<std::string, Tensor<double>*>&, const std::map<std::string, Tensor<double>>&,
                         NadamState<double>&, double);
template Tensor<float> warp_rotate_shift(const Tensor<float>&, double, double, double);
template Tensor<double> warp_rotate_shift(const Tensor<double>&, double, double, double);
template Tensor<float> augment(const Tensor<float>&, const TrainConfig&, Rng&);
template Tensor<double> augment(const Tensor<double>&, const TrainConfig&, Rng&);
template struct LossGradients<float>;
template struct LossGradients<double>;
template LossGradients<float> batch_loss_gradients(const NetworkModel<float>&, const std::vector<const Tensor<float>*>&,
                                                   const std::vector<int>&, double, int, int);
template LossGradients<double> batch_loss_gradients(const NetworkModel<double>&,
                                                    const std::vector<const Tensor<double>*>&, const std::vector<int>&,
                                                    double, int, int);
template struct TrainResult<float>;
template struct TrainResult<double>;
template TrainResult<float> train(const NetworkModel<float>&, const DatasetContainer<float>&, const TrainConfig&);
template TrainResult<double> train(const NetworkModel<double>&, const DatasetContainer<double>&, const TrainConfig&);

}  // namespace cscale
