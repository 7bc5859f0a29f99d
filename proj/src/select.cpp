#include "cscale/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "cscale/autodiff.hpp"
#include "cscale/metrics.hpp"

namespace cscale {

void SelectConfig::validate() const {
  if (threshold < 0 || threshold >= 1) throw ConfigError("select.threshold must lie in [0,1)");
  if (max_iterations < 1) throw ConfigError("select.max_iterations must be >= 1");
  if (min_removed_per_iteration < 0) throw ConfigError("select.min_removed_per_iteration must be >= 0");
  iteration_train.validate();
  final_train.validate();
}

int IterationRecord::total_channels_after() const {
  int total = 0;
  for (int c : channels_after) total += c;
  return total;
}

template <typename T>
std::vector<int> threshold_channels(const Tensor<T>& s, double threshold) {
  std::vector<int> keep;
  for (int64_t i = 0; i < s.size(); ++i) {
    const double v = static_cast<double>(s[i]);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("scaling weight " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    }
    if (v >= threshold) keep.push_back(static_cast<int>(i));
  }
  return keep;
}

namespace {

template <typename T>
ScoredSet score_split(const NetworkModel<T>& model, const DatasetContainer<T>& data, Split split) {
  ScoredSet set;
  for (int idx : data.indices_of(split)) {
    Tensor<T> p = predict_proba(model, data.images[static_cast<size_t>(idx)]);
    set.scores.push_back(static_cast<double>(p[0]));
    set.labels.push_back(data.labels[static_cast<size_t>(idx)]);
  }
  return set;
}

double split_auc_roc(const ScoredSet& set) {
  if (set.positives() == 0 || set.negatives() == 0) return std::numeric_limits<double>::quiet_NaN();
  return roc_auc(set);
}

double split_auc_pr(const ScoredSet& set) {
  if (set.positives() == 0) return std::numeric_limits<double>::quiet_NaN();
  return pr_auc(set);
}

// Concatenated scaling weights in layer order.
template <typename T>
std::vector<double> all_scaling_weights(const NetworkModel<T>& model) {
  std::vector<double> out;
  for (int idx : model.scaling_layer_indices()) {
    const Tensor<T>& s = model.scaling(idx).scale;
    for (int64_t i = 0; i < s.size(); ++i) out.push_back(static_cast<double>(s[i]));
  }
  return out;
}

uint64_t iteration_seed(uint64_t base, int iteration) {
  return Rng::splitmix64(base ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(iteration + 1)));
}

}  // namespace

template <typename T>
ScaleSelectResult<T> scale_select_run(const NetworkModel<T>& model, const DatasetContainer<T>& data,
                                      const SelectConfig& config, const IterationCallback<T>& on_iteration,
                                      int start_iteration, std::vector<IterationRecord> prior_records) {
  config.validate();
  validate_model(model);
  if (model.has_scaling()) throw StateError("scale-select starts from a baseline model without scaling layers");
  if (start_iteration < 0 || start_iteration > config.max_iterations) {
    throw ContractError("start iteration " + std::to_string(start_iteration) + " out of range");
  }

  // Records stay aligned to the original conv topology. Cascade removal
  // only ever deletes a suffix of conv layers, so surviving layers keep
  // their original ordinals.
  size_t original_convs = prior_records.empty() ? count_channels(model).size() : prior_records.front().channels_before.size();

  ScaleSelectResult<T> result{model, {}, std::move(prior_records)};
  NetworkModel<T>& current = result.pruned;

  for (int iteration = start_iteration; iteration < config.max_iterations; ++iteration) {
    if (current.conv_layer_indices().empty()) {
      throw StateError("all conv layers were cascade-removed; the network is empty");
    }
    const uint64_t seed = iteration_seed(config.iteration_train.rng_seed, iteration);
    Rng iter_rng(seed);

    NetworkModel<T> augmented = attach_scaling(current);
    if (!config.warm_start_head) {
      const int head = augmented.dense_layer_index();
      const auto& old_head = augmented.dense(head);
      augmented.layers[static_cast<size_t>(head)] =
          make_dense_head<T>(old_head.weight.extent(0), old_head.weight.extent(1), iter_rng);
    }

    TrainConfig iter_cfg = config.iteration_train;
    iter_cfg.rng_seed = seed;
    TrainResult<T> trained = train(augmented, data, iter_cfg);

    IterationRecord record;
    record.iteration = iteration;
    record.trainable_params = count_parameters(augmented).trainable;

    const std::vector<int> before = count_channels(current);
    record.channels_before.assign(original_convs, 0);
    record.channels_after.assign(original_convs, 0);
    for (size_t l = 0; l < before.size(); ++l) record.channels_before[l] = before[l];

    record.histogram = weight_histogram(all_scaling_weights(trained.model), kHistogramBins);

    const ScoredSet val = score_split(trained.model, data, Split::Validation);
    record.val_auc_roc = split_auc_roc(val);
    record.val_auc_pr = split_auc_pr(val);

    record.keep.layers.clear();
    int conv_ordinal = 0;
    for (int idx : trained.model.conv_layer_indices()) {
      const int scaling_idx = idx + 1;  // attach_scaling guarantees placement
      record.keep.layers.push_back(
          threshold_channels(trained.model.scaling(scaling_idx).scale, config.threshold));
      record.channels_after[static_cast<size_t>(conv_ordinal)] =
          static_cast<int>(record.keep.layers.back().size());
      ++conv_ordinal;
    }
    // Channels after a cascade point never survive.
    bool cascade = false;
    for (size_t l = 0; l < record.keep.layers.size(); ++l) {
      if (cascade) {
        record.keep.layers[l].clear();
        record.channels_after[l] = 0;
      } else if (record.keep.layers[l].empty()) {
        cascade = true;
      }
    }

    if (record.keep.layers.front().empty()) {
      throw StateError("iteration " + std::to_string(iteration) + " removed every channel of the first conv layer");
    }

    NetworkModel<T> pruned = select_channels(trained.model, record.keep, &iter_rng);
    pruned.metadata.iteration = iteration + 1;

    const int removed = [&] {
      int total_before = 0, total_after = 0;
      for (size_t l = 0; l < original_convs; ++l) {
        total_before += record.channels_before[l];
        total_after += record.channels_after[l];
      }
      return total_before - total_after;
    }();

    result.records.push_back(record);
    result.last_augmented = trained.model;
    current = std::move(pruned);
    if (on_iteration) on_iteration(result.records.back(), current, result.last_augmented);

    if (removed < config.min_removed_per_iteration) break;
  }
  return result;
}

template <typename T>
FinalizeResult<T> finalize(const NetworkModel<T>& model_with_scaling, const DatasetContainer<T>& data,
                           const SelectConfig& config) {
  config.validate();
  if (!model_with_scaling.has_scaling()) {
    throw StateError("finalize requires a model trained with scaling layers");
  }

  FinalizeResult<T> result;
  result.keep.layers.clear();
  for (int idx : model_with_scaling.conv_layer_indices()) {
    if (idx + 1 >= static_cast<int>(model_with_scaling.layers.size()) ||
        layer_kind(model_with_scaling.layers[static_cast<size_t>(idx + 1)]) != LayerKind::Scaling) {
      throw StateError("conv layer " + std::to_string(idx) + " has no scaling layer to fold");
    }
    result.keep.layers.push_back(
        threshold_channels(model_with_scaling.scaling(idx + 1).scale, config.threshold));
  }
  bool cascade = false;
  for (auto& layer_keep : result.keep.layers) {
    if (cascade) layer_keep.clear();
    if (layer_keep.empty()) cascade = true;
  }
  if (result.keep.layers.front().empty()) {
    throw StateError("finalize would remove every channel of the first conv layer");
  }

  Rng head_rng(Rng::splitmix64(config.final_train.rng_seed ^ 0xf01dab1e5ca1e5ull));
  NetworkModel<T> folded =
      fold_scaling(model_with_scaling, result.keep, config.scale_biases_on_fold, &head_rng);
  folded.metadata.iteration = model_with_scaling.metadata.iteration;

  if (config.final_train.epochs > 0) {
    TrainResult<T> trained = train(folded, data, config.final_train);
    result.model = std::move(trained.model);
    result.history = std::move(trained.history);
  } else {
    result.model = std::move(folded);
  }
  return result;
}

template <typename T>
OracleResult exhaustive_selection_oracle(const NetworkModel<T>& model, const DatasetContainer<T>& data,
                                         const TrainConfig& head_config) {
  validate_model(model);
  if (model.has_scaling()) throw StateError("the selection oracle expects a baseline model");
  const std::vector<int> widths = count_channels(model);
  int total = 0;
  for (int w : widths) total += w;
  if (total > kOracleChannelCap) {
    throw ContractError("exhaustive oracle supports at most " + std::to_string(kOracleChannelCap) +
                        " channels, model has " + std::to_string(total));
  }

  OracleResult best;
  bool have_best = false;
  std::vector<int> best_flat;

  const uint64_t masks = uint64_t{1} << total;
  for (uint64_t mask = 0; mask < masks; ++mask) {
    KeepSet keep;
    keep.layers.resize(widths.size());
    int bit = 0;
    for (size_t l = 0; l < widths.size(); ++l) {
      for (int c = 0; c < widths[l]; ++c, ++bit) {
        if (mask & (uint64_t{1} << bit)) keep.layers[l].push_back(c);
      }
    }

    // Fresh deterministic head per candidate, then head-only retraining.
    Rng rng(Rng::splitmix64(head_config.rng_seed ^ (mask * 0x2545f4914f6cdd1dull + 1)));
    NetworkModel<T> pruned = select_channels(model, keep, &rng);
    {
      const int head = pruned.dense_layer_index();
      const auto& old_head = pruned.dense(head);
      pruned.layers[static_cast<size_t>(head)] =
          make_dense_head<T>(old_head.weight.extent(0), old_head.weight.extent(1), rng);
    }
    TrainConfig cfg = head_config;
    cfg.rng_seed = Rng::splitmix64(head_config.rng_seed ^ mask);
    TrainResult<T> trained = train(pruned, data, cfg);

    const ScoredSet val = score_split(trained.model, data, Split::Validation);
    const double auc = split_auc_roc(val);
    if (std::isnan(auc)) throw StateError("oracle validation split lacks one of the classes");

    std::vector<int> flat;
    int base = 0;
    for (size_t l = 0; l < keep.layers.size(); ++l) {
      for (int c : keep.layers[l]) flat.push_back(base + c);
      base += widths[l];
    }

    const bool better = [&] {
      if (!have_best) return true;
      if (auc != best.best_auc) return auc > best.best_auc;
      if (flat.size() != best_flat.size()) return flat.size() < best_flat.size();
      return flat < best_flat;
    }();
    if (better) {
      best.best_auc = auc;
      best.best_keep = keep;
      best_flat = flat;
      have_best = true;
    }
  }
  return best;
}

namespace {

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_iteration_records_csv(const std::vector<IterationRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "iteration,total_channels,auc_roc,auc_pr,trainable_params\n";
  for (const auto& r : records) {
    os << r.iteration << "," << r.total_channels_after() << "," << format_metric(r.val_auc_roc) << ","
       << format_metric(r.val_auc_pr) << "," << r.trainable_params << "\n";
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<IterationRecord> read_iteration_records_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  std::vector<IterationRecord> records;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("iteration CSV '" + path + "' is empty");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    IterationRecord r;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    r.iteration = std::stoi(field);
    std::getline(ss, field, ',');  // total_channels (derived)
    std::getline(ss, field, ',');
    r.val_auc_roc = std::stod(field);
    std::getline(ss, field, ',');
    r.val_auc_pr = std::stod(field);
    if (!std::getline(ss, field, ',')) throw FormatError("iteration CSV line is missing fields: '" + line + "'");
    r.trainable_params = std::stoll(field);
    records.push_back(std::move(r));
  }
  return records;
}

void write_histogram_csv(const IterationRecord& record, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "bin_low,bin_high,count\n";
  const int bins = static_cast<int>(record.histogram.size());
  for (int b = 0; b < bins; ++b) {
    char low[32], high[32];
    std::snprintf(low, sizeof(low), "%.4f", static_cast<double>(b) / bins);
    std::snprintf(high, sizeof(high), "%.4f", static_cast<double>(b + 1) / bins);
    os << low << "," << high << "," << record.histogram[static_cast<size_t>(b)] << "\n";
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

void write_keepset(const KeepSet& keep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (size_t l = 0; l < keep.layers.size(); ++l) {
    os << "layer " << l << ":";
    for (int c : keep.layers[l]) os << " " << c;
    os << "\n";
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

KeepSet read_keepset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  KeepSet keep;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string word;
    size_t layer = 0;
    char colon = 0;
    if (!(ss >> word >> layer >> colon) || word != "layer" || colon != ':') {
      throw FormatError("malformed keep-set line: '" + line + "'");
    }
    if (keep.layers.size() <= layer) keep.layers.resize(layer + 1);
    int idx;
    while (ss >> idx) keep.layers[layer].push_back(idx);
  }
  return keep;
}

template std::vector<int> threshold_channels(const Tensor<float>&, double);
template std::vector<int> threshold_channels(const Tensor<double>&, double);
template struct ScaleSelectResult<float>;
template struct ScaleSelectResult<double>;
template ScaleSelectResult<float> scale_select_run(const NetworkModel<float>&, const DatasetContainer<float>&,
                                                   const SelectConfig&, const IterationCallback<float>&, int,
                                                   std::vector<IterationRecord>);
template ScaleSelectResult<double> scale_select_run(const NetworkModel<double>&, const DatasetContainer<double>&,
                                                    const SelectConfig&, const IterationCallback<double>&, int,
                                                    std::vector<IterationRecord>);
template struct FinalizeResult<float>;
template struct FinalizeResult<double>;
template FinalizeResult<float> finalize(const NetworkModel<float>&, const DatasetContainer<float>&,
                                        const SelectConfig&);
template FinalizeResult<double> finalize(const NetworkModel<double>&, const DatasetContainer<double>&,
                                         const SelectConfig&);
template OracleResult exhaustive_selection_oracle(const NetworkModel<float>&, const DatasetContainer<float>&,
                                                  const TrainConfig&);
template OracleResult exhaustive_selection_oracle(const NetworkModel<double>&, const DatasetContainer<double>&,
                                                  const TrainConfig&);

}  // namespace cscale
