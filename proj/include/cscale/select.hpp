#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cscale/dataset.hpp"
#include "cscale/network.hpp"
#include "cscale/surgery.hpp"
#include "cscale/trainer.hpp"

namespace cscale {

struct SelectConfig {
  // Channels with trained s strictly below the threshold are removed; a
  // weight exactly at the threshold survives. 0 disables removal.
  double threshold = 0.01;
  int max_iterations = 15;
  // Stop when an iteration removes fewer channels than this.
  int min_removed_per_iteration = 1;
  // Carry the dense head between iterations when shapes match; otherwise
  // (or when disabled) the head is re-initialized from the iteration seed.
  bool warm_start_head = true;
  // Fold biases together with kernels, which makes folding exactly
  // output-preserving; disable for a kernels-only fold.
  bool scale_biases_on_fold = true;
  TrainConfig iteration_train;
  TrainConfig final_train;

  void validate() const;
};

inline constexpr int kHistogramBins = 100;

struct IterationRecord {
  int iteration = 0;
  // Aligned to the original conv topology; cascade-removed layers read 0.
  std::vector<int> channels_before;
  std::vector<int> channels_after;
  // Keep lists for the conv layers present at this iteration's start.
  KeepSet keep;
  std::vector<int64_t> histogram;  // scaling weights, 100 bins over [0,1]
  double val_auc_roc = 0.0;
  double val_auc_pr = 0.0;
  int64_t trainable_params = 0;

  int total_channels_after() const;
};

// keep = { i : s_i >= threshold }; empty keep signals cascade removal.
template <typename T>
std::vector<int> threshold_channels(const Tensor<T>& s, double threshold);

template <typename T>
struct ScaleSelectResult {
  NetworkModel<T> pruned;          // baseline-form model after the last iteration
  NetworkModel<T> last_augmented;  // trained augmented model of the last iteration
  std::vector<IterationRecord> records;
};

// Called after each iteration with the record, the pruned model and the
// trained augmented model; the CLI uses it to write checkpoints.
template <typename T>
using IterationCallback =
    std::function<void(const IterationRecord&, const NetworkModel<T>&, const NetworkModel<T>&)>;

// The iterative procedure: attach scaling (s = 1), train, record metrics
// and the weight histogram, threshold, prune; repeats until
// max_iterations or until fewer than min_removed_per_iteration channels
// fall. `start_iteration`/`prior_records` resume an interrupted run from
// its last pruned checkpoint.
template <typename T>
ScaleSelectResult<T> scale_select_run(const NetworkModel<T>& model, const DatasetContainer<T>& data,
                                      const SelectConfig& config, const IterationCallback<T>& on_iteration = {},
                                      int start_iteration = 0, std::vector<IterationRecord> prior_records = {});

template <typename T>
struct FinalizeResult {
  NetworkModel<T> model;
  KeepSet keep;
  std::vector<EpochStats> history;
};

// Produces the final model from a trained scaling-augmented network:
// threshold, fold the surviving scales into kernels (and biases), drop all
// scaling layers, then retrain only the dense head.
template <typename T>
FinalizeResult<T> finalize(const NetworkModel<T>& model_with_scaling, const DatasetContainer<T>& data,
                           const SelectConfig& config);

struct OracleResult {
  KeepSet best_keep;
  double best_auc = 0.0;
};

// Brute-force reference for tiny instances: enumerates every keep set over
// at most `kOracleChannelCap` total channels, retrains the dense head for
// each, and returns the keep set with the best validation AUC (ties:
// smallest set, then lexicographically smallest index list).
inline constexpr int kOracleChannelCap = 12;

template <typename T>
OracleResult exhaustive_selection_oracle(const NetworkModel<T>& model, const DatasetContainer<T>& data,
                                         const TrainConfig& head_config);

// Iteration records as CSV: iteration,total_channels,auc_roc,auc_pr,trainable_params.
void write_iteration_records_csv(const std::vector<IterationRecord>& records, const std::string& path);
std::vector<IterationRecord> read_iteration_records_csv(const std::string& path);

// Histogram CSV: bin_low,bin_high,count.
void write_histogram_csv(const IterationRecord& record, const std::string& path);

// Keep sets as structured text, one "layer <i>:" line per conv layer.
void write_keepset(const KeepSet& keep, const std::string& path);
KeepSet read_keepset(const std::string& path);

}  // namespace cscale
