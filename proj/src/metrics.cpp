#include "cscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cscale {

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) {
    throw ContractError("scored set has " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(labels.size()) + " labels");
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw ContractError("label at index " + std::to_string(i) + " is " + std::to_string(labels[i]) +
                          ", expected 0 or 1");
    }
    if (std::isnan(scores[i])) throw ContractError("score at index " + std::to_string(i) + " is NaN");
  }
}

int ScoredSet::positives() const { return static_cast<int>(std::count(labels.begin(), labels.end(), 1)); }

int ScoredSet::negatives() const { return static_cast<int>(labels.size()) - positives(); }

double roc_auc(const ScoredSet& set) {
  set.validate();
  const int pos = set.positives();
  const int neg = set.negatives();
  if (pos == 0 || neg == 0) throw ContractError("roc_auc needs both classes, got " + std::to_string(pos) + " positives");

  // Rank-sum (Mann-Whitney) with midranks for ties; exactly equal to pair
  // counting with half credit, every term being a multiple of 1/2.
  const size_t n = set.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return set.scores[a] < set.scores[b]; });

  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (size_t k = i; k < j; ++k) {
      if (set.labels[order[k]] == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

namespace {

// Unique descending thresholds with cumulative true/false positive counts
// at "score >= threshold".
struct ThresholdSweep {
  std::vector<double> thresholds;
  std::vector<int> tp;
  std::vector<int> fp;
};

ThresholdSweep sweep(const ScoredSet& set) {
  const size_t n = set.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return set.scores[a] > set.scores[b]; });

  ThresholdSweep out;
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    const double t = set.scores[order[i]];
    while (i < n && set.scores[order[i]] == t) {
      if (set.labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    out.thresholds.push_back(t);
    out.tp.push_back(tp);
    out.fp.push_back(fp);
  }
  return out;
}

}  // namespace

double pr_auc(const ScoredSet& set) {
  set.validate();
  const int pos = set.positives();
  if (pos == 0) throw ContractError("pr_auc needs at least one positive sample");

  const ThresholdSweep sw = sweep(set);
  double auc = 0.0;
  double prev_recall = 0.0;
  for (size_t k = 0; k < sw.thresholds.size(); ++k) {
    const double precision = static_cast<double>(sw.tp[k]) / (sw.tp[k] + sw.fp[k]);
    const double recall = static_cast<double>(sw.tp[k]) / pos;
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return auc;
}

std::vector<RocPoint> roc_curve(const ScoredSet& set) {
  set.validate();
  const int pos = set.positives();
  const int neg = set.negatives();
  if (pos == 0 || neg == 0) throw ContractError("roc_curve needs both classes");

  const ThresholdSweep sw = sweep(set);
  std::vector<RocPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (size_t k = 0; k < sw.thresholds.size(); ++k) {
    curve.push_back({sw.thresholds[k], static_cast<double>(sw.tp[k]) / pos, static_cast<double>(sw.fp[k]) / neg});
  }
  return curve;
}

std::vector<PrPoint> pr_curve(const ScoredSet& set) {
  set.validate();
  const int pos = set.positives();
  if (pos == 0) throw ContractError("pr_curve needs at least one positive sample");

  const ThresholdSweep sw = sweep(set);
  std::vector<PrPoint> curve;
  for (size_t k = 0; k < sw.thresholds.size(); ++k) {
    curve.push_back({sw.thresholds[k], static_cast<double>(sw.tp[k]) / (sw.tp[k] + sw.fp[k]),
                     static_cast<double>(sw.tp[k]) / pos});
  }
  return curve;
}

std::vector<int64_t> weight_histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw ContractError("histogram needs at least one bin");
  std::vector<int64_t> counts(static_cast<size_t>(bins), 0);
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("histogram value at index " + std::to_string(i) + " = " + std::to_string(v) +
                          " outside [0,1]");
    }
    int bin = static_cast<int>(v * bins);
    if (bin == bins) bin = bins - 1;  // v == 1.0
    ++counts[static_cast<size_t>(bin)];
  }
  return counts;
}

}  // namespace cscale
