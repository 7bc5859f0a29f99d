#pragma once

#include <cstdint>
#include <vector>

#include "cscale/error.hpp"

namespace cscale {

// Parallel prediction scores in [0,1] and binary labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const;
  int positives() const;
  int negatives() const;
};

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

struct PrPoint {
  double threshold;
  double precision;
  double recall;
};

// Probability that a random positive outscores a random negative, ties
// counted 1/2 (equivalently the trapezoidal area under the ROC curve).
// Requires at least one sample of each class.
double roc_auc(const ScoredSet& set);

// Area under the precision-recall curve by step-wise summation over
// descending unique score thresholds; no interpolation between points.
// Requires at least one positive.
double pr_auc(const ScoredSet& set);

// Operating points at each unique descending threshold ("score >= t"
// predicts positive). Curves start from the all-negative operating point.
std::vector<RocPoint> roc_curve(const ScoredSet& set);
std::vector<PrPoint> pr_curve(const ScoredSet& set);

// Equal-width histogram of values in [0,1]; the value 1.0 falls in the
// last bin. Throws on out-of-range values.
std::vector<int64_t> weight_histogram(const std::vector<double>& values, int bins = 100);

}  // namespace cscale
