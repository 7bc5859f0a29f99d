#pragma once

#include <vector>

#include "cscale/network.hpp"

namespace cscale {

// Retained channel indices per conv layer, in network order. Indices are
// sorted, unique, and in range; an empty list requests cascade removal of
// that conv layer and everything after it up to the GAP.
struct KeepSet {
  std::vector<std::vector<int>> layers;

  static KeepSet all(const std::vector<int>& widths);
  int total_kept() const;
};

// Deletes the output-channel slices of each conv kernel that are not in
// the keep set, together with the matching biases and the next conv's
// input-channel slices; retained kernel values are bit-identical. Dense
// head rows follow the last conv's keep set, so pruning a channel equals
// evaluating the original network with that channel scaled to zero. An
// empty keep list removes that conv layer and all subsequent conv, pool
// and scaling layers; the dense head is then re-initialized (seeded) at
// the surviving width. Scaling layers are always dropped from the result;
// callers re-attach them for the next iteration.
template <typename T>
NetworkModel<T> select_channels(const NetworkModel<T>& model, const KeepSet& keep, Rng* head_init_rng = nullptr);

// select_channels, then multiplies every retained output-channel kernel
// slice by its trained scaling weight before dropping the scaling layers.
// With `scale_biases` (default) biases are scaled too, which makes folding
// exactly output-preserving under ReLU; disabling it reproduces a
// kernels-only fold. The result trains only the dense head.
template <typename T>
NetworkModel<T> fold_scaling(const NetworkModel<T>& model, const KeepSet& keep, bool scale_biases = true,
                             Rng* head_init_rng = nullptr);

// Re-indexes `second` through `first`: selecting with the result equals
// selecting with `first` and then `second`.
KeepSet compose_keepsets(const KeepSet& first, const KeepSet& second);

}  // namespace cscale
