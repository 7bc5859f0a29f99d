#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscale/network.hpp"
#include "cscale/tensor.hpp"

namespace cscale {

enum class Split { Train, Validation, Test };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitFractions {
  double train = 0.2;
  double validation = 0.1;
  double test = 0.7;

  void validate() const;
};

// Labeled image set with per-sample split assignment. All images share one
// shape; labels are binary. Provenance records how the set was produced
// (generator spec or import source) together with the seed.
template <typename T>
struct DatasetContainer {
  std::vector<Tensor<T>> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::string provenance;
  uint64_t seed = 0;

  int64_t size() const { return static_cast<int64_t>(images.size()); }
  Shape image_shape() const;
  std::vector<int> indices_of(Split split) const;
  void validate() const;

  template <typename U>
  DatasetContainer<U> cast() const {
    DatasetContainer<U> out;
    out.labels = labels;
    out.splits = splits;
    out.provenance = provenance;
    out.seed = seed;
    out.images.reserve(images.size());
    for (const auto& img : images) out.images.push_back(img.template cast<U>());
    return out;
  }
};

// Stratified split assignment. Samples sharing a group id (e.g. a patient)
// land in one split; group ids < 0 mean ungrouped singletons. Within each
// label class, groups are allocated to keep realized split fractions close
// to the targets, which keeps per-split class ratios near the global ratio.
std::vector<Split> assign_splits(const std::vector<int>& labels, const std::vector<int64_t>& group_ids,
                                 const SplitFractions& fractions, Rng& rng);

// Recipe for the planted-feature test bed: a frozen single-conv backbone
// whose channel j reads only image plane j through a matched 3x3 filter.
// Informative planes of positive samples carry stamped copies of their
// channel's filter pattern; every other plane is pure noise, so ground
// truth for channel importance is known by construction.
struct SyntheticSpec {
  int image_size = 16;
  int image_channels = 16;
  int backbone_channels = 16;
  std::vector<int> informative = {0, 1, 2, 3};
  double noise_level = 0.25;
  int stamps_per_image = 3;
  double stamp_amplitude = 3.0;
  int sample_count = 480;
  double positive_fraction = 0.5;
  SplitFractions fractions;

  void validate() const;
};

template <typename T>
struct PlantedDataset {
  DatasetContainer<T> data;
  NetworkModel<T> baseline;        // frozen backbone + seeded head
  std::vector<int> informative;    // ground-truth informative channels
};

template <typename T>
PlantedDataset<T> generate_planted_dataset(const SyntheticSpec& spec, uint64_t seed);

// Imports a directory of PGM/PPM images listed in a labels manifest
// (CSV: filename,label,patient_id). Images are resized to a square
// `image_size` with bilinear interpolation, intensities scaled to [0,1],
// and channel counts normalized to `target_channels` (replicate a single
// plane, or average planes down to one). Splits are stratified by patient
// when ids are present.
DatasetContainer<float> import_dataset(const std::string& directory, const SplitFractions& fractions, int image_size,
                                       int target_channels, uint64_t seed);

// Dataset container format "CSDS": magic, u16 version, text header, then
// CRC32-guarded payloads (labels, splits, image data as f32).
inline constexpr uint16_t kDatasetFormatVersion = 1;

void save_dataset(const DatasetContainer<float>& data, const std::string& path);
DatasetContainer<float> load_dataset(const std::string& path);

}  // namespace cscale
