#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscale/dataset.hpp"
#include "cscale/select.hpp"
#include "cscale/trainer.hpp"

namespace cscale {

// Import settings for raster datasets.
struct ImportConfig {
  int image_size = 16;
  int channels = 1;
  SplitFractions fractions;
};

// Full run configuration. The JSON file mirrors this struct section by
// section ("train", "select", "synthetic", "dataset", "seed"); every field
// is optional and defaults to the values here. `--set a.b.c=value` command
// line overrides are applied to the JSON document before parsing.
struct RunConfig {
  uint64_t seed = 1;
  TrainConfig train;
  SelectConfig select;
  SyntheticSpec synthetic;
  ImportConfig dataset;

  void validate() const;

  // Parses a JSON document (text), starting from defaults.
  static RunConfig from_json_text(const std::string& text, const std::string& origin);
  static RunConfig load(const std::string& path);

  // Fully resolved configuration as canonical JSON text (sorted keys,
  // deterministic formatting); what the run manifest embeds.
  std::string to_json_text() const;
};

// Applies one "dotted.path=value" override to a JSON document (text in,
// text out). Values parse as JSON scalars when possible, else as strings.
std::string apply_config_override(const std::string& json_text, const std::string& assignment);

// Sets every rng seed field (train, iteration_train, final_train) and the
// master seed; what `--seed` does.
void override_all_seeds(RunConfig& config, uint64_t seed);

}  // namespace cscale
