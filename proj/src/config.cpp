#include "cscale/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cscale {

namespace {

using nlohmann::json;

// Typed field reader with path-qualified error messages.
template <typename V>
void read_field(const json& section, const std::string& path, const char* key, V& out) {
  if (!section.contains(key)) return;
  const json& value = section.at(key);
  try {
    out = value.get<V>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + " has the wrong type: " + value.dump());
  }
}

void read_train(const json& j, const std::string& path, TrainConfig& cfg) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  read_field(j, path, "learning_rate", cfg.learning_rate);
  read_field(j, path, "batch_size", cfg.batch_size);
  read_field(j, path, "epochs", cfg.epochs);
  read_field(j, path, "l1_lambda", cfg.l1_lambda);
  read_field(j, path, "augment_probability", cfg.augment_probability);
  read_field(j, path, "rotation_limit_degrees", cfg.rotation_limit_degrees);
  read_field(j, path, "shift_limit_fraction", cfg.shift_limit_fraction);
  read_field(j, path, "rng_seed", cfg.rng_seed);
  read_field(j, path, "worker_threads", cfg.worker_threads);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"learning_rate", "batch_size",     "epochs",
                                  "l1_lambda",     "augment_probability", "rotation_limit_degrees",
                                  "shift_limit_fraction", "rng_seed", "worker_threads"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(path + "." + it.key() + " is not a recognized field");
  }
}

void read_fractions(const json& j, const std::string& path, SplitFractions& f) {
  read_field(j, path, "train_fraction", f.train);
  read_field(j, path, "validation_fraction", f.validation);
  read_field(j, path, "test_fraction", f.test);
}

json train_to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"l1_lambda", cfg.l1_lambda},
              {"augment_probability", cfg.augment_probability},
              {"rotation_limit_degrees", cfg.rotation_limit_degrees},
              {"shift_limit_fraction", cfg.shift_limit_fraction},
              {"rng_seed", cfg.rng_seed},
              {"worker_threads", cfg.worker_threads}};
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  select.validate();
  synthetic.validate();
  if (dataset.image_size < 1) throw ConfigError("dataset.image_size must be >= 1");
  if (dataset.channels < 1) throw ConfigError("dataset.channels must be >= 1");
  dataset.fractions.validate();
}

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + origin + "': " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("'" + origin + "' must hold a JSON object");

  RunConfig cfg;
  read_field(doc, "config", "seed", cfg.seed);
  if (doc.contains("train")) read_train(doc.at("train"), "train", cfg.train);

  if (doc.contains("select")) {
    const json& s = doc.at("select");
    if (!s.is_object()) throw ConfigError("select must be an object");
    read_field(s, "select", "threshold", cfg.select.threshold);
    read_field(s, "select", "max_iterations", cfg.select.max_iterations);
    read_field(s, "select", "min_removed_per_iteration", cfg.select.min_removed_per_iteration);
    read_field(s, "select", "warm_start_head", cfg.select.warm_start_head);
    read_field(s, "select", "scale_biases_on_fold", cfg.select.scale_biases_on_fold);
    if (s.contains("iteration_train")) read_train(s.at("iteration_train"), "select.iteration_train", cfg.select.iteration_train);
    if (s.contains("final_train")) read_train(s.at("final_train"), "select.final_train", cfg.select.final_train);
  }

  if (doc.contains("synthetic")) {
    const json& s = doc.at("synthetic");
    if (!s.is_object()) throw ConfigError("synthetic must be an object");
    read_field(s, "synthetic", "image_size", cfg.synthetic.image_size);
    read_field(s, "synthetic", "image_channels", cfg.synthetic.image_channels);
    read_field(s, "synthetic", "backbone_channels", cfg.synthetic.backbone_channels);
    read_field(s, "synthetic", "informative", cfg.synthetic.informative);
    read_field(s, "synthetic", "noise_level", cfg.synthetic.noise_level);
    read_field(s, "synthetic", "stamps_per_image", cfg.synthetic.stamps_per_image);
    read_field(s, "synthetic", "stamp_amplitude", cfg.synthetic.stamp_amplitude);
    read_field(s, "synthetic", "sample_count", cfg.synthetic.sample_count);
    read_field(s, "synthetic", "positive_fraction", cfg.synthetic.positive_fraction);
    read_fractions(s, "synthetic", cfg.synthetic.fractions);
  }

  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    if (!d.is_object()) throw ConfigError("dataset must be an object");
    read_field(d, "dataset", "image_size", cfg.dataset.image_size);
    read_field(d, "dataset", "channels", cfg.dataset.channels);
    read_fractions(d, "dataset", cfg.dataset.fractions);
  }

  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << is.rdbuf();
  return from_json_text(buffer.str(), path);
}

std::string RunConfig::to_json_text() const {
  json doc;
  doc["seed"] = seed;
  doc["train"] = train_to_json(train);
  doc["select"] = json{{"threshold", select.threshold},
                       {"max_iterations", select.max_iterations},
                       {"min_removed_per_iteration", select.min_removed_per_iteration},
                       {"warm_start_head", select.warm_start_head},
                       {"scale_biases_on_fold", select.scale_biases_on_fold},
                       {"iteration_train", train_to_json(select.iteration_train)},
                       {"final_train", train_to_json(select.final_train)}};
  doc["synthetic"] = json{{"image_size", synthetic.image_size},
                          {"image_channels", synthetic.image_channels},
                          {"backbone_channels", synthetic.backbone_channels},
                          {"informative", synthetic.informative},
                          {"noise_level", synthetic.noise_level},
                          {"stamps_per_image", synthetic.stamps_per_image},
                          {"stamp_amplitude", synthetic.stamp_amplitude},
                          {"sample_count", synthetic.sample_count},
                          {"positive_fraction", synthetic.positive_fraction},
                          {"train_fraction", synthetic.fractions.train},
                          {"validation_fraction", synthetic.fractions.validation},
                          {"test_fraction", synthetic.fractions.test}};
  doc["dataset"] = json{{"image_size", dataset.image_size},
                        {"channels", dataset.channels},
                        {"train_fraction", dataset.fractions.train},
                        {"validation_fraction", dataset.fractions.validation},
                        {"test_fraction", dataset.fractions.test}};
  return doc.dump(2);
}

std::string apply_config_override(const std::string& json_text, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);

  json doc;
  try {
    doc = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cannot parse config for override: ") + e.what());
  }

  json value;
  try {
    value = json::parse(value_text);
    if (value.is_object() || value.is_array()) {
      // Allow lists (e.g. synthetic.informative=[0,1]) but not objects.
      if (value.is_object()) value = json(value_text);
    }
  } catch (const json::exception&) {
    value = json(value_text);  // plain string
  }

  json* cursor = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override path '" + path + "' has an empty segment");
    parts.push_back(part);
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) cursor = &(*cursor)[parts[i]];
  (*cursor)[parts.back()] = value;
  return doc.dump();
}

void override_all_seeds(RunConfig& config, uint64_t seed) {
  config.seed = seed;
  config.train.rng_seed = seed;
  config.select.iteration_train.rng_seed = seed;
  config.select.final_train.rng_seed = seed;
}

}  // namespace cscale
