#include "cscale/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cscale/autodiff.hpp"
#include "cscale/cam.hpp"
#include "cscale/image_io.hpp"
#include "cscale/metrics.hpp"
#include "cscale/model_io.hpp"

namespace cscale {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string two_digits(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", n);
  return buf;
}

std::string four_digits(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", n);
  return buf;
}

}  // namespace

RunPaths prepare_run_dir(const std::string& directory) {
  RunPaths paths;
  paths.root = directory;
  paths.checkpoints = (fs::path(directory) / "checkpoints").string();
  paths.reports = (fs::path(directory) / "reports").string();
  paths.heatmaps = (fs::path(directory) / "heatmaps").string();
  paths.manifest = (fs::path(directory) / "manifest.json").string();
  std::error_code ec;
  fs::create_directories(paths.checkpoints, ec);
  fs::create_directories(paths.reports, ec);
  fs::create_directories(paths.heatmaps, ec);
  if (!fs::exists(paths.checkpoints) || !fs::exists(paths.reports) || !fs::exists(paths.heatmaps)) {
    throw IoError("cannot create run directory '" + directory + "'");
  }
  return paths;
}

void write_manifest(const RunPaths& paths, const std::string& command, const RunConfig& config,
                    const std::map<std::string, std::string>& inputs) {
  json doc;
  doc["command"] = command;
  doc["config"] = json::parse(config.to_json_text());
  doc["inputs"] = json::object();
  for (const auto& [key, value] : inputs) doc["inputs"][key] = value;
  doc["formats"] = json{{"model", kModelFormatVersion}, {"dataset", kDatasetFormatVersion}};

  std::ofstream os(paths.manifest);
  if (!os) throw IoError("cannot write manifest '" + paths.manifest + "'");
  os << doc.dump(2) << "\n";
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "epoch,train_loss,val_auc_roc,val_auc_pr\n";
  for (const auto& row : history) {
    os << row.epoch << "," << fmt(row.train_loss) << "," << fmt(row.val_auc_roc) << "," << fmt(row.val_auc_pr)
       << "\n";
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

void run_gen_data(const RunConfig& config, const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  PlantedDataset<float> planted = generate_planted_dataset<float>(config.synthetic, config.seed);

  const std::string data_path = (fs::path(paths.root) / "dataset.cssd").string();
  save_dataset(planted.data, data_path);
  const std::string model_path = (fs::path(paths.checkpoints) / "backbone.cssm").string();
  save_model(planted.baseline, model_path);

  std::ofstream truth((fs::path(paths.reports) / "ground_truth.csv").string());
  truth << "channel,informative\n";
  for (int c = 0; c < config.synthetic.backbone_channels; ++c) {
    const bool info =
        std::find(planted.informative.begin(), planted.informative.end(), c) != planted.informative.end();
    truth << c << "," << (info ? 1 : 0) << "\n";
  }

  write_manifest(paths, "gen-data", config, {});
}

void run_train_baseline(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                        const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  DatasetContainer<float> data = load_dataset(data_path);
  NetworkModel<float> model = load_model(model_path);

  TrainResult<float> result = train(model, data, config.train);
  save_model(result.model, (fs::path(paths.checkpoints) / "baseline.cssm").string());
  write_history_csv(result.history, (fs::path(paths.reports) / "history.csv").string());
  write_manifest(paths, "train-baseline", config, {{"data", data_path}, {"model", model_path}});
}

namespace {

// Reconstructs the records of an interrupted run from its keep-set files
// and iteration CSV so the loop can continue where it stopped.
std::vector<IterationRecord> reload_records(const RunPaths& paths, const std::vector<int>& baseline_widths) {
  std::vector<IterationRecord> records =
      read_iteration_records_csv((fs::path(paths.reports) / "iterations.csv").string());
  std::vector<int> before(baseline_widths);
  for (auto& record : records) {
    record.keep = read_keepset((fs::path(paths.reports) / ("keepset_" + two_digits(record.iteration) + ".txt")).string());
    record.channels_before.assign(baseline_widths.size(), 0);
    record.channels_after.assign(baseline_widths.size(), 0);
    for (size_t l = 0; l < before.size(); ++l) record.channels_before[l] = before[l];
    for (size_t l = 0; l < record.keep.layers.size(); ++l) {
      record.channels_after[l] = static_cast<int>(record.keep.layers[l].size());
    }
    std::vector<int> next;
    for (const auto& lk : record.keep.layers) {
      if (lk.empty()) break;
      next.push_back(static_cast<int>(lk.size()));
    }
    before = std::move(next);
  }
  return records;
}

}  // namespace

void run_scale_select(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                      const std::string& out_dir, bool resume) {
  const RunPaths paths = prepare_run_dir(out_dir);
  DatasetContainer<float> data = load_dataset(data_path);
  NetworkModel<float> baseline = load_model(model_path);

  std::vector<IterationRecord> prior;
  NetworkModel<float> start_model = baseline;
  int start_iteration = 0;
  if (resume) {
    prior = reload_records(paths, count_channels(baseline));
    if (!prior.empty()) {
      start_iteration = prior.back().iteration + 1;
      start_model = load_model(
          (fs::path(paths.checkpoints) / ("iteration_" + two_digits(prior.back().iteration) + ".cssm")).string());
    }
  }

  auto on_iteration = [&](const IterationRecord& record, const NetworkModel<float>& pruned,
                          const NetworkModel<float>& augmented) {
    const std::string tag = two_digits(record.iteration);
    save_model(pruned, (fs::path(paths.checkpoints) / ("iteration_" + tag + ".cssm")).string());
    save_model(augmented, (fs::path(paths.checkpoints) / ("augmented_" + tag + ".cssm")).string());
    write_keepset(record.keep, (fs::path(paths.reports) / ("keepset_" + tag + ".txt")).string());
    write_histogram_csv(record, (fs::path(paths.reports) / ("histogram_" + tag + ".csv")).string());
  };

  ScaleSelectResult<float> result =
      scale_select_run(start_model, data, config.select, IterationCallback<float>(on_iteration), start_iteration,
                       std::move(prior));

  write_iteration_records_csv(result.records, (fs::path(paths.reports) / "iterations.csv").string());
  save_model(result.pruned, (fs::path(paths.checkpoints) / "selected.cssm").string());
  if (!result.records.empty() && result.records.back().iteration >= start_iteration) {
    save_model(result.last_augmented, (fs::path(paths.checkpoints) / "augmented_last.cssm").string());
  }
  write_manifest(paths, "scale-select", config, {{"data", data_path}, {"model", model_path}});
}

void run_finalize(const RunConfig& config, const std::string& data_path, const std::string& augmented_model_path,
                  const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  DatasetContainer<float> data = load_dataset(data_path);
  NetworkModel<float> augmented = load_model(augmented_model_path);

  FinalizeResult<float> result = finalize(augmented, data, config.select);
  save_model(result.model, (fs::path(paths.checkpoints) / "final.cssm").string());
  write_keepset(result.keep, (fs::path(paths.reports) / "keepset.txt").string());
  write_history_csv(result.history, (fs::path(paths.reports) / "history.csv").string());
  write_manifest(paths, "finalize", config, {{"data", data_path}, {"model", augmented_model_path}});
}

void run_evaluate(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                  const std::string& split_text, const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  DatasetContainer<float> data = load_dataset(data_path);
  NetworkModel<float> model = load_model(model_path);
  const Split split = parse_split(split_text);

  ScoredSet set;
  for (int idx : data.indices_of(split)) {
    Tensor<float> p = predict_proba(model, data.images[static_cast<size_t>(idx)]);
    set.scores.push_back(static_cast<double>(p[0]));
    set.labels.push_back(data.labels[static_cast<size_t>(idx)]);
  }
  if (set.scores.empty()) throw StateError("split '" + split_text + "' is empty");

  {
    std::ofstream os((fs::path(paths.reports) / "roc_curve.csv").string());
    os << "threshold,tpr,fpr\n";
    for (const auto& pt : roc_curve(set)) {
      os << fmt(pt.threshold) << "," << fmt(pt.tpr) << "," << fmt(pt.fpr) << "\n";
    }
  }
  {
    std::ofstream os((fs::path(paths.reports) / "pr_curve.csv").string());
    os << "threshold,precision,recall\n";
    for (const auto& pt : pr_curve(set)) {
      os << fmt(pt.threshold) << "," << fmt(pt.precision) << "," << fmt(pt.recall) << "\n";
    }
  }
  {
    std::ofstream os((fs::path(paths.reports) / "metrics.csv").string());
    os << "split,samples,positives,auc_roc,auc_pr\n";
    os << split_text << "," << set.scores.size() << "," << set.positives() << "," << fmt(roc_auc(set)) << ","
       << fmt(pr_auc(set)) << "\n";
  }
  write_manifest(paths, "evaluate", config, {{"data", data_path}, {"model", model_path}, {"split", split_text}});
}

void run_cam(const RunConfig& config, const std::string& data_path, const std::string& model_path,
             const std::vector<int>& sample_indices, int count, const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  DatasetContainer<float> data = load_dataset(data_path);
  NetworkModel<float> model = load_model(model_path);

  std::vector<int> indices = sample_indices;
  if (indices.empty()) {
    for (int idx : data.indices_of(Split::Test)) {
      indices.push_back(idx);
      if (static_cast<int>(indices.size()) >= count) break;
    }
  }
  for (int idx : indices) {
    if (idx < 0 || idx >= data.size()) {
      throw ContractError("sample index " + std::to_string(idx) + " out of range for " + std::to_string(data.size()) +
                          " samples");
    }
  }

  for (int idx : indices) {
    const Tensor<float>& image = data.images[static_cast<size_t>(idx)];
    Heatmap<float> heat = grad_cam(model, image, 0);
    const std::string tag = four_digits(idx);

    write_pgm((fs::path(paths.heatmaps) / ("sample_" + tag + "_cam.pgm")).string(), heat.upsampled);

    // Display intensity: channel mean, min-max normalized per image.
    const int h = image.extent(0), w = image.extent(1), c = image.extent(2);
    Tensor<float> gray(Shape{h, w});
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
      float acc = 0.0f;
      for (int ch = 0; ch < c; ++ch) acc += image[p * c + ch];
      gray[p] = acc / static_cast<float>(c);
      lo = std::min(lo, gray[p]);
      hi = std::max(hi, gray[p]);
    }
    if (hi > lo) {
      for (int64_t p = 0; p < gray.size(); ++p) gray[p] = (gray[p] - lo) / (hi - lo);
    }
    write_pgm((fs::path(paths.heatmaps) / ("sample_" + tag + "_input.pgm")).string(), gray);

    // Overlay: half input intensity, half jet-mapped heat.
    const auto& palette = jet_palette();
    Tensor<float> overlay(Shape{h, w, 3});
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
      const int level = std::clamp(static_cast<int>(std::lround(heat.upsampled[p] * 255.0f)), 0, 255);
      for (int ch = 0; ch < 3; ++ch) {
        overlay[p * 3 + ch] =
            0.5f * gray[p] + 0.5f * static_cast<float>(palette[static_cast<size_t>(level)][static_cast<size_t>(ch)]) / 255.0f;
      }
    }
    write_ppm((fs::path(paths.heatmaps) / ("sample_" + tag + "_overlay.ppm")).string(), overlay);
  }

  write_manifest(paths, "cam", config, {{"data", data_path}, {"model", model_path}});
}

void run_report(const std::string& baseline_model_path, const std::string& pruned_model_path,
                const std::string& out_dir) {
  const RunPaths paths = prepare_run_dir(out_dir);
  NetworkModel<float> baseline = load_model(baseline_model_path);
  NetworkModel<float> pruned = load_model(pruned_model_path);

  const std::vector<int> original = count_channels(baseline);
  std::vector<int> remaining = count_channels(pruned);
  remaining.resize(original.size(), 0);
  channels_per_layer_report(baseline, pruned);  // validates comparability

  std::ofstream os((fs::path(paths.reports) / "channels_per_layer.csv").string());
  if (!os) throw IoError("cannot write channel report");
  os << "layer_index,original_channels,remaining_channels\n";
  for (size_t l = 0; l < original.size(); ++l) {
    os << l << "," << original[l] << "," << remaining[l] << "\n";
  }

  RunConfig config;
  write_manifest(paths, "report", config,
                 {{"baseline", baseline_model_path}, {"pruned", pruned_model_path}});
}

void run_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest '" + manifest_path + "'");
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw FormatError(std::string("cannot parse manifest: ") + e.what());
  }

  const std::string command = doc.value("command", "");
  RunConfig config = RunConfig::from_json_text(doc.at("config").dump(), manifest_path);
  const json inputs = doc.value("inputs", json::object());
  const std::string target =
      out_dir.empty() ? fs::path(manifest_path).parent_path().string() : out_dir;

  auto input = [&](const char* key) {
    if (!inputs.contains(key)) throw FormatError("manifest lacks input '" + std::string(key) + "'");
    return inputs.at(key).get<std::string>();
  };

  if (command == "gen-data") {
    run_gen_data(config, target);
  } else if (command == "train-baseline") {
    run_train_baseline(config, input("data"), input("model"), target);
  } else if (command == "scale-select") {
    run_scale_select(config, input("data"), input("model"), target, false);
  } else if (command == "finalize") {
    run_finalize(config, input("data"), input("model"), target);
  } else if (command == "evaluate") {
    run_evaluate(config, input("data"), input("model"), input("split"), target);
  } else if (command == "cam") {
    run_cam(config, input("data"), input("model"), {}, 4, target);
  } else if (command == "report") {
    run_report(input("baseline"), input("pruned"), target);
  } else {
    throw FormatError("manifest names unknown command '" + command + "'");
  }
}

}  // namespace cscale
