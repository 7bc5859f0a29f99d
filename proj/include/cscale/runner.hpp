#pragma once

#include <map>
#include <string>
#include <vector>

#include "cscale/config.hpp"

namespace cscale {

// Run-directory layout shared by every command:
//   <run>/manifest.json   resolved config + command + input paths
//   <run>/checkpoints/    model files (CSSM)
//   <run>/reports/        CSV reports and keep sets
//   <run>/heatmaps/       PGM/PPM heatmap images
struct RunPaths {
  std::string root;
  std::string checkpoints;
  std::string reports;
  std::string heatmaps;
  std::string manifest;
};

RunPaths prepare_run_dir(const std::string& directory);

// The manifest alone re-executes the run (see run_from_manifest): it
// embeds the command, the fully resolved config, and all input paths.
void write_manifest(const RunPaths& paths, const std::string& command, const RunConfig& config,
                    const std::map<std::string, std::string>& inputs);

// Command bodies. Each writes its outputs under `out_dir` and returns the
// paths it produced (informational).
void run_gen_data(const RunConfig& config, const std::string& out_dir);
void run_train_baseline(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                        const std::string& out_dir);
void run_scale_select(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                      const std::string& out_dir, bool resume = false);
void run_finalize(const RunConfig& config, const std::string& data_path, const std::string& augmented_model_path,
                  const std::string& out_dir);
void run_evaluate(const RunConfig& config, const std::string& data_path, const std::string& model_path,
                  const std::string& split, const std::string& out_dir);
void run_cam(const RunConfig& config, const std::string& data_path, const std::string& model_path,
             const std::vector<int>& sample_indices, int count, const std::string& out_dir);
void run_report(const std::string& baseline_model_path, const std::string& pruned_model_path,
                const std::string& out_dir);

// Re-executes a finished run from its manifest; outputs land in `out_dir`
// (defaults to the manifest's own directory when empty).
void run_from_manifest(const std::string& manifest_path, const std::string& out_dir);

// Training history CSV: epoch,train_loss,val_auc_roc,val_auc_pr.
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace cscale
