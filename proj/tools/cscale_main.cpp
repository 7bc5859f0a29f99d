// Command-line front end: one subcommand per pipeline stage, a JSON config
// file with --set overrides, and a run directory per invocation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cscale/config.hpp"
#include "cscale/error.hpp"
#include "cscale/runner.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_given = false;
};

cscale::RunConfig resolve_config(const CommonOpts& opts) {
  std::string text = "{}";
  if (!opts.config_path.empty()) {
    std::ifstream is(opts.config_path);
    if (!is) throw cscale::IoError("cannot open config '" + opts.config_path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    text = buf.str();
  }
  for (const auto& assignment : opts.overrides) {
    text = cscale::apply_config_override(text, assignment);
  }
  cscale::RunConfig config = cscale::RunConfig::from_json_text(text, opts.config_path.empty() ? "<defaults>" : opts.config_path);
  if (opts.seed_given) cscale::override_all_seeds(config, opts.seed);
  return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "Override a config field, e.g. --set select.max_iterations=5")
      ->take_all();
  cmd->add_option("--seed", opts.seed, "Master seed for all randomness")->each([&opts](const std::string&) {
    opts.seed_given = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-scaling pruning engine for convolutional classifiers"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string out_dir, data_path, model_path, baseline_path, pruned_path, split = "test", manifest_path;
  std::vector<int> sample_indices;
  int cam_count = 4;
  bool resume = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the planted-feature synthetic dataset and toy backbone");
  add_common(gen, opts);
  gen->add_option("--out", out_dir, "Run directory")->required();

  auto* base = app.add_subcommand("train-baseline", "Train the dense head of a frozen baseline model");
  add_common(base, opts);
  base->add_option("--data", data_path, "Dataset container (.cssd)")->required();
  base->add_option("--model", model_path, "Baseline model (.cssm)")->required();
  base->add_option("--out", out_dir, "Run directory")->required();

  auto* select = app.add_subcommand("scale-select", "Iteratively train scaling weights, threshold and prune");
  add_common(select, opts);
  select->add_option("--data", data_path, "Dataset container (.cssd)")->required();
  select->add_option("--model", model_path, "Baseline model (.cssm)")->required();
  select->add_option("--out", out_dir, "Run directory")->required();
  select->add_flag("--resume", resume, "Continue from the run directory's last checkpoint");

  auto* fin = app.add_subcommand("finalize", "Fold trained scaling weights and retrain the head");
  add_common(fin, opts);
  fin->add_option("--data", data_path, "Dataset container (.cssd)")->required();
  fin->add_option("--model", model_path, "Trained scaling-augmented model (.cssm)")->required();
  fin->add_option("--out", out_dir, "Run directory")->required();

  auto* eval = app.add_subcommand("evaluate", "ROC/PR curves and AUCs for a model on one split");
  add_common(eval, opts);
  eval->add_option("--data", data_path, "Dataset container (.cssd)")->required();
  eval->add_option("--model", model_path, "Model (.cssm)")->required();
  eval->add_option("--split", split, "train, validation or test (default test)");
  eval->add_option("--out", out_dir, "Run directory")->required();

  auto* cam = app.add_subcommand("cam", "Grad-CAM heatmaps for selected samples");
  add_common(cam, opts);
  cam->add_option("--data", data_path, "Dataset container (.cssd)")->required();
  cam->add_option("--model", model_path, "Model (.cssm)")->required();
  cam->add_option("--index", sample_indices, "Sample indices (repeatable)")->take_all();
  cam->add_option("--count", cam_count, "When no indices given: first N test samples (default 4)");
  cam->add_option("--out", out_dir, "Run directory")->required();

  auto* report = app.add_subcommand("report", "Channels-per-layer report comparing baseline and pruned models");
  report->add_option("--baseline", baseline_path, "Baseline model (.cssm)")->required();
  report->add_option("--pruned", pruned_path, "Pruned model (.cssm)")->required();
  report->add_option("--out", out_dir, "Run directory")->required();

  auto* rerun = app.add_subcommand("rerun", "Re-execute a run from its manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json of a finished run")->required();
  rerun->add_option("--out", out_dir, "Run directory (defaults to the manifest's directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cscale::run_gen_data(resolve_config(opts), out_dir);
    } else if (base->parsed()) {
      cscale::run_train_baseline(resolve_config(opts), data_path, model_path, out_dir);
    } else if (select->parsed()) {
      cscale::run_scale_select(resolve_config(opts), data_path, model_path, out_dir, resume);
    } else if (fin->parsed()) {
      cscale::run_finalize(resolve_config(opts), data_path, model_path, out_dir);
    } else if (eval->parsed()) {
      cscale::run_evaluate(resolve_config(opts), data_path, model_path, split, out_dir);
    } else if (cam->parsed()) {
      cscale::run_cam(resolve_config(opts), data_path, model_path, sample_indices, cam_count, out_dir);
    } else if (report->parsed()) {
      cscale::run_report(baseline_path, pruned_path, out_dir);
    } else if (rerun->parsed()) {
      cscale::run_from_manifest(manifest_path, out_dir);
    }
  } catch (const cscale::Error& e) {
    std::cerr << "cscale-error: " << e.category() << ": " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cscale-error: internal: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
