// Acceptance suite: one check per release criterion, each printing a
// single [PASS]/[FAIL] line. Returns nonzero if any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <vector>

#include "cscale/autodiff.hpp"
#include "cscale/cam.hpp"
#include "cscale/config.hpp"
#include "cscale/finite_diff.hpp"
#include "cscale/metrics.hpp"
#include "cscale/model_io.hpp"
#include "cscale/runner.hpp"
#include "cscale/select.hpp"
#include "cscale/surgery.hpp"
#include "cscale/trainer.hpp"
#include "helpers.hpp"

using namespace cscale;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail, double seconds) {
  std::printf("[%s] criterion %d: %s (%s, %.1fs)\n", pass ? "PASS" : "FAIL", index, name.c_str(), detail.c_str(),
              seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run_criterion(int index, const std::string& name, const std::function<bool(std::string&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(index, name, pass, detail, seconds);
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Planted task shared by the training-based criteria: 16 channels, 4
// informative.
SyntheticSpec planted16_spec() {
  SyntheticSpec spec;
  spec.image_size = 12;
  spec.image_channels = 16;
  spec.backbone_channels = 16;
  spec.informative = {0, 1, 2, 3};
  spec.noise_level = 0.15;
  spec.stamps_per_image = 3;
  spec.stamp_amplitude = 3.0;
  spec.sample_count = 240;
  spec.fractions = {0.4, 0.2, 0.4};
  return spec;
}

TrainConfig desk_train(uint64_t seed, double lambda, int epochs) {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 16;
  cfg.epochs = epochs;
  cfg.l1_lambda = lambda;
  cfg.augment_probability = 0.0;
  cfg.rng_seed = seed;
  return cfg;
}

SelectConfig desk_select(uint64_t seed, double lambda) {
  SelectConfig cfg;
  cfg.threshold = 0.01;
  cfg.max_iterations = 10;
  cfg.min_removed_per_iteration = 1;
  cfg.iteration_train = desk_train(seed, lambda, 40);
  cfg.final_train = desk_train(seed + 1, 0.0, 40);
  return cfg;
}

struct PlantedRunOutcome {
  std::vector<IterationRecord> records;
  std::vector<int> final_channels;   // per layer
  bool informative_survived = true;
  int uninformative_removed = 0;
  double final_val_auc = 0.0;
};

PlantedRunOutcome planted_scale_select(uint64_t seed, double lambda) {
  const SyntheticSpec spec = planted16_spec();
  PlantedDataset<float> planted = generate_planted_dataset<float>(spec, seed);
  SelectConfig cfg = desk_select(seed, lambda);

  ScaleSelectResult<float> run = scale_select_run(planted.baseline, planted.data, cfg);

  PlantedRunOutcome outcome;
  outcome.records = run.records;
  outcome.final_channels = run.records.back().channels_after;

  // Surviving original channel ids: compose the per-iteration keep sets.
  std::vector<int> survivors(static_cast<size_t>(spec.backbone_channels));
  for (int i = 0; i < spec.backbone_channels; ++i) survivors[static_cast<size_t>(i)] = i;
  for (const auto& record : run.records) {
    std::vector<int> next;
    for (int idx : record.keep.layers[0]) next.push_back(survivors[static_cast<size_t>(idx)]);
    survivors = std::move(next);
  }
  for (int informative : planted.informative) {
    if (std::find(survivors.begin(), survivors.end(), informative) == survivors.end()) {
      outcome.informative_survived = false;
    }
  }
  const int uninformative_total = spec.backbone_channels - static_cast<int>(planted.informative.size());
  int uninformative_left = 0;
  for (int s : survivors) {
    if (std::find(planted.informative.begin(), planted.informative.end(), s) == planted.informative.end()) {
      ++uninformative_left;
    }
  }
  outcome.uninformative_removed = uninformative_total - uninformative_left;

  FinalizeResult<float> final = finalize(run.last_augmented, planted.data, cfg);
  ScoredSet val;
  for (int idx : planted.data.indices_of(Split::Validation)) {
    val.scores.push_back(static_cast<double>(predict_proba(final.model, planted.data.images[static_cast<size_t>(idx)])[0]));
    val.labels.push_back(planted.data.labels[static_cast<size_t>(idx)]);
  }
  outcome.final_val_auc = roc_auc(val);
  return outcome;
}

// Criterion 5/6/7 runs are shared; computed once.
struct SharedRuns {
  std::vector<PlantedRunOutcome> with_l1;     // lambda = 1e-3 (desk scale)
  std::vector<PlantedRunOutcome> without_l1;  // lambda = 0
  bool ready = false;
};
SharedRuns g_runs;

void ensure_shared_runs() {
  if (g_runs.ready) return;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    g_runs.with_l1.push_back(planted_scale_select(seed, 1e-3));
    g_runs.without_l1.push_back(planted_scale_select(seed, 0.0));
  }
  g_runs.ready = true;
}

bool criterion1(std::string& detail) {
  const ChannelPlan plan = vgg16_channel_plan();
  int channels = 0;
  for (int w : plan.conv_widths()) channels += w;

  Rng rng(1);
  NetworkModel<float> model = build_baseline_model<float>(plan, Shape{512, 512, 3}, 1, rng);
  const ParameterCounts base = count_parameters(model);
  const ParameterCounts aug = count_parameters(attach_scaling(model));
  const double millions = std::round(static_cast<double>(base.total) / 1e4) / 100.0;

  char buf[160];
  std::snprintf(buf, sizeof(buf), "channels=%d trainable=%lld total=%lld (%.2fM)", channels,
                static_cast<long long>(aug.trainable), static_cast<long long>(base.total), millions);
  detail = buf;
  return channels == 4224 && aug.trainable == 4737 && base.total == 14715201 && millions == 14.72;
}

bool criterion2(std::string& detail) {
  Rng rng(2);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    NetworkModel<float> model = random_toy_model<float>(rng, 8, rng.uniform_int(1, 3), 3, 8);
    const std::vector<int> widths = count_channels(model);

    KeepSet keep;
    for (int w : widths) {
      std::vector<int> all(static_cast<size_t>(w));
      for (int i = 0; i < w; ++i) all[static_cast<size_t>(i)] = i;
      rng.shuffle(all);
      all.resize(static_cast<size_t>(rng.uniform_int(1, w)));
      std::sort(all.begin(), all.end());
      keep.layers.push_back(all);
    }

    NetworkModel<float> pruned = select_channels(model, keep);
    std::vector<int> prev(static_cast<size_t>(model.input_shape[2]));
    for (size_t i = 0; i < prev.size(); ++i) prev[i] = static_cast<int>(i);
    const auto conv_indices = model.conv_layer_indices();
    const auto pruned_indices = pruned.conv_layer_indices();
    for (size_t l = 0; l < conv_indices.size(); ++l) {
      const auto& original = model.conv(conv_indices[l]);
      const auto& cut = pruned.conv(pruned_indices[l]);
      const int k = original.kernel.extent(0);
      // Shape rule: (k, k, c_in - n_in, c_out - n_out).
      if (cut.kernel.shape() !=
          Shape{k, k, static_cast<int>(prev.size()), static_cast<int>(keep.layers[l].size())}) {
        detail = "shape rule violated at trial " + std::to_string(trial);
        return false;
      }
      // Retained bytes unchanged.
      for (int di = 0; di < k; ++di) {
        for (int dj = 0; dj < k; ++dj) {
          for (size_t a = 0; a < prev.size(); ++a) {
            for (size_t b = 0; b < keep.layers[l].size(); ++b) {
              const float expect = original.kernel.at(di, dj, prev[a], keep.layers[l][b]);
              if (std::memcmp(&expect, &cut.kernel.at(di, dj, static_cast<int>(a), static_cast<int>(b)),
                              sizeof(float)) != 0) {
                detail = "retained kernel byte changed at trial " + std::to_string(trial);
                return false;
              }
              ++checked;
            }
          }
        }
      }
      prev = keep.layers[l];
    }
  }
  detail = "100 randomized cases, " + std::to_string(checked) + " retained weights verified";
  return true;
}

bool criterion3(std::string& detail) {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    NetworkModel<double> model = random_toy_model<double>(rng, 8, 2, 3, 6);
    NetworkModel<double> augmented = attach_scaling(model);
    KeepSet keep_all = KeepSet::all(count_channels(model));
    for (int idx : augmented.scaling_layer_indices()) {
      auto& s = augmented.scaling(idx).scale;
      for (int64_t e = 0; e < s.size(); ++e) s[e] = rng.uniform(0.0, 1.0);
    }
    NetworkModel<double> folded = fold_scaling(augmented, keep_all);
    for (int i = 0; i < 10; ++i) {
      Tensor<double> x = random_tensor<double>(model.input_shape, rng);
      worst = std::max(worst, rel_err(forward(augmented, x)[0], forward(folded, x)[0], 1e-6));
    }

    // Zero-scale channels removable at the same tolerance.
    NetworkModel<double> zeroed = attach_scaling(model);
    KeepSet keep;
    for (int idx : zeroed.scaling_layer_indices()) {
      auto& s = zeroed.scaling(idx).scale;
      std::vector<int> kept;
      for (int64_t e = 0; e < s.size(); ++e) {
        if (e > 0 && rng.bernoulli(0.3)) {
          s[e] = 0.0;
        } else {
          s[e] = rng.uniform(0.1, 1.0);
          kept.push_back(static_cast<int>(e));
        }
      }
      keep.layers.push_back(kept);
    }
    NetworkModel<double> pruned = fold_scaling(zeroed, keep);
    for (int i = 0; i < 10; ++i) {
      Tensor<double> x = random_tensor<double>(model.input_shape, rng);
      worst = std::max(worst, rel_err(forward(zeroed, x)[0], forward(pruned, x)[0], 1e-6));
    }
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max relative error %.2e over 50 models x 10 inputs", worst);
  detail = buf;
  return worst <= 1e-6;
}

bool criterion4(std::string& detail) {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed * 131 + 5);
    NetworkModel<double> augmented = attach_scaling(random_toy_model<double>(rng, 8, 2, 3, 8));
    for (int idx : augmented.scaling_layer_indices()) {
      auto& s = augmented.scaling(idx).scale;
      for (int64_t e = 0; e < s.size(); ++e) s[e] = rng.uniform(0.15, 0.85);
    }
    std::vector<Tensor<double>> inputs;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
      inputs.push_back(random_tensor<double>(augmented.input_shape, rng));
      labels.push_back(i % 2);
    }
    const double lambda = 1e-3;
    std::vector<const Tensor<double>*> ptrs;
    for (const auto& t : inputs) ptrs.push_back(&t);
    LossGradients<double> analytic = batch_loss_gradients(augmented, ptrs, labels, lambda);
    const std::vector<double> flat = flatten_grads(augmented, analytic.grads);
    auto f = [&](const std::vector<double>& params) {
      return full_loss_at(augmented, inputs, labels, lambda, params);
    };
    const std::vector<double> numeric = finite_diff_gradient(f, get_trainable(augmented), 1e-5);
    for (size_t i = 0; i < flat.size(); ++i) worst = std::max(worst, rel_err(flat[i], numeric[i]));
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max relative error %.2e over 20 networks", worst);
  detail = buf;
  return worst <= 1e-6;
}

bool criterion5(std::string& detail) {
  ensure_shared_runs();
  int survived_all = 0;
  std::vector<double> removed_fraction, aucs;
  const int uninformative_total = 12;
  for (const auto& run : g_runs.with_l1) {
    survived_all += run.informative_survived ? 1 : 0;
    removed_fraction.push_back(static_cast<double>(run.uninformative_removed) / uninformative_total);
    aucs.push_back(run.final_val_auc);
  }
  const double median_removed = median(removed_fraction);
  const double median_auc = median(aucs);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "informative survived %d/10 runs, median removed %.0f%%, median AUC %.3f",
                survived_all, 100.0 * median_removed, median_auc);
  detail = buf;
  return survived_all >= 6 && median_removed >= 0.8 && median_auc >= 0.95;
}

bool criterion6(std::string& detail) {
  const SyntheticSpec spec = planted16_spec();
  std::vector<double> with_l1, without_l1;
  for (uint64_t seed = 21; seed <= 30; ++seed) {
    PlantedDataset<float> planted = generate_planted_dataset<float>(spec, seed);
    for (double lambda : {1e-5, 0.0}) {
      NetworkModel<float> augmented = attach_scaling(planted.baseline);
      TrainConfig cfg = desk_train(seed, lambda, 120);
      TrainResult<float> trained = train(augmented, planted.data, cfg);
      int below = 0;
      for (int idx : trained.model.scaling_layer_indices()) {
        const auto& s = trained.model.scaling(idx).scale;
        for (int64_t e = 0; e < s.size(); ++e) below += s[e] < 0.01f;
      }
      (lambda > 0 ? with_l1 : without_l1).push_back(below);
    }
  }
  const double m_l1 = median(with_l1);
  const double m_plain = median(without_l1);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "median weights<0.01: lambda=1e-5 -> %.1f, lambda=0 -> %.1f", m_l1, m_plain);
  detail = buf;
  return m_l1 > m_plain;
}

bool criterion7(std::string& detail) {
  ensure_shared_runs();
  // Per-layer monotone decrease in every seeded run.
  auto monotone = [](const std::vector<PlantedRunOutcome>& runs) {
    for (const auto& run : runs) {
      for (size_t r = 1; r < run.records.size(); ++r) {
        for (size_t l = 0; l < run.records[r].channels_after.size(); ++l) {
          if (run.records[r].channels_after[l] > run.records[r - 1].channels_after[l]) return false;
        }
      }
    }
    return true;
  };
  const bool mono = monotone(g_runs.with_l1) && monotone(g_runs.without_l1);

  std::vector<double> l1_final, plain_final;
  for (const auto& run : g_runs.with_l1) {
    l1_final.push_back(run.records.back().total_channels_after());
  }
  for (const auto& run : g_runs.without_l1) {
    plain_final.push_back(run.records.back().total_channels_after());
  }
  const double m_l1 = median(l1_final);
  const double m_plain = median(plain_final);
  char buf[140];
  std::snprintf(buf, sizeof(buf), "monotone=%s, median final channels: L1 %.1f vs none %.1f", mono ? "yes" : "no",
                m_l1, m_plain);
  detail = buf;
  return mono && m_l1 <= m_plain;
}

bool criterion8(std::string& detail) {
  SyntheticSpec spec;
  spec.image_size = 8;
  spec.image_channels = 8;
  spec.backbone_channels = 8;
  spec.informative = {1, 4};
  spec.noise_level = 0.15;
  spec.sample_count = 160;
  spec.fractions = {0.4, 0.3, 0.3};

  std::vector<double> gaps;
  for (uint64_t seed = 41; seed <= 50; ++seed) {
    PlantedDataset<float> planted = generate_planted_dataset<float>(spec, seed);
    const TrainConfig head_cfg = desk_train(seed, 0.0, 25);
    OracleResult oracle = exhaustive_selection_oracle(planted.baseline, planted.data, head_cfg);

    SelectConfig cfg = desk_select(seed, 1e-3);
    cfg.max_iterations = 6;
    ScaleSelectResult<float> run = scale_select_run(planted.baseline, planted.data, cfg);
    FinalizeResult<float> final = finalize(run.last_augmented, planted.data, cfg);

    ScoredSet val;
    for (int idx : planted.data.indices_of(Split::Validation)) {
      val.scores.push_back(
          static_cast<double>(predict_proba(final.model, planted.data.images[static_cast<size_t>(idx)])[0]));
      val.labels.push_back(planted.data.labels[static_cast<size_t>(idx)]);
    }
    gaps.push_back(oracle.best_auc - roc_auc(val));
  }
  const double m = median(gaps);
  char buf[100];
  std::snprintf(buf, sizeof(buf), "median AUC gap to the exhaustive oracle %.4f", m);
  detail = buf;
  return m <= 0.05;
}

bool criterion9(std::string& detail) {
  Rng rng(9);
  int roc_exact = 0, pr_close = 0;
  const int cases = 1000;
  for (int trial = 0; trial < cases; ++trial) {
    ScoredSet set;
    const int n = rng.uniform_int(2, 200);
    const bool coarse = rng.bernoulli(0.5);
    for (int i = 0; i < n; ++i) {
      double score = rng.uniform();
      if (coarse) score = std::floor(score * 10) / 10.0;
      set.scores.push_back(score);
      set.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    set.labels[0] = 1;
    set.labels[static_cast<size_t>(n) - 1] = 0;

    roc_exact += roc_auc(set) == roc_auc_bruteforce(set);
    pr_close += std::abs(pr_auc(set) - pr_auc_reference(set)) <= 1e-12;
  }
  detail = std::to_string(roc_exact) + "/1000 ROC exact, " + std::to_string(pr_close) + "/1000 PR within 1e-12";
  return roc_exact == cases && pr_close == cases;
}

bool criterion10(std::string& detail) {
  const fs::path root = fs::path("/tmp") / ("cscale_accept_" + std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(root, ec);

  RunConfig config;
  config.synthetic = planted16_spec();
  config.synthetic.sample_count = 160;
  config.select = desk_select(7, 1e-3);
  config.select.max_iterations = 3;
  config.select.min_removed_per_iteration = 0;
  override_all_seeds(config, 7);
  config.select.iteration_train.learning_rate = 0.05;
  config.select.iteration_train.epochs = 15;
  config.select.iteration_train.batch_size = 16;
  config.select.iteration_train.augment_probability = 0.0;
  config.select.final_train = config.select.iteration_train;
  config.select.final_train.l1_lambda = 0.0;
  config.select.iteration_train.l1_lambda = 1e-3;

  auto pipeline = [&](const std::string& tag) {
    const std::string gen_dir = (root / (tag + "_gen")).string();
    const std::string sel_dir = (root / (tag + "_sel")).string();
    const std::string fin_dir = (root / (tag + "_fin")).string();
    run_gen_data(config, gen_dir);
    run_scale_select(config, gen_dir + "/dataset.cssd", gen_dir + "/checkpoints/backbone.cssm", sel_dir);
    run_finalize(config, gen_dir + "/dataset.cssd", sel_dir + "/checkpoints/augmented_last.cssm", fin_dir);
    return sel_dir;
  };
  const std::string a = pipeline("a");
  const std::string b = pipeline("b");

  auto file_bytes = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };

  int compared = 0;
  bool identical = true;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), a).string();
    const std::string name = entry.path().filename().string();
    const bool relevant = name == "iterations.csv" || name.rfind("keepset", 0) == 0 ||
                          entry.path().extension() == ".cssm" || name.rfind("histogram", 0) == 0;
    if (!relevant) continue;
    ++compared;
    if (file_bytes(entry.path().string()) != file_bytes((fs::path(b) / rel).string())) {
      identical = false;
      detail = "mismatch in " + rel;
    }
  }
  // The finalized models too.
  const std::string fa = (root / "a_fin" / "checkpoints" / "final.cssm").string();
  const std::string fb = (root / "b_fin" / "checkpoints" / "final.cssm").string();
  ++compared;
  if (file_bytes(fa) != file_bytes(fb)) {
    identical = false;
    detail = "mismatch in final.cssm";
  }

  fs::remove_all(root, ec);
  if (identical) detail = std::to_string(compared) + " files byte-identical across two runs";
  return identical && compared >= 5;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "architecture accounting (4224 channels, 4737 trainable, 14.72M parameters)", criterion1);
  run_criterion(2, "kernel surgery shape rule and retained bytes", criterion2);
  run_criterion(3, "folding equivalence at 1e-6 (double)", criterion3);
  run_criterion(4, "full-loss gradients vs finite differences at 1e-6 (double)", criterion4);
  run_criterion(5, "planted-feature recovery (keep informative, remove >=80%, AUC >= 0.95)", criterion5);
  run_criterion(6, "L1 sparsity direction (lambda=1e-5 vs 0)", criterion6);
  run_criterion(7, "monotone channel reduction; L1 run not larger", criterion7);
  run_criterion(8, "tiny-instance parity with the exhaustive selection oracle", criterion8);
  run_criterion(9, "metric oracles (ROC pair counting exact, PR enumeration)", criterion9);
  run_criterion(10, "full-run determinism (byte-identical artifacts)", criterion10);

  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", g_failures);
  return 1;
}
