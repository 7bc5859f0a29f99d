#include <doctest.h>

#include <cstdio>

#include "cscale/autodiff.hpp"
#include "cscale/select.hpp"
#include "helpers.hpp"

using namespace cscale;
using namespace testutil;

namespace {

SyntheticSpec small_planted_spec() {
  SyntheticSpec spec;
  spec.image_size = 10;
  spec.image_channels = 8;
  spec.backbone_channels = 8;
  spec.informative = {1, 5};
  spec.noise_level = 0.1;
  spec.sample_count = 120;
  spec.fractions = {0.4, 0.2, 0.4};
  return spec;
}

TrainConfig fast_train(uint64_t seed, double lambda) {
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.learning_rate = 0.05;
  cfg.l1_lambda = lambda;
  cfg.augment_probability = 0.0;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("threshold keeps the boundary and everything above") {
  Tensor<double> s(Shape{3}, {0.005, 0.5, 1.0});
  CHECK(threshold_channels(s, 0.01) == std::vector<int>{1, 2});

  Tensor<double> high(Shape{4}, {0.2, 0.9, 0.01, 0.5});
  CHECK(threshold_channels(high, 0.01) == std::vector<int>{0, 1, 2, 3});

  // A weight exactly at the threshold survives (strict < removes).
  Tensor<double> boundary(Shape{2}, {0.01, 0.0099999});
  CHECK(threshold_channels(boundary, 0.01) == std::vector<int>{0});

  Tensor<double> bad(Shape{1}, {1.5});
  CHECK_THROWS_AS(threshold_channels(bad, 0.01), ContractError);
}

TEST_CASE("max_iterations=1 produces exactly one record") {
  PlantedDataset<float> planted = generate_planted_dataset<float>(small_planted_spec(), 31);
  SelectConfig cfg;
  cfg.max_iterations = 1;
  cfg.iteration_train = fast_train(31, 1e-3);

  ScaleSelectResult<float> result = scale_select_run(planted.baseline, planted.data, cfg);
  CHECK(result.records.size() == 1);
  CHECK(result.records[0].iteration == 0);
  CHECK(result.records[0].trainable_params == 8 + 8 + 1);
  // One train+threshold+prune: the pruned model matches the keep sizes.
  CHECK(count_channels(result.pruned)[0] == static_cast<int>(result.records[0].keep.layers[0].size()));
}

TEST_CASE("zero threshold removes nothing and channel counts stay constant") {
  PlantedDataset<float> planted = generate_planted_dataset<float>(small_planted_spec(), 32);
  SelectConfig cfg;
  cfg.threshold = 0.0;
  cfg.max_iterations = 3;
  cfg.min_removed_per_iteration = 0;  // run all iterations
  cfg.iteration_train = fast_train(32, 1e-3);

  ScaleSelectResult<float> result = scale_select_run(planted.baseline, planted.data, cfg);
  CHECK(result.records.size() == 3);
  for (const auto& record : result.records) {
    CHECK(record.channels_before == std::vector<int>{8});
    CHECK(record.channels_after == std::vector<int>{8});
  }
}

TEST_CASE("records are monotone, conserving, and sound") {
  PlantedDataset<float> planted = generate_planted_dataset<float>(small_planted_spec(), 33);
  SelectConfig cfg;
  cfg.max_iterations = 4;
  cfg.iteration_train = fast_train(33, 2e-3);

  std::vector<NetworkModel<float>> augmented_models;
  auto callback = [&](const IterationRecord&, const NetworkModel<float>&, const NetworkModel<float>& augmented) {
    augmented_models.push_back(augmented);
  };
  ScaleSelectResult<float> result =
      scale_select_run(planted.baseline, planted.data, cfg, IterationCallback<float>(callback));

  REQUIRE(!result.records.empty());
  const std::vector<int> original = count_channels(planted.baseline);
  std::vector<int> prev = original;
  for (size_t r = 0; r < result.records.size(); ++r) {
    const auto& record = result.records[r];
    // Conservation and monotone decrease, layer by layer.
    for (size_t l = 0; l < record.channels_before.size(); ++l) {
      CHECK(record.channels_before[l] == prev[l]);
      CHECK(record.channels_after[l] <= record.channels_before[l]);
      const int removed = record.channels_before[l] - record.channels_after[l];
      CHECK(removed + record.channels_after[l] == record.channels_before[l]);
    }
    // Soundness: every removed channel had s below the threshold; every
    // kept one at or above it.
    const NetworkModel<float>& augmented = augmented_models[r];
    const auto scaling_indices = augmented.scaling_layer_indices();
    for (size_t l = 0; l < record.keep.layers.size(); ++l) {
      const auto& s = augmented.scaling(scaling_indices[l]).scale;
      std::vector<bool> kept(static_cast<size_t>(s.size()), false);
      for (int idx : record.keep.layers[l]) kept[static_cast<size_t>(idx)] = true;
      bool cascade_zeroed = record.keep.layers[l].empty() && record.channels_before[l] > 0;
      for (int64_t e = 0; e < s.size(); ++e) {
        if (kept[static_cast<size_t>(e)]) {
          CHECK(s[e] >= cfg.threshold);
        } else if (!cascade_zeroed) {
          CHECK(s[e] < cfg.threshold);
        }
      }
      // Histogram counts sum to the trained scaling weight count.
    }
    int64_t hist_total = 0;
    for (int64_t c : record.histogram) hist_total += c;
    int scale_total = 0;
    for (size_t l = 0; l < record.channels_before.size(); ++l) scale_total += record.channels_before[l];
    CHECK(hist_total == scale_total);

    prev = record.channels_after;
  }
}

TEST_CASE("re-attached identity scaling reproduces the pruned model") {
  PlantedDataset<float> planted = generate_planted_dataset<float>(small_planted_spec(), 34);
  SelectConfig cfg;
  cfg.max_iterations = 1;
  cfg.iteration_train = fast_train(34, 2e-3);
  ScaleSelectResult<float> result = scale_select_run(planted.baseline, planted.data, cfg);

  NetworkModel<float> reattached = attach_scaling(result.pruned);
  Rng rng(35);
  for (int i = 0; i < 5; ++i) {
    Tensor<float> x = random_tensor<float>(result.pruned.input_shape, rng);
    CHECK(forward(result.pruned, x).same_bytes(forward(reattached, x)));
  }
}

TEST_CASE("finalize folds, keeps equivalence, and leaves only the head trainable") {
  PlantedDataset<double> planted = generate_planted_dataset<double>(small_planted_spec(), 36);
  NetworkModel<double> augmented = attach_scaling(planted.baseline);
  // Plant a mix of zero and live scales.
  auto& s = augmented.scaling(augmented.scaling_layer_indices()[0]).scale;
  Rng rng(36);
  for (int64_t e = 0; e < s.size(); ++e) s[e] = (e % 3 == 0) ? 0.0 : rng.uniform(0.2, 1.0);

  SelectConfig cfg;
  cfg.final_train.epochs = 0;  // pure fold first
  FinalizeResult<double> folded = finalize(augmented, planted.data, cfg);
  CHECK(folded.model.scaling_layer_indices().empty());
  CHECK(folded.model.dense(folded.model.dense_layer_index()).trainable);

  for (int i = 0; i < 100; ++i) {
    Tensor<double> x = random_tensor<double>(augmented.input_shape, rng);
    CHECK(rel_err(forward(augmented, x)[0], forward(folded.model, x)[0], 1e-6) <= 1e-6);
  }

  // With identity scales and keep-all, convs stay bit-equal to baseline.
  NetworkModel<double> identity = attach_scaling(planted.baseline);
  FinalizeResult<double> same = finalize(identity, planted.data, cfg);
  for (int idx : planted.baseline.conv_layer_indices()) {
    CHECK(same.model.conv(idx).kernel.same_bytes(planted.baseline.conv(idx).kernel));
  }

  // Retraining the head afterwards only changes head parameters.
  cfg.final_train = fast_train(36, 0.0);
  cfg.final_train.epochs = 5;
  FinalizeResult<double> retrained = finalize(augmented, planted.data, cfg);
  const ParameterCounts counts = count_parameters(retrained.model);
  CHECK(counts.trainable == retrained.model.dense(retrained.model.dense_layer_index()).weight.size() +
                                retrained.model.dense(retrained.model.dense_layer_index()).bias.size());
  CHECK(count_parameters(retrained.model).total < count_parameters(planted.baseline).total);

  CHECK_THROWS_AS(finalize(planted.baseline, planted.data, cfg), StateError);
}

TEST_CASE("iteration record csv round trips the summary columns") {
  std::vector<IterationRecord> records(2);
  records[0].iteration = 0;
  records[0].channels_after = {6, 4};
  records[0].val_auc_roc = 0.875;
  records[0].val_auc_pr = 0.75;
  records[0].trainable_params = 23;
  records[1].iteration = 1;
  records[1].channels_after = {5, 2};
  records[1].val_auc_roc = 0.9;
  records[1].val_auc_pr = 0.8;
  records[1].trainable_params = 15;

  const std::string path = "/tmp/cscale_test_records.csv";
  write_iteration_records_csv(records, path);
  auto loaded = read_iteration_records_csv(path);
  std::remove(path.c_str());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].iteration == 1);
  CHECK(loaded[1].val_auc_roc == 0.9);
  CHECK(loaded[1].trainable_params == 15);
}

TEST_CASE("keepset text round trips") {
  KeepSet keep;
  keep.layers.push_back({0, 2, 5});
  keep.layers.push_back({});
  keep.layers.push_back({1});
  const std::string path = "/tmp/cscale_test_keepset.txt";
  write_keepset(keep, path);
  KeepSet loaded = read_keepset(path);
  std::remove(path.c_str());
  CHECK(loaded.layers == keep.layers);
}

TEST_CASE("oracle rejects oversized instances and finds planted channels") {
  // 1-channel instance: keep {0} iff the channel helps.
  {
    SyntheticSpec spec;
    spec.image_size = 8;
    spec.image_channels = 1;
    spec.backbone_channels = 1;
    spec.informative = {0};
    spec.noise_level = 0.05;
    spec.sample_count = 60;
    spec.fractions = {0.4, 0.3, 0.3};
    PlantedDataset<float> planted = generate_planted_dataset<float>(spec, 41);
    OracleResult oracle = exhaustive_selection_oracle(planted.baseline, planted.data, fast_train(41, 0.0));
    CHECK(oracle.best_keep.layers[0] == std::vector<int>{0});
    CHECK(oracle.best_auc >= 0.9);
  }

  // Planted 1-of-4: the informative channel is kept.
  {
    SyntheticSpec spec;
    spec.image_size = 8;
    spec.image_channels = 4;
    spec.backbone_channels = 4;
    spec.informative = {2};
    spec.noise_level = 0.05;
    spec.sample_count = 60;
    spec.fractions = {0.4, 0.3, 0.3};
    PlantedDataset<float> planted = generate_planted_dataset<float>(spec, 42);
    OracleResult oracle = exhaustive_selection_oracle(planted.baseline, planted.data, fast_train(42, 0.0));
    const auto& kept = oracle.best_keep.layers[0];
    CHECK(std::find(kept.begin(), kept.end(), 2) != kept.end());
  }

  Rng rng(43);
  NetworkModel<float> big = build_baseline_model<float>(ChannelPlan::parse("8,8"), Shape{8, 8, 1}, 1, rng);
  SyntheticSpec spec;
  spec.image_size = 8;
  spec.image_channels = 1;
  spec.backbone_channels = 1;
  spec.informative = {0};
  spec.sample_count = 20;
  PlantedDataset<float> tiny = generate_planted_dataset<float>(spec, 44);
  CHECK_THROWS_AS(exhaustive_selection_oracle(big, tiny.data, fast_train(44, 0.0)), ContractError);
}
