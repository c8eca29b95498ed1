/* Copyright 2026 The fbi Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fbi/protocol.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fbi::protocol {
namespace {

// One family of three identical members that are right on every third input,
// plus 24 singleton models that are always right.
Dataset SeparatedDataset() {
  const std::size_t n_inputs = 300;
  std::vector<std::vector<TopKOutput>> out;
  std::vector<std::optional<Label>> gt(n_inputs, 1);
  for (int m = 0; m < 3; ++m) {
    std::vector<TopKOutput> col;
    for (std::size_t i = 0; i < n_inputs; ++i) col.push_back({i % 3 == 0 ? 1 : 2});
    out.push_back(col);
  }
  for (int m = 0; m < 24; ++m) out.push_back(std::vector<TopKOutput>(n_inputs, TopKOutput{1}));
  const PredictionTable t = ::fbi::testing::make_table(out, gt);
  std::vector<Family> fams{Family{"a", {0, 1, 2}, 0}};
  for (std::size_t m = 3; m < t.num_models(); ++m) fams.push_back(Family{t.model_id(m), {m}, m});
  return Dataset{t, FamilyPartition(FamilyFlavor::kVanillaSpan, fams, t.num_models()), std::nullopt, std::nullopt};
}

TEST(RunProtocolTest, SeparatedFamiliesAreDetectedPerfectly) {
  ProtocolConfig cfg;
  cfg.L_grid = {20, 50, 100};
  cfg.trials = 3;
  for (auto s : {SelectionStrategy::kSplit3070, SelectionStrategy::kAll}) {
    cfg.strategies = {s};
    const Report r = run_protocol(SeparatedDataset(), cfg);
    for (std::size_t L : cfg.L_grid) {
      EXPECT_EQ(r.aggregate("detect", to_string(s), 1, L, "tpr_mean"), 1.0) << L;
      EXPECT_EQ(r.aggregate("detect", to_string(s), 1, L, "fpr_mean"), 0.0) << L;
      EXPECT_EQ(r.per_trial("detect", to_string(s), 1, L, "tpr").size(), 3u);
    }
  }
}

sim::EnsembleSpec SmallEnsemble() {
  sim::EnsembleSpec s;
  s.seed = 7;
  s.n_vanilla = 8;
  s.variants_per_family = 4;
  s.num_inputs = 2000;
  s.num_classes = 100;
  s.probes_per_procedure = 2;
  return s;
}

std::string Csv(const Report& r) {
  std::ostringstream out;
  r.write_csv(out);
  return out.str();
}

TEST(RunProtocolTest, ReportIsDeterministic) {
  const auto data = dataset_from_ensemble(sim::gen_ensemble(SmallEnsemble()));
  ProtocolConfig cfg;
  cfg.tasks = {Task::kDetect, Task::kIdentifyFamily, Task::kIdentifyVariation};
  cfg.strategies = {SelectionStrategy::kAll, SelectionStrategy::kEntropy};
  cfg.L_grid = {20, 100};
  cfg.trials = 3;
  const std::string a = Csv(run_protocol(data, cfg));
  const std::string b = Csv(run_protocol(data, cfg));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rfind("task,family_flavor,strategy,top_k,L,seed,metric,value\n", 0), 0u);
  cfg.seed = 2;
  EXPECT_NE(a, Csv(run_protocol(data, cfg)));
}

TEST(RunProtocolTest, IdentificationOutcomesPartitionAndRespectAlpha) {
  const auto data = dataset_from_ensemble(sim::gen_ensemble(SmallEnsemble()));
  ProtocolConfig cfg;
  cfg.tasks = {Task::kIdentifyFamily};
  cfg.L_grid = {100};
  cfg.trials = 8;
  const Report r = run_protocol(data, cfg);
  const auto c = r.per_trial("identify-family", "entropy", 1, 100, "correct");
  const auto a = r.per_trial("identify-family", "entropy", 1, 100, "abstain");
  const auto w = r.per_trial("identify-family", "entropy", 1, 100, "wrong");
  ASSERT_EQ(c.size(), 8u);
  for (std::size_t t = 0; t < c.size(); ++t) EXPECT_NEAR(c[t] + a[t] + w[t], 1.0, 1e-12);
  // tau is calibrated on the pooled held-out cases.
  const double accepted = 1.0 - *r.aggregate("identify-family", "entropy", 1, 100, "negative_abstain_mean");
  EXPECT_LE(accepted, cfg.alpha + 0.05);
  EXPECT_GT(*r.aggregate("identify-family", "entropy", 1, 100, "correct_mean"), 0.5);
}

TEST(RunProtocolTest, TopKSweepTruncatesTheTable) {
  auto spec = SmallEnsemble();
  spec.top_k = 3;
  const auto data = dataset_from_ensemble(sim::gen_ensemble(spec));
  ProtocolConfig cfg;
  cfg.top_k = {1, 3};
  cfg.L_grid = {50};
  cfg.trials = 2;
  cfg.strategies = {SelectionStrategy::kAll};
  const Report r = run_protocol(data, cfg);
  EXPECT_TRUE(r.aggregate("detect", "all", 1, 50, "tpr_mean").has_value());
  EXPECT_TRUE(r.aggregate("detect", "all", 3, 50, "tpr_mean").has_value());
}

TEST(RunProtocolTest, VariationStageUsesProbes) {
  const auto data = dataset_from_ensemble(sim::gen_ensemble(SmallEnsemble()));
  ProtocolConfig cfg;
  cfg.tasks = {Task::kIdentifyVariation};
  cfg.L_grid = {100};
  cfg.trials = 2;
  const Report r = run_protocol(data, cfg);
  const double cases = *r.aggregate("identify-variation", "entropy", 1, 100, "cases");
  EXPECT_EQ(cases, 2.0 * data.probes->table.num_models());
  const double rate = *r.aggregate("identify-variation", "entropy", 1, 100, "correct_mean");
  EXPECT_GE(rate, 0.0);
  EXPECT_LE(rate, 1.0);
}

TEST(RunProtocolTest, ConfigurationErrors) {
  const auto data = dataset_from_ensemble(sim::gen_ensemble(SmallEnsemble()));
  ProtocolConfig cfg;
  cfg.tasks = {Task::kIdentifyFamily};
  cfg.strategies = {SelectionStrategy::kSplit3070};
  cfg.L_grid = {20};
  cfg.trials = 1;
  EXPECT_THROW(run_protocol(data, cfg), ConfigError);
  cfg.strategies = {};
  cfg.held_out = 7;
  EXPECT_THROW(run_protocol(data, cfg), ConfigError);
  ProtocolConfig bad;
  bad.alpha = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ProtocolConfig{};
  bad.L_grid = {1};
  EXPECT_THROW(bad.validate(), ConfigError);
}

Config Parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

TEST(ProtocolConfigTest, ParsesKeys) {
  const auto p = protocol_config_from(Parse(
      "task = detect, identify-family\nstrategy = all, entropy\nL = 20, 50\ntop_k = 1, 3\n"
      "trials = 4\nalpha = 0.1\ndelegate = close+median\nseed = 9\n"));
  EXPECT_EQ(p.tasks, (std::vector<Task>{Task::kDetect, Task::kIdentifyFamily}));
  EXPECT_EQ(p.strategies, (std::vector<SelectionStrategy>{SelectionStrategy::kAll, SelectionStrategy::kEntropy}));
  EXPECT_EQ(p.L_grid, (std::vector<std::size_t>{20, 50}));
  EXPECT_EQ(p.top_k, (std::vector<int>{1, 3}));
  EXPECT_EQ(p.trials, 4u);
  EXPECT_DOUBLE_EQ(p.alpha, 0.1);
  EXPECT_EQ(p.delegate, DelegateOption::kCloseMedian);
  EXPECT_EQ(p.seed, 9u);
}

TEST(ProtocolConfigTest, RejectsBadInput) {
  EXPECT_THROW(protocol_config_from(Parse("tirals = 3\n")), ConfigError);
  EXPECT_THROW(protocol_config_from(Parse("task = guess\n")), ConfigError);
  EXPECT_THROW(protocol_config_from(Parse("L = twenty\n")), ConfigError);
  EXPECT_THROW(Parse("L = 1\nL = 2\n"), ParseError);
  EXPECT_THROW(Parse("just words\n"), ParseError);
}

TEST(ProtocolConfigTest, SimulatorKeys) {
  const auto s = ensemble_spec_from_config(
      Parse("sim.seed = 5\nsim.n_vanilla = 3\nsim.top_k = 2\nsim.resample = uniform\nsim.confusion_size = 0\n"),
      "sim.");
  EXPECT_EQ(s.seed, 5u);
  EXPECT_EQ(s.n_vanilla, 3u);
  EXPECT_EQ(s.top_k, 2);
  EXPECT_EQ(s.resample, sim::ResampleMode::kUniform);
  EXPECT_EQ(s.confusion_size, 0u);
  EXPECT_THROW(ensemble_spec_from_config(Parse("eta = 1.5\n")), ConfigError);
}

TEST(ProtocolConfigTest, SeedPrecedence) {
  unsetenv("FBI_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt, 4), 4u);
  setenv("FBI_SEED", "11", 1);
  EXPECT_EQ(resolve_seed(std::nullopt, 4), 11u);
  EXPECT_EQ(resolve_seed(3, 4), 3u);
  setenv("FBI_SEED", "x", 1);
  EXPECT_THROW(resolve_seed(std::nullopt, 4), ConfigError);
  unsetenv("FBI_SEED");
}

}  // namespace
}  // namespace fbi::protocol
