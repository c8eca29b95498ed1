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

#include "fbi/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace fbi {
namespace {

using ::fbi::testing::make_table;
using ::fbi::testing::random_table;

PredictionTable ParseCsv(const std::string& text, const LoadOptions& options = {}) {
  std::istringstream in(text);
  return parse_table_csv(in, options);
}

constexpr char kTwoByThree[] =
    "model,input,rank,label\n"
    "a,x,1,3\n"
    "a,y,1,4\n"
    "a,z,1,5\n"
    "b,x,1,3\n"
    "b,y,1,0\n"
    "b,z,1,5\n";

TEST(LoadTableTest, MinimalCsv) {
  const PredictionTable t = ParseCsv(kTwoByThree);
  EXPECT_EQ(t.num_models(), 2u);
  EXPECT_EQ(t.num_inputs(), 3u);
  EXPECT_EQ(t.k(), 1);
  EXPECT_EQ(t.num_cells(), 6u);
  EXPECT_EQ(t.top1(1, 1), 0);
  EXPECT_EQ(t.model_id(0), "a");
  EXPECT_EQ(t.input_id(2), "z");
}

TEST(LoadTableTest, RaggedDepthIsConsistencyError) {
  EXPECT_THROW(ParseCsv(std::string(kTwoByThree) + "b,z,2,7\n"), ConsistencyError);
}

TEST(LoadTableTest, MissingCellIsConsistencyError) {
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,1,1\nb,y,1,2\n"), ConsistencyError);
}

TEST(LoadTableTest, DuplicateCellIsConsistencyError) {
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,1,1\na,x,1,2\n"), ConsistencyError);
}

TEST(LoadTableTest, MalformedRowsAreParseErrors) {
  EXPECT_THROW(ParseCsv("model,input,label\n"), ParseError);
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,1\n"), ParseError);
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,one,1\n"), ParseError);
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,0,1\n"), ParseError);
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,1,-2\n"), ParseError);
  EXPECT_THROW(ParseCsv(""), ParseError);
}

TEST(LoadTableTest, RepeatedLabelInCellIsRejected) {
  EXPECT_THROW(ParseCsv("model,input,rank,label\na,x,1,1\na,x,2,1\n"), ConsistencyError);
}

TEST(LoadTableTest, LabelsAtOrAboveClassCountAreRejected) {
  LoadOptions opt;
  opt.num_classes = 5;
  EXPECT_THROW(ParseCsv(kTwoByThree, opt), ConsistencyError);
  opt.num_classes = 6;
  EXPECT_NO_THROW(ParseCsv(kTwoByThree, opt));
}

TEST(LoadTableTest, GroundTruthIsAttached) {
  std::istringstream in(kTwoByThree);
  std::istringstream gt("input,label\nx,3\nz,1\n");
  const PredictionTable t = parse_table_csv(in, {}, &gt);
  EXPECT_EQ(t.ground_truth(0), 3);
  EXPECT_FALSE(t.ground_truth(1).has_value());
  EXPECT_EQ(t.ground_truth(2), 1);
}

TEST(LoadTableTest, GroundTruthForUnknownInputIsRejected) {
  std::istringstream in(kTwoByThree);
  std::istringstream gt("input,label\nw,3\n");
  EXPECT_THROW(parse_table_csv(in, {}, &gt), ConsistencyError);
}

TEST(LoadTableTest, CsvRoundTripIsByteIdentical) {
  const PredictionTable t = random_table(3, 4, 7, 3, 20);
  std::ostringstream a;
  write_table_csv(t, a);
  const PredictionTable back = ParseCsv(a.str());
  std::ostringstream b;
  write_table_csv(back, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.cells(), t.cells());
}

TEST(LoadTableTest, JsonMirrorsCsv) {
  const PredictionTable t = make_table({{{1, 2}, {3, 4}}, {{2, 1}, {3, 5}}}, {7, std::nullopt});
  std::ostringstream out;
  write_table_json(t, out);
  std::istringstream in(out.str());
  const PredictionTable back = parse_table_json(in);
  EXPECT_EQ(back.cells(), t.cells());
  EXPECT_EQ(back.models(), t.models());
  EXPECT_EQ(back.ground_truth(0), 7);
  EXPECT_FALSE(back.ground_truth(1).has_value());
}

TEST(LoadTableTest, MalformedJsonIsParseError) {
  std::istringstream in("{\"k\": 1, \"models\": [\"a\"]");
  EXPECT_THROW(parse_table_json(in), ParseError);
}

TEST(ReferenceClassTest, GroundTruthWins) {
  const PredictionTable t = make_table({{{3}}, {{3}}, {{5}}}, {7});
  EXPECT_EQ(reference_class(t, "x0"), 7);
}

TEST(ReferenceClassTest, StrictMajority) {
  const PredictionTable t = make_table({{{3}}, {{3}}, {{5}}});
  EXPECT_EQ(reference_class(t, "x0"), 3);
}

TEST(ReferenceClassTest, TieGoesToSmallestLabel) {
  const PredictionTable t = make_table({{{9}}, {{2}}, {{9}}, {{2}}});
  EXPECT_EQ(reference_class(t, "x0"), 2);
}

TEST(ReferenceClassTest, InvariantUnderModelOrder) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Label> votes(1 + rng.below(8));
    for (auto& v : votes) v = static_cast<Label>(rng.below(4));
    std::map<Label, int> count;
    for (Label v : votes) ++count[v];
    // Oracle: most votes, then the smallest label.
    Label expected = count.begin()->first;
    for (const auto& [label, c] : count) {
      if (c > count[expected]) expected = label;
    }
    std::vector<Label> shuffled = votes;
    rng.shuffle(shuffled);
    EXPECT_EQ(majority_vote(votes.size(), [&](std::size_t m) { return votes[m]; }), expected);
    EXPECT_EQ(majority_vote(shuffled.size(), [&](std::size_t m) { return shuffled[m]; }), expected);
  }
}

TEST(PartitionTest, ParsesAnchorsAndRejectsOverlap) {
  const PredictionTable t = make_table({{{1}}, {{2}}, {{3}}});
  std::istringstream ok("family,model,anchor\nf,m0,m0\nf,m1,m0\ng,m2,\n");
  const FamilyPartition p = parse_partition_csv(ok, t);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].members, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(p[0].anchor, 0u);
  EXPECT_FALSE(p[1].anchor.has_value());
  EXPECT_TRUE(p.covers_all_models());
  EXPECT_EQ(p.family_of(2), 1u);

  std::istringstream overlap("family,model\nf,m0\ng,m0\n");
  EXPECT_THROW(parse_partition_csv(overlap, t), ConsistencyError);
  std::istringstream unknown("family,model\nf,zz\n");
  EXPECT_THROW(parse_partition_csv(unknown, t), ConsistencyError);
}

TEST(PartitionTest, WriteThenParseRoundTrips) {
  const PredictionTable t = make_table({{{1}}, {{2}}, {{3}}});
  const FamilyPartition p(FamilyFlavor::kVanillaSpan, {Family{"f", {0, 2}, 0}, Family{"g", {1}, 1}}, 3);
  std::ostringstream out;
  write_partition_csv(p, t.models(), out);
  std::istringstream in(out.str());
  const FamilyPartition back = parse_partition_csv(in, t);
  EXPECT_EQ(back[0].members, p[0].members);
  EXPECT_EQ(back[1].anchor, p[1].anchor);
}

// 20 inputs; the anchor (model 0) is right on the first 8 only.
PredictionTable SplitTable() {
  std::vector<std::vector<TopKOutput>> out(3, std::vector<TopKOutput>(20));
  std::vector<std::optional<Label>> gt(20);
  for (std::size_t i = 0; i < 20; ++i) {
    gt[i] = 1;
    out[0][i] = {i < 8 ? 1 : 2};
    out[1][i] = {static_cast<Label>(i % 3)};
    out[2][i] = {static_cast<Label>(i % 5)};
  }
  return make_table(out, gt);
}

TEST(SelectInputsTest, Split3070Composition) {
  const PredictionTable t = SplitTable();
  const auto s = select_inputs(t, SelectionStrategy::kSplit3070, 10, 0, {}, 4);
  ASSERT_EQ(s.inputs.size(), 10u);
  const auto correct = std::count_if(s.inputs.begin(), s.inputs.end(), [](std::size_t i) { return i < 8; });
  EXPECT_EQ(correct, 3);
}

TEST(SelectInputsTest, SplitRatioHoldsForEverySeed) {
  const PredictionTable t = SplitTable();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (std::size_t size : {4u, 7u, 10u}) {
      const auto s = select_inputs(t, SelectionStrategy::kSplit5050, size, 0, {}, seed);
      const auto correct = std::count_if(s.inputs.begin(), s.inputs.end(), [](std::size_t i) { return i < 8; });
      EXPECT_LE(std::abs(static_cast<double>(correct) - 0.5 * static_cast<double>(size)), 1.0);
      EXPECT_TRUE(std::is_sorted(s.inputs.begin(), s.inputs.end()));
      EXPECT_EQ(std::adjacent_find(s.inputs.begin(), s.inputs.end()), s.inputs.end());
    }
  }
}

TEST(SelectInputsTest, SmallStratumIsInsufficientPool) {
  const PredictionTable t = SplitTable();
  // 50/50 of 20 needs 10 correct inputs; only 8 exist.
  EXPECT_THROW(select_inputs(t, SelectionStrategy::kSplit5050, 20, 0, {}, 1), InsufficientPool);
  EXPECT_THROW(select_inputs(t, SelectionStrategy::kAll, 21, std::nullopt, {}, 1), InsufficientPool);
  EXPECT_THROW(select_inputs(t, SelectionStrategy::kSplit3070, 5, std::nullopt, {}, 1), ConfigError);
}

TEST(SelectInputsTest, EntropyValues) {
  const PredictionTable t = make_table({{{0}, {1}}, {{1}, {1}}, {{2}, {1}}, {{3}, {1}}});
  const std::vector<std::size_t> known{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(top1_entropy(t, 0, known), 2.0);
  EXPECT_DOUBLE_EQ(top1_entropy(t, 1, known), 0.0);
  const auto s = select_inputs(t, SelectionStrategy::kEntropy, 2, std::nullopt, known, 9);
  EXPECT_EQ(s.inputs, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectInputsTest, EntropyRankingIsSeedIndependentAndTiesByIndex) {
  const PredictionTable t = random_table(5, 6, 40, 1, 3);
  std::vector<std::size_t> known{0, 1, 2, 3, 4, 5};
  const auto a = select_inputs(t, SelectionStrategy::kEntropy, 15, std::nullopt, known, 1).inputs;
  const auto b = select_inputs(t, SelectionStrategy::kEntropy, 15, std::nullopt, known, 99).inputs;
  EXPECT_EQ(a, b);
  const auto order = entropy_ranking(t, known);
  for (std::size_t j = 1; j < order.size(); ++j) {
    const double h0 = top1_entropy(t, order[j - 1], known);
    const double h1 = top1_entropy(t, order[j], known);
    EXPECT_TRUE(h0 > h1 || (h0 == h1 && order[j - 1] < order[j]));
  }
}

TEST(TableTest, TruncatedKeepsLeadingRanks) {
  const PredictionTable t = random_table(8, 3, 5, 4, 30);
  const PredictionTable t2 = t.truncated(2);
  EXPECT_EQ(t2.k(), 2);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(t2.output(m, i)[0], t.output(m, i)[0]);
      EXPECT_EQ(t2.output(m, i)[1], t.output(m, i)[1]);
    }
  }
  EXPECT_THROW(t.truncated(5), ConfigError);
}

TEST(TableTest, OutputClassesMatchOutputEquality) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PredictionTable t = random_table(seed, 9, 12, 2, 3);
    for (std::size_t i = 0; i < t.num_inputs(); ++i) {
      for (std::size_t a = 0; a < t.num_models(); ++a) {
        EXPECT_LT(t.output_class(a, i), t.num_models());
        for (std::size_t b = 0; b < t.num_models(); ++b) {
          auto x = t.output(a, i);
          auto y = t.output(b, i);
          const bool equal = std::equal(x.begin(), x.end(), y.begin(), y.end());
          EXPECT_EQ(t.output_class(a, i) == t.output_class(b, i), equal);
        }
      }
    }
  }
}

TEST(TableTest, DuplicateIdsAreRejected) {
  EXPECT_THROW(PredictionTable({"a", "a"}, {"x"}, 1, {1, 2}), ConsistencyError);
  EXPECT_THROW(PredictionTable({"a"}, {"x"}, 1, {1, 2}), ConsistencyError);
}

}  // namespace
}  // namespace fbi
