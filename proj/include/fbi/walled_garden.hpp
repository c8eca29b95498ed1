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

#pragma once

// Greedy adaptive detection and identification when the black-box is known to
// be one of the models of the table. Each step scores every input not yet
// queried by how many candidates would survive its answer, submits the input
// with the lowest score, and keeps only the models whose stored output equals
// the black-box answer exactly.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbi/corpus.hpp"
#include "fbi/errors.hpp"
#include "fbi/parallel.hpp"
#include "fbi/random.hpp"

namespace fbi {

class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(std::size_t queries_used)
      : Error("BudgetExhausted: query budget of " + std::to_string(queries_used) + " spent without a verdict",
              Category::kProtocol),
        queries_used_(queries_used) {}
  std::size_t queries_used() const { return queries_used_; }

 private:
  std::size_t queries_used_;
};

template <typename T>
concept QueryOracle = requires(T& oracle, std::size_t input) {
  { oracle.query(input) } -> std::convertible_to<TopKOutput>;
};

// Black-box that replays a stored model column. Counts its queries.
class ReplayOracle {
 public:
  ReplayOracle(const PredictionTable& table, std::size_t model) : table_(&table), model_(model) {}

  TopKOutput query(std::size_t input) {
    ++queries_;
    auto out = table_->output(model_, input);
    return TopKOutput(out.begin(), out.end());
  }

  std::size_t queries() const { return queries_; }
  std::size_t model() const { return model_; }

 private:
  const PredictionTable* table_;
  std::size_t model_;
  std::size_t queries_ = 0;
};

// Black-box that replays a model of another table, answering by input id.
// Every input of `table` must exist in `source`.
class ForeignReplayOracle {
 public:
  ForeignReplayOracle(const PredictionTable& table, const PredictionTable& source, std::size_t model)
      : source_(&source), model_(model) {
    if (source.k() != table.k()) throw ConsistencyError("black-box table has a different k");
    rows_.reserve(table.num_inputs());
    for (std::size_t i = 0; i < table.num_inputs(); ++i) {
      auto j = source.find_input(table.input_id(i));
      if (!j) throw ConsistencyError("black-box table lacks input '" + table.input_id(i) + "'");
      rows_.push_back(*j);
    }
  }

  TopKOutput query(std::size_t input) {
    ++queries_;
    auto out = source_->output(model_, rows_.at(input));
    return TopKOutput(out.begin(), out.end());
  }

  std::size_t queries() const { return queries_; }

 private:
  const PredictionTable* source_;
  std::size_t model_;
  std::vector<std::size_t> rows_;
  std::size_t queries_ = 0;
};

enum class ScoreRule { kExpectation, kWorstCase };

inline std::string_view to_string(ScoreRule r) {
  return r == ScoreRule::kExpectation ? "expectation" : "worst-case";
}

inline ScoreRule parse_score_rule(std::string_view s) {
  if (s == "expectation") return ScoreRule::kExpectation;
  if (s == "worst-case" || s == "worst" || s == "max") return ScoreRule::kWorstCase;
  throw ConfigError("unknown score rule '" + std::string(s) + "'");
}

struct GreedyOptions {
  ScoreRule rule = ScoreRule::kExpectation;
  // Defaults to the number of inputs.
  std::optional<std::size_t> max_queries;
  // Lowest-score ties go to the smallest input index unless a seed is given,
  // in which case one of them is drawn at random.
  std::optional<std::uint64_t> random_ties_seed;
};

struct TranscriptStep {
  std::size_t input = 0;
  TopKOutput output;
  double score = 0.0;  // score of the submitted input
  // Candidate counts after the answer: detection uses (family, outside),
  // identification uses (models, live families).
  std::size_t remaining_a = 0;
  std::size_t remaining_b = 0;
};

enum class Verdict { kPositive, kNegative, kFailure };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kPositive: return "positive";
    case Verdict::kNegative: return "negative";
    case Verdict::kFailure: return "failure";
  }
  return "?";
}

struct CandidateState {
  std::size_t step = 0;
  std::vector<std::size_t> remaining_family;   // detection
  std::vector<std::size_t> remaining_outside;  // detection
  std::vector<std::size_t> remaining_all;      // identification
  std::vector<std::size_t> queried;
  std::vector<TranscriptStep> transcript;
};

struct DetectionOutcome {
  Verdict verdict = Verdict::kFailure;
  std::size_t queries_used = 0;
  CandidateState final_state;
};

struct IdentificationOutcome {
  std::optional<std::size_t> family;  // nullopt on failure
  std::size_t queries_used = 0;
  CandidateState final_state;
};

namespace detail {

// Assigns each model in `models` a group id such that two models share a group
// iff their outputs on `input` are equal. Returns the number of groups.
// `slot` is a reusable buffer.
inline std::size_t group_outputs(const PredictionTable& table, std::size_t input,
                                 std::span<const std::size_t> models, std::vector<std::uint32_t>& slot,
                                 std::vector<std::size_t>& group) {
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
  slot.assign(table.num_models(), kUnset);
  group.resize(models.size());
  std::size_t n_groups = 0;
  for (std::size_t j = 0; j < models.size(); ++j) {
    std::uint32_t& g = slot[table.output_class(models[j], input)];
    if (g == kUnset) g = static_cast<std::uint32_t>(n_groups++);
    group[j] = g;
  }
  return n_groups;
}

template <typename Oracle>
TopKOutput ask(Oracle& oracle, std::size_t input, int k) {
  TopKOutput out = oracle.query(input);
  if (out.size() != static_cast<std::size_t>(k)) {
    throw OracleOutputInvalid("black-box returned " + std::to_string(out.size()) + " labels, table has k=" +
                              std::to_string(k));
  }
  return out;
}

inline std::vector<std::size_t> agreeing(const PredictionTable& table, std::span<const std::size_t> models,
                                         std::size_t input, const TopKOutput& answer) {
  std::vector<std::size_t> keep;
  for (std::size_t m : models) {
    auto out = table.output(m, input);
    if (std::equal(out.begin(), out.end(), answer.begin(), answer.end())) keep.push_back(m);
  }
  return keep;
}

// Index of the lowest score among candidates; scores are exact integers.
inline std::size_t pick_lowest(std::span<const std::uint64_t> scores, std::span<const std::size_t> inputs,
                               std::optional<Rng>& tie_rng) {
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  for (auto s : scores) best = std::min(best, s);
  std::vector<std::size_t> ties;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] == best) ties.push_back(j);
  }
  if (tie_rng && ties.size() > 1) return ties[tie_rng->below(ties.size())];
  std::size_t pick = ties.front();
  for (std::size_t j : ties) {
    if (inputs[j] < inputs[pick]) pick = j;
  }
  return pick;
}

}  // namespace detail

// Detection score of `input` scaled by |F|, so that it is an exact integer:
//   expectation: sum_y |M(x,y,O)| * |M(x,y,F)|
//   worst case:  max_y |M(x,y,O)| * |M(x,y,F)|
// over the outputs y produced by the remaining family members F, with O the
// remaining models outside the family.
inline std::uint64_t detection_score_scaled(const PredictionTable& table, std::size_t input,
                                            std::span<const std::size_t> family,
                                            std::span<const std::size_t> outside, ScoreRule rule) {
  thread_local std::vector<std::size_t> all, group;
  thread_local std::vector<std::uint32_t> scratch;
  thread_local std::vector<std::uint64_t> n_f, n_o;
  all.assign(family.begin(), family.end());
  all.insert(all.end(), outside.begin(), outside.end());
  const std::size_t n_groups = detail::group_outputs(table, input, all, scratch, group);
  n_f.assign(n_groups, 0);
  n_o.assign(n_groups, 0);
  for (std::size_t j = 0; j < all.size(); ++j) ++(j < family.size() ? n_f : n_o)[group[j]];
  std::uint64_t score = 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::uint64_t term = n_f[g] * n_o[g];
    score = rule == ScoreRule::kExpectation ? score + term : std::max(score, term);
  }
  return score;
}

// Hypothesis test "the black-box belongs to `family`".
template <QueryOracle Oracle>
DetectionOutcome detect(const PredictionTable& table, std::span<const std::size_t> family, Oracle& blackbox,
                        const GreedyOptions& options = {}) {
  if (family.empty()) throw ConfigError("detection family is empty");
  std::vector<bool> in_family(table.num_models(), false);
  for (std::size_t m : family) {
    if (m >= table.num_models()) throw ConfigError("family member out of range");
    in_family[m] = true;
  }
  CandidateState state;
  for (std::size_t m = 0; m < table.num_models(); ++m) {
    (in_family[m] ? state.remaining_family : state.remaining_outside).push_back(m);
  }
  if (state.remaining_outside.empty()) throw ConfigError("family must be a strict subset of the table models");

  const std::size_t budget = options.max_queries.value_or(table.num_inputs());
  std::optional<Rng> tie_rng;
  if (options.random_ties_seed) tie_rng.emplace(*options.random_ties_seed);
  std::vector<bool> queried(table.num_inputs(), false);

  auto finish = [&](Verdict v) {
    return DetectionOutcome{v, state.step, std::move(state)};
  };

  for (;;) {
    if (state.remaining_outside.empty()) return finish(Verdict::kPositive);
    if (state.remaining_family.empty()) return finish(Verdict::kNegative);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < table.num_inputs(); ++i) {
      if (!queried[i]) candidates.push_back(i);
    }
    if (candidates.empty()) return finish(Verdict::kFailure);
    if (state.step >= budget) throw BudgetExhausted(state.step);

    std::vector<std::uint64_t> scores(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t j) {
      scores[j] = detection_score_scaled(table, candidates[j], state.remaining_family,
                                         state.remaining_outside, options.rule);
    });
    const std::size_t pick = detail::pick_lowest(scores, candidates, tie_rng);
    const std::uint64_t all_alike =
        static_cast<std::uint64_t>(state.remaining_family.size()) * state.remaining_outside.size();
    // Every remaining candidate answers alike on every input left.
    if (scores[pick] == all_alike) return finish(Verdict::kFailure);

    const std::size_t x = candidates[pick];
    const double score = static_cast<double>(scores[pick]) / static_cast<double>(state.remaining_family.size());
    TopKOutput answer = detail::ask(blackbox, x, table.k());
    queried[x] = true;
    state.queried.push_back(x);
    ++state.step;
    auto family_left = detail::agreeing(table, state.remaining_family, x, answer);
    auto outside_left = detail::agreeing(table, state.remaining_outside, x, answer);
    if (family_left.empty() && outside_left.empty()) {
      throw OracleOutputInvalid("answer to input '" + table.input_id(x) + "' matches no known model");
    }
    state.remaining_family = std::move(family_left);
    state.remaining_outside = std::move(outside_left);
    state.transcript.push_back(TranscriptStep{x, std::move(answer), score, state.remaining_family.size(),
                                              state.remaining_outside.size()});
  }
}

// Identification score of `input` scaled by |A|:
//   expectation: sum_y (#families present in M(x,y,A)) * |M(x,y,A)|
//   worst case:  max_y (#families present in M(x,y,A)) * |M(x,y,A)|
inline std::uint64_t identification_score_scaled(const PredictionTable& table, std::size_t input,
                                                 std::span<const std::size_t> remaining,
                                                 const FamilyPartition& partition, ScoreRule rule,
                                                 std::size_t* n_groups_out = nullptr) {
  thread_local std::vector<std::uint32_t> scratch;
  thread_local std::vector<std::size_t> group;
  thread_local std::vector<std::pair<std::size_t, std::size_t>> gf;
  thread_local std::vector<std::uint64_t> n_fam, n_models;
  const std::size_t n_groups = detail::group_outputs(table, input, remaining, scratch, group);
  if (n_groups_out) *n_groups_out = n_groups;
  // (group, family) pairs, deduplicated, give the family count per group.
  gf.clear();
  for (std::size_t j = 0; j < remaining.size(); ++j) gf.emplace_back(group[j], *partition.family_of(remaining[j]));
  std::sort(gf.begin(), gf.end());
  gf.erase(std::unique(gf.begin(), gf.end()), gf.end());
  n_fam.assign(n_groups, 0);
  n_models.assign(n_groups, 0);
  for (const auto& [g, f] : gf) ++n_fam[g];
  for (std::size_t g : group) ++n_models[g];
  std::uint64_t score = 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::uint64_t term = n_fam[g] * n_models[g];
    score = rule == ScoreRule::kExpectation ? score + term : std::max(score, term);
  }
  return score;
}

inline std::size_t live_families(std::span<const std::size_t> remaining, const FamilyPartition& partition) {
  std::vector<std::size_t> fams;
  for (std::size_t m : remaining) fams.push_back(*partition.family_of(m));
  std::sort(fams.begin(), fams.end());
  return static_cast<std::size_t>(std::unique(fams.begin(), fams.end()) - fams.begin());
}

// Which family of `partition` does the black-box belong to.
template <QueryOracle Oracle>
IdentificationOutcome identify(const PredictionTable& table, const FamilyPartition& partition, Oracle& blackbox,
                               const GreedyOptions& options = {}) {
  if (!partition.covers_all_models()) throw ConfigError("identification partition must cover every model");
  CandidateState state;
  for (std::size_t m = 0; m < table.num_models(); ++m) state.remaining_all.push_back(m);

  const std::size_t budget = options.max_queries.value_or(table.num_inputs());
  std::optional<Rng> tie_rng;
  if (options.random_ties_seed) tie_rng.emplace(*options.random_ties_seed);
  std::vector<bool> queried(table.num_inputs(), false);

  for (;;) {
    const std::size_t live = live_families(state.remaining_all, partition);
    if (live == 1) {
      const std::size_t fam = *partition.family_of(state.remaining_all.front());
      return IdentificationOutcome{fam, state.step, std::move(state)};
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < table.num_inputs(); ++i) {
      if (!queried[i]) candidates.push_back(i);
    }
    if (candidates.empty()) return IdentificationOutcome{std::nullopt, state.step, std::move(state)};
    if (state.step >= budget) throw BudgetExhausted(state.step);
    std::vector<std::uint64_t> scores(candidates.size());
    std::vector<std::size_t> groups(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t j) {
      scores[j] = identification_score_scaled(table, candidates[j], state.remaining_all, partition, options.rule,
                                              &groups[j]);
    });
    // Inputs on which every remaining model answers alike carry no information.
    std::vector<std::size_t> useful;
    std::vector<std::uint64_t> useful_scores;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (groups[j] > 1) {
        useful.push_back(candidates[j]);
        useful_scores.push_back(scores[j]);
      }
    }
    if (useful.empty()) return IdentificationOutcome{std::nullopt, state.step, std::move(state)};

    const std::size_t pick = detail::pick_lowest(useful_scores, useful, tie_rng);
    const std::size_t x = useful[pick];
    const double score =
        static_cast<double>(useful_scores[pick]) / static_cast<double>(state.remaining_all.size());
    TopKOutput answer = detail::ask(blackbox, x, table.k());
    queried[x] = true;
    state.queried.push_back(x);
    ++state.step;
    auto left = detail::agreeing(table, state.remaining_all, x, answer);
    if (left.empty()) {
      throw OracleOutputInvalid("answer to input '" + table.input_id(x) + "' matches no known model");
    }
    state.remaining_all = std::move(left);
    state.transcript.push_back(TranscriptStep{x, std::move(answer), score, state.remaining_all.size(),
                                              live_families(state.remaining_all, partition)});
  }
}

// Expected number of queries of identification by sequential detection over
// the n families in random order, the black-box family being uniform:
//   (1/n) sum_j pos_j + ((n-1)/(2n)) sum_j neg_j
inline double sequential_expected_queries(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty()) throw EmptyInput("no families");
  if (pos.size() != neg.size()) throw LengthMismatch("positive and negative lists differ in length");
  for (std::size_t j = 0; j < pos.size(); ++j) {
    if (pos[j] < 0.0 || neg[j] < 0.0) throw ConfigError("expected query counts must be non-negative");
  }
  const double n = static_cast<double>(pos.size());
  double sum_pos = 0.0, sum_neg = 0.0;
  for (double p : pos) sum_pos += p;
  for (double q : neg) sum_neg += q;
  return sum_pos / n + (n - 1.0) / (2.0 * n) * sum_neg;
}

}  // namespace fbi
