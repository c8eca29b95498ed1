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

// Statistical detection and identification when the black-box may be a
// variant Alice has never seen: a distance test against family delegates with
// a threshold calibrated on negative pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbi/corpus.hpp"
#include "fbi/distance.hpp"
#include "fbi/errors.hpp"
#include "fbi/random.hpp"
#include "fbi/walled_garden.hpp"

namespace fbi {

inline constexpr std::size_t kMinNegatives = 20;

struct CalibratedTest {
  double tau = 0.0;
  double alpha = 0.05;
  std::size_t L = 0;
  SelectionStrategy strategy = SelectionStrategy::kAll;
  std::size_t negatives_used = 0;
  double empirical_fpr = 0.0;  // on the calibration negatives
};

// Largest tau whose empirical false positive rate {d < tau} on the negatives
// stays within alpha: the (floor(alpha n) + 1)-th smallest negative distance.
inline CalibratedTest calibrate_threshold(std::span<const double> negative_distances, double alpha,
                                          std::size_t L = 0,
                                          SelectionStrategy strategy = SelectionStrategy::kAll) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (negative_distances.size() < kMinNegatives) {
    throw TooFewNegatives("need at least " + std::to_string(kMinNegatives) + " negatives, got " +
                          std::to_string(negative_distances.size()));
  }
  std::vector<double> d(negative_distances.begin(), negative_distances.end());
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const auto allowed = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n) + 1e-9));
  CalibratedTest t;
  t.alpha = alpha;
  t.L = L;
  t.strategy = strategy;
  t.negatives_used = n;
  t.tau = d[std::min(allowed, n - 1)];
  const auto below = static_cast<std::size_t>(std::lower_bound(d.begin(), d.end(), t.tau) - d.begin());
  t.empirical_fpr = static_cast<double>(below) / static_cast<double>(n);
  return t;
}

inline CalibratedTest calibrate_threshold(
    std::span<const std::pair<SurjectedSequence, SurjectedSequence>> negative_pairs, double alpha) {
  std::vector<double> d;
  d.reserve(negative_pairs.size());
  for (const auto& [a, b] : negative_pairs) d.push_back(model_distance(a, b).distance);
  const std::size_t L = negative_pairs.empty() ? 0 : negative_pairs.front().first.size();
  return calibrate_threshold(d, alpha, L);
}

// Empirical false positive rate of a calibrated test on fresh negatives.
inline double false_positive_rate(const CalibratedTest& test, std::span<const double> negative_distances) {
  if (negative_distances.empty()) throw EmptyInput("no negatives");
  std::size_t fp = 0;
  for (double d : negative_distances) fp += d < test.tau;
  return static_cast<double>(fp) / static_cast<double>(negative_distances.size());
}

// Surjected answers of a black-box on `inputs`, w.r.t. the table's reference
// classes. The oracle is queried once per input, in order.
template <QueryOracle Oracle>
SurjectedSequence query_sequence(const PredictionTable& table, Oracle& oracle,
                                 std::span<const std::size_t> inputs) {
  SurjectedSequence seq{{}, table.k()};
  seq.values.reserve(inputs.size());
  for (std::size_t i : inputs) {
    const TopKOutput out = oracle.query(i);
    if (out.size() != static_cast<std::size_t>(table.k())) {
      throw OracleOutputInvalid("black-box answered with depth " + std::to_string(out.size()));
    }
    seq.values.push_back(static_cast<std::uint8_t>(surject(out, table.reference_class(i))));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

struct VariantDetection {
  bool positive = false;
  CompoundReport report;
};

inline VariantDetection detect_variant(const SurjectedSequence& blackbox,
                                       std::span<const SurjectedSequence> delegates,
                                       const CalibratedTest& test) {
  VariantDetection out;
  out.report = compound_report(blackbox, delegates);
  if (out.report.all_degenerate()) {
    throw DegenerateEvidence("every distance is degenerate (constant surjected sequence)");
  }
  out.positive = out.report.distance < test.tau;
  return out;
}

// ---------------------------------------------------------------------------
// Delegates
// ---------------------------------------------------------------------------

enum class DelegateOption { kClose, kMedian, kFar, kCloseMedian };

inline std::string_view to_string(DelegateOption o) {
  switch (o) {
    case DelegateOption::kClose: return "close";
    case DelegateOption::kMedian: return "median";
    case DelegateOption::kFar: return "far";
    case DelegateOption::kCloseMedian: return "close+median";
  }
  return "?";
}

inline DelegateOption parse_delegate_option(std::string_view s) {
  if (s == "close") return DelegateOption::kClose;
  if (s == "median") return DelegateOption::kMedian;
  if (s == "far") return DelegateOption::kFar;
  if (s == "close+median" || s == "close,median" || s == "{close,median}") return DelegateOption::kCloseMedian;
  throw ConfigError("unknown delegate option '" + std::string(s) + "'");
}

struct DelegateChoice {
  DelegateOption option = DelegateOption::kClose;
  std::vector<std::size_t> delegates;  // 1 or 2 table model indices
  std::vector<std::pair<double, std::size_t>> ranking;  // (distance to anchor, model), ascending
};

// Ranks the members of `family` by their distance to `anchor` on `inputs`
// (ties by model id) and picks the member(s) named by `option`. The median of
// an even-sized family is the lower one.
inline DelegateChoice choose_delegate(const PredictionTable& table, std::span<const std::size_t> family,
                                      std::size_t anchor, DelegateOption option,
                                      std::span<const std::size_t> inputs) {
  if (family.empty()) throw EmptyDelegateSet("empty family");
  const SurjectedSequence a = surject_model(table, anchor, inputs);
  DelegateChoice c;
  c.option = option;
  for (std::size_t m : family) {
    const double d = m == anchor ? (a.constant() ? 1.0 : 0.0)
                                 : model_distance(surject_model(table, m, inputs), a).distance;
    c.ranking.emplace_back(d, m);
  }
  std::sort(c.ranking.begin(), c.ranking.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    return table.model_id(x.second) < table.model_id(y.second);
  });
  const std::size_t close = c.ranking.front().second;
  const std::size_t median = c.ranking[(c.ranking.size() - 1) / 2].second;
  switch (option) {
    case DelegateOption::kClose: c.delegates = {close}; break;
    case DelegateOption::kMedian: c.delegates = {median}; break;
    case DelegateOption::kFar: c.delegates = {c.ranking.back().second}; break;
    case DelegateOption::kCloseMedian:
      c.delegates = {close};
      if (median != close) c.delegates.push_back(median);
      break;
  }
  return c;
}

// Same, measured on L inputs drawn uniformly with `seed`; L = 0 uses every
// input of the table.
inline DelegateChoice choose_delegate(const PredictionTable& table, std::span<const std::size_t> family,
                                      std::size_t anchor, DelegateOption option, std::size_t L,
                                      std::uint64_t seed) {
  std::vector<std::size_t> inputs;
  if (L == 0) {
    inputs.resize(table.num_inputs());
    for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i] = i;
  } else {
    inputs = select_inputs(table, SelectionStrategy::kAll, L, std::nullopt, {}, seed).inputs;
  }
  return choose_delegate(table, family, anchor, option, inputs);
}

// ---------------------------------------------------------------------------
// Identification
// ---------------------------------------------------------------------------

struct KnownFamily {
  std::string id;
  std::vector<SurjectedSequence> delegates;  // aligned with the shared query list
};

struct IdentificationVerdict {
  std::optional<std::size_t> family;  // index into `known`; nullopt = abstain
  std::size_t best = 0;               // argmin, reported even when abstaining
  std::vector<double> distances;      // compound distance per known family
  double margin = 0.0;                // second-best minus best

  bool abstained() const { return !family.has_value(); }
};

namespace detail {

inline std::vector<double> family_distances(const SurjectedSequence& blackbox, std::span<const KnownFamily> known,
                                            bool& all_degenerate) {
  std::vector<double> d;
  d.reserve(known.size());
  all_degenerate = true;
  for (const KnownFamily& f : known) {
    const CompoundReport r = compound_report(blackbox, f.delegates);
    all_degenerate = all_degenerate && r.all_degenerate();
    d.push_back(r.distance);
  }
  return d;
}

// Index of the smallest distance; ties go to the smaller family id.
inline std::size_t argmin_by_id(std::span<const double> d, std::span<const KnownFamily> known) {
  std::size_t best = 0;
  for (std::size_t f = 1; f < d.size(); ++f) {
    if (d[f] < d[best] || (d[f] == d[best] && known[f].id < known[best].id)) best = f;
  }
  return best;
}

}  // namespace detail

// Argmin of the compound distance over the known families; abstains when
// even the best family is not closer than tau.
inline IdentificationVerdict identify_family(const SurjectedSequence& blackbox, std::span<const KnownFamily> known,
                                             const CalibratedTest& test) {
  if (known.size() < 2) throw ConfigError("identification needs at least two known families");
  bool degenerate = false;
  IdentificationVerdict v;
  v.distances = detail::family_distances(blackbox, known, degenerate);
  if (degenerate) throw DegenerateEvidence("every family distance is degenerate");
  v.best = detail::argmin_by_id(v.distances, known);
  double second = 1.0;
  for (std::size_t f = 0; f < v.distances.size(); ++f) {
    if (f != v.best) second = std::min(second, v.distances[f]);
  }
  v.margin = second - v.distances[v.best];
  if (v.distances[v.best] < test.tau) v.family = v.best;
  return v;
}

// Second stage: which variation family, knowing the vanilla family. No
// threshold.
inline std::size_t identify_variation(const SurjectedSequence& blackbox, std::span<const KnownFamily> variations) {
  if (variations.empty()) throw EmptyDelegateSet("no variation families");
  bool degenerate = false;
  const auto d = detail::family_distances(blackbox, variations, degenerate);
  return detail::argmin_by_id(d, variations);
}

// ---------------------------------------------------------------------------
// Query sampling
// ---------------------------------------------------------------------------

// Input pools for the four selection strategies, built once so that sampling
// is const and thread-safe. Split pools are kept for the given anchors (others
// are built on demand); the Entropy pool is the head of the entropy ranking
// over `known`, of size max(L, entropy_fraction * N).
class QuerySampler {
 public:
  using SplitPools = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>;

  QuerySampler(const PredictionTable& table, std::span<const std::size_t> known, double entropy_fraction,
               std::span<const std::size_t> anchors = {})
      : table_(&table), entropy_fraction_(entropy_fraction) {
    if (!(entropy_fraction_ > 0.0 && entropy_fraction_ <= 1.0)) {
      throw ConfigError("entropy pool fraction must be in (0, 1]");
    }
    all_.resize(table.num_inputs());
    for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
    if (!known.empty()) ranking_ = entropy_ranking(table, known);
    for (std::size_t a : anchors) {
      if (!splits_.count(a)) splits_.emplace(a, build_split(a));
    }
  }

  const std::vector<std::size_t>& ranking() const { return ranking_; }

  std::vector<std::size_t> sample(SelectionStrategy strategy, std::size_t L, std::optional<std::size_t> anchor,
                                  std::uint64_t seed) const {
    Rng rng(mix_seed(seed, "query_sampler"));
    switch (strategy) {
      case SelectionStrategy::kAll:
        return sample_from(all_, L, rng);
      case SelectionStrategy::kSplit5050:
      case SelectionStrategy::kSplit3070: {
        if (!anchor) throw ConfigError("split selection requires an anchor model");
        auto it = splits_.find(*anchor);
        const SplitPools pools = it != splits_.end() ? it->second : build_split(*anchor);
        const auto n_correct =
            static_cast<std::size_t>(std::floor(correct_share(strategy) * static_cast<double>(L) + 0.5));
        const std::size_t n_wrong = L - n_correct;
        if (n_correct > pools.first.size() || n_wrong > pools.second.size()) {
          throw InsufficientPool("split needs " + std::to_string(n_correct) + " correct / " +
                                 std::to_string(n_wrong) + " wrong inputs");
        }
        auto out = sample_from(pools.first, n_correct, rng);
        auto wrong = sample_from(pools.second, n_wrong, rng);
        out.insert(out.end(), wrong.begin(), wrong.end());
        std::sort(out.begin(), out.end());
        return out;
      }
      case SelectionStrategy::kEntropy: {
        if (ranking_.empty()) throw ConfigError("entropy selection requires a known model set");
        const auto share = static_cast<std::size_t>(std::ceil(entropy_fraction_ * static_cast<double>(ranking_.size())));
        const std::size_t head = std::min(ranking_.size(), std::max(L, share));
        return sample_from(std::span<const std::size_t>(ranking_.data(), head), L, rng);
      }
    }
    return {};
  }

 private:
  SplitPools build_split(std::size_t anchor) const {
    SplitPools pools;
    for (std::size_t i = 0; i < table_->num_inputs(); ++i) {
      (table_->top1(anchor, i) == table_->reference_class(i) ? pools.first : pools.second).push_back(i);
    }
    return pools;
  }

  const PredictionTable* table_;
  double entropy_fraction_;
  std::vector<std::size_t> all_;
  std::vector<std::size_t> ranking_;
  std::map<std::size_t, SplitPools> splits_;
};

}  // namespace fbi
