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

// Repeated seeded open-world experiments: detection TPR at a calibrated FPR,
// family identification with abstention, and variation identification.
//
// Report CSV columns: task,family_flavor,strategy,top_k,L,seed,metric,value.
// Per-trial rows carry the trial seed; aggregate rows carry seed "all".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fbi/config.hpp"
#include "fbi/corpus.hpp"
#include "fbi/distance.hpp"
#include "fbi/errors.hpp"
#include "fbi/family_sim.hpp"
#include "fbi/open_world.hpp"
#include "fbi/parallel.hpp"
#include "fbi/random.hpp"

namespace fbi::protocol {

enum class Task { kDetect, kIdentifyFamily, kIdentifyVariation };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::kDetect: return "detect";
    case Task::kIdentifyFamily: return "identify-family";
    case Task::kIdentifyVariation: return "identify-variation";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "detect") return Task::kDetect;
  if (s == "identify-family") return Task::kIdentifyFamily;
  if (s == "identify-variation") return Task::kIdentifyVariation;
  throw ConfigError("unknown protocol task '" + std::string(s) + "'");
}

struct ProtocolConfig {
  std::vector<Task> tasks{Task::kDetect};
  FamilyFlavor flavor = FamilyFlavor::kVanillaSpan;  // detection families
  // Empty: 30/70 for detection, Entropy for identification.
  std::vector<SelectionStrategy> strategies;
  std::vector<std::size_t> L_grid{20, 50, 100, 500};
  std::vector<int> top_k;  // empty: the table's k
  std::size_t trials = 20;
  double alpha = 0.05;
  // Empty: Close for vanilla-span families, Median for variation families.
  std::optional<DelegateOption> delegate;
  std::uint64_t seed = 1;
  double entropy_fraction = 0.2;
  std::size_t held_out = 2;    // families hidden per identification trial
  std::size_t delegate_L = 0;  // inputs used to rank delegates; 0 = all

  void validate() const {
    if (tasks.empty()) throw ConfigError("no protocol task");
    if (L_grid.empty()) throw ConfigError("empty L grid");
    for (auto L : L_grid) {
      if (L < 2) throw ConfigError("L must be >= 2");
    }
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
    if (!(entropy_fraction > 0.0 && entropy_fraction <= 1.0)) throw ConfigError("entropy_fraction must be in (0, 1]");
  }
};

struct Row {
  std::string task;
  std::string family_flavor;
  std::string strategy;
  int top_k = 1;
  std::size_t L = 0;
  std::string seed;
  std::string metric;
  double value = 0.0;
};

inline std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Report {
  std::vector<Row> rows;

  // Value of an aggregate row, if present.
  std::optional<double> aggregate(std::string_view task, std::string_view strategy, int top_k, std::size_t L,
                                  std::string_view metric) const {
    for (const Row& r : rows) {
      if (r.seed == "all" && r.task == task && r.strategy == strategy && r.top_k == top_k && r.L == L &&
          r.metric == metric) {
        return r.value;
      }
    }
    return std::nullopt;
  }

  std::vector<double> per_trial(std::string_view task, std::string_view strategy, int top_k, std::size_t L,
                                std::string_view metric) const {
    std::vector<double> out;
    for (const Row& r : rows) {
      if (r.seed != "all" && r.task == task && r.strategy == strategy && r.top_k == top_k && r.L == L &&
          r.metric == metric) {
        out.push_back(r.value);
      }
    }
    return out;
  }

  void write_csv(std::ostream& out) const {
    out << "task,family_flavor,strategy,top_k,L,seed,metric,value\n";
    for (const Row& r : rows) {
      out << r.task << ',' << r.family_flavor << ',' << r.strategy << ',' << r.top_k << ',' << r.L << ','
          << r.seed << ',' << r.metric << ',' << format_value(r.value) << '\n';
    }
  }
};

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double rate_below(std::span<const double> d, double tau) {
  if (d.empty()) return 0.0;
  std::size_t n = 0;
  for (double x : d) n += x < tau;
  return static_cast<double>(n) / static_cast<double>(d.size());
}

// ---------------------------------------------------------------------------
// Delegates
// ---------------------------------------------------------------------------

struct FamilyDelegates {
  std::size_t family = 0;  // index into the partition
  std::size_t anchor = 0;
  std::vector<std::size_t> delegates;
  std::size_t close = 0;
  std::size_t median = 0;
};

inline DelegateOption default_delegate(FamilyFlavor flavor) {
  return flavor == FamilyFlavor::kVariationSpan ? DelegateOption::kMedian : DelegateOption::kClose;
}

// Delegates of every family of the partition. A family without an anchor is
// anchored on its first member.
inline std::vector<FamilyDelegates> prepare_delegates(const PredictionTable& table, const FamilyPartition& partition,
                                                      DelegateOption option, std::size_t delegate_L,
                                                      std::uint64_t seed) {
  std::vector<FamilyDelegates> out(partition.size());
  parallel_for(partition.size(), [&](std::size_t f) {
    const Family& fam = partition[f];
    const std::size_t anchor = fam.anchor.value_or(fam.members.front());
    const DelegateChoice c =
        choose_delegate(table, fam.members, anchor, option, delegate_L, mix_seed(seed, fam.id));
    out[f].family = f;
    out[f].anchor = anchor;
    out[f].delegates = c.delegates;
    out[f].close = c.ranking.front().second;
    out[f].median = c.ranking[(c.ranking.size() - 1) / 2].second;
  }, 1);
  return out;
}

inline std::vector<SurjectedSequence> delegate_sequences(const PredictionTable& table, const FamilyDelegates& d,
                                                         std::span<const std::size_t> inputs) {
  std::vector<SurjectedSequence> seqs;
  for (std::size_t m : d.delegates) seqs.push_back(surject_model(table, m, inputs));
  return seqs;
}

// Distinct family anchors, the default known set for Entropy selection.
inline std::vector<std::size_t> partition_anchors(const FamilyPartition& partition) {
  std::set<std::size_t> s;
  for (const Family& f : partition.families()) s.insert(f.anchor.value_or(f.members.front()));
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

struct DetectionTrial {
  std::vector<double> positives;  // distances of family members to their family's delegates
  std::vector<double> negatives;  // distances of outside models
  std::size_t degenerate = 0;
  CalibratedTest test;
  double tpr = 0.0;
  double fpr = 0.0;
};

// One trial: for each family, a fresh query sample; every model that is not
// one of the family's delegates is tested against them.
inline DetectionTrial detection_trial(const PredictionTable& table, const FamilyPartition& partition,
                                      std::span<const FamilyDelegates> delegates, const QuerySampler& sampler,
                                      SelectionStrategy strategy, std::size_t L, double alpha,
                                      std::uint64_t trial_seed) {
  struct Part {
    std::vector<double> pos, neg;
    std::size_t degenerate = 0;
  };
  std::vector<Part> parts(delegates.size());
  parallel_for(delegates.size(), [&](std::size_t j) {
    const FamilyDelegates& d = delegates[j];
    const auto inputs = sampler.sample(strategy, L, d.anchor, mix_seed(trial_seed, partition[d.family].id));
    const auto seqs = delegate_sequences(table, d, inputs);
    for (std::size_t m = 0; m < table.num_models(); ++m) {
      if (std::find(d.delegates.begin(), d.delegates.end(), m) != d.delegates.end()) continue;
      const CompoundReport r = compound_report(surject_model(table, m, inputs), seqs);
      parts[j].degenerate += r.all_degenerate();
      (partition.family_of(m) == d.family ? parts[j].pos : parts[j].neg).push_back(r.distance);
    }
  }, 1);
  DetectionTrial t;
  for (auto& p : parts) {
    t.positives.insert(t.positives.end(), p.pos.begin(), p.pos.end());
    t.negatives.insert(t.negatives.end(), p.neg.begin(), p.neg.end());
    t.degenerate += p.degenerate;
  }
  t.test = calibrate_threshold(t.negatives, alpha, L, strategy);
  t.tpr = rate_below(t.positives, t.test.tau);
  t.fpr = rate_below(t.negatives, t.test.tau);
  return t;
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) { return mix_seed(seed, trial); }

inline void run_detection(const PredictionTable& table, const FamilyPartition& partition,
                          const ProtocolConfig& cfg, int k, Report& report) {
  const DelegateOption option = cfg.delegate.value_or(default_delegate(partition.flavor()));
  const auto delegates_all = prepare_delegates(table, partition, option, cfg.delegate_L, cfg.seed);
  std::vector<FamilyDelegates> delegates;
  for (const auto& d : delegates_all) {
    if (partition[d.family].members.size() > d.delegates.size()) delegates.push_back(d);
  }
  if (delegates.empty()) throw ConfigError("detection needs a family with a non-delegate member");
  std::vector<std::size_t> anchors;
  for (const auto& d : delegates) anchors.push_back(d.anchor);
  const auto known = partition_anchors(partition);
  const QuerySampler sampler(table, known, cfg.entropy_fraction, anchors);
  const std::vector<SelectionStrategy> strategies =
      cfg.strategies.empty() ? std::vector<SelectionStrategy>{SelectionStrategy::kSplit3070} : cfg.strategies;
  const std::string flavor(to_string(partition.flavor()));
  for (SelectionStrategy s : strategies) {
    const std::string strat(to_string(s));
    for (std::size_t L : cfg.L_grid) {
      std::vector<double> tpr, fpr, tau;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const std::uint64_t ts = trial_seed(cfg.seed, t);
        const DetectionTrial trial = detection_trial(table, partition, delegates, sampler, s, L, cfg.alpha, ts);
        const std::string seed = std::to_string(ts);
        report.rows.push_back({"detect", flavor, strat, k, L, seed, "tpr", trial.tpr});
        report.rows.push_back({"detect", flavor, strat, k, L, seed, "fpr", trial.fpr});
        report.rows.push_back({"detect", flavor, strat, k, L, seed, "tau", trial.test.tau});
        tpr.push_back(trial.tpr);
        fpr.push_back(trial.fpr);
        tau.push_back(trial.test.tau);
        if (t == 0) {
          report.rows.push_back({"detect", flavor, strat, k, L, "all", "positives",
                                 static_cast<double>(trial.positives.size())});
          report.rows.push_back({"detect", flavor, strat, k, L, "all", "negatives",
                                 static_cast<double>(trial.negatives.size())});
        }
      }
      report.rows.push_back({"detect", flavor, strat, k, L, "all", "tpr_mean", mean_of(tpr)});
      report.rows.push_back({"detect", flavor, strat, k, L, "all", "tpr_std", sample_std(tpr)});
      report.rows.push_back({"detect", flavor, strat, k, L, "all", "fpr_mean", mean_of(fpr)});
      report.rows.push_back({"detect", flavor, strat, k, L, "all", "tau_mean", mean_of(tau)});
    }
  }
}

// ---------------------------------------------------------------------------
// Family identification (first stage)
// ---------------------------------------------------------------------------

struct FamilyCase {
  bool positive = false;          // the black-box's family is known
  std::size_t truth = 0;          // its family (partition index), when positive
  std::size_t best = 0;           // argmin family (partition index)
  double distance = 1.0;          // compound distance to `best`
};

// Every non-delegate model of an anchored family against the known families
// on one shared query list.
inline std::vector<FamilyCase> family_identification_trial(
    const PredictionTable& table, const FamilyPartition& partition, std::span<const FamilyDelegates> delegates,
    std::span<const std::size_t> known, std::span<const std::size_t> hidden, SelectionStrategy strategy,
    std::size_t L, double entropy_fraction, std::uint64_t trial_seed) {
  std::vector<std::size_t> known_models;
  for (std::size_t f : known) known_models.push_back(delegates[f].anchor);
  const QuerySampler sampler(table, known_models, entropy_fraction);
  const auto inputs = sampler.sample(strategy, L, std::nullopt, trial_seed);
  std::vector<KnownFamily> families;
  std::set<std::size_t> delegate_models;
  for (std::size_t f : known) {
    families.push_back(KnownFamily{partition[f].id, delegate_sequences(table, delegates[f], inputs)});
    delegate_models.insert(delegates[f].delegates.begin(), delegates[f].delegates.end());
  }
  std::vector<std::size_t> subjects;
  for (std::size_t f : known)
    for (std::size_t m : partition[f].members)
      if (!delegate_models.count(m)) subjects.push_back(m);
  for (std::size_t f : hidden)
    for (std::size_t m : partition[f].members) subjects.push_back(m);
  std::sort(subjects.begin(), subjects.end());
  std::vector<FamilyCase> cases(subjects.size());
  const std::set<std::size_t> known_set(known.begin(), known.end());
  parallel_for(subjects.size(), [&](std::size_t j) {
    const std::size_t m = subjects[j];
    const SurjectedSequence b = surject_model(table, m, inputs);
    bool degenerate = false;
    const auto d = detail::family_distances(b, families, degenerate);
    const std::size_t best = detail::argmin_by_id(d, families);
    const std::size_t fam = *partition.family_of(m);
    cases[j] = FamilyCase{known_set.count(fam) > 0, fam, known[best], d[best]};
  }, 8);
  return cases;
}

inline void run_family_identification(const PredictionTable& table, const FamilyPartition& partition,
                                      const ProtocolConfig& cfg, int k, Report& report) {
  const DelegateOption option = cfg.delegate.value_or(DelegateOption::kClose);
  const auto delegates = prepare_delegates(table, partition, option, cfg.delegate_L, cfg.seed);
  const std::size_t n_fam = partition.size();
  if (n_fam < cfg.held_out + 2) {
    throw ConfigError("identification needs at least held_out + 2 = " + std::to_string(cfg.held_out + 2) +
                      " families");
  }
  const std::vector<SelectionStrategy> strategies =
      cfg.strategies.empty() ? std::vector<SelectionStrategy>{SelectionStrategy::kEntropy} : cfg.strategies;
  const std::string flavor(to_string(partition.flavor()));
  for (SelectionStrategy s : strategies) {
    if (s == SelectionStrategy::kSplit5050 || s == SelectionStrategy::kSplit3070) {
      throw ConfigError("split selections need a single hypothesis anchor; use all or entropy for identification");
    }
    const std::string strat(to_string(s));
    for (std::size_t L : cfg.L_grid) {
      std::vector<std::vector<FamilyCase>> trials(cfg.trials);
      std::vector<double> negatives;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const std::uint64_t ts = trial_seed(cfg.seed, t);
        Rng rng(mix_seed(ts, "held_out"));
        auto hidden = rng.sample_indices(n_fam, cfg.held_out);
        std::sort(hidden.begin(), hidden.end());
        std::vector<std::size_t> known;
        for (std::size_t f = 0; f < n_fam; ++f) {
          if (!std::binary_search(hidden.begin(), hidden.end(), f)) known.push_back(f);
        }
        trials[t] = family_identification_trial(table, partition, delegates, known, hidden, s, L,
                                                cfg.entropy_fraction, ts);
        for (const auto& c : trials[t]) {
          if (!c.positive) negatives.push_back(c.distance);
        }
      }
      const CalibratedTest test = calibrate_threshold(negatives, cfg.alpha, L, s);
      std::vector<double> correct, abstain, wrong, neg_abstain, raw_correct;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        std::size_t n_pos = 0, n_neg = 0, c = 0, a = 0, w = 0, na = 0, rc = 0;
        for (const auto& fc : trials[t]) {
          const bool accept = fc.distance < test.tau;
          if (fc.positive) {
            ++n_pos;
            rc += fc.best == fc.truth;
            if (!accept) ++a;
            else if (fc.best == fc.truth) ++c;
            else ++w;
          } else {
            ++n_neg;
            na += !accept;
          }
        }
        auto ratio = [](std::size_t x, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(x) / n; };
        const std::string seed = std::to_string(trial_seed(cfg.seed, t));
        correct.push_back(ratio(c, n_pos));
        abstain.push_back(ratio(a, n_pos));
        wrong.push_back(ratio(w, n_pos));
        neg_abstain.push_back(ratio(na, n_neg));
        raw_correct.push_back(ratio(rc, n_pos));
        report.rows.push_back({"identify-family", flavor, strat, k, L, seed, "correct", correct.back()});
        report.rows.push_back({"identify-family", flavor, strat, k, L, seed, "abstain", abstain.back()});
        report.rows.push_back({"identify-family", flavor, strat, k, L, seed, "wrong", wrong.back()});
        report.rows.push_back({"identify-family", flavor, strat, k, L, seed, "negative_abstain", neg_abstain.back()});
      }
      report.rows.push_back({"identify-family", flavor, strat, k, L, "all", "tau", test.tau});
      report.rows.push_back({"identify-family", flavor, strat, k, L, "all", "correct_mean", mean_of(correct)});
      report.rows.push_back({"identify-family", flavor, strat, k, L, "all", "abstain_mean", mean_of(abstain)});
      report.rows.push_back({"identify-family", flavor, strat, k, L, "all", "wrong_mean", mean_of(wrong)});
      report.rows.push_back(
          {"identify-family", flavor, strat, k, L, "all", "negative_abstain_mean", mean_of(neg_abstain)});
      report.rows.push_back(
          {"identify-family", flavor, strat, k, L, "all", "correct_without_threshold_mean", mean_of(raw_correct)});
    }
  }
}

// ---------------------------------------------------------------------------
// Variation identification (second stage)
// ---------------------------------------------------------------------------

// Variation families sharing an anchor, excluding the anchor's own family.
inline std::vector<std::vector<std::size_t>> variation_groups(const FamilyPartition& partition,
                                                              std::span<const FamilyDelegates> delegates) {
  std::map<std::size_t, std::vector<std::size_t>> by_anchor;
  for (const auto& d : delegates) {
    const auto& members = partition[d.family].members;
    if (std::find(members.begin(), members.end(), d.anchor) != members.end()) continue;
    by_anchor[d.anchor].push_back(d.family);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [anchor, fams] : by_anchor) {
    if (fams.size() >= 2) groups.push_back(std::move(fams));
  }
  return groups;
}

// Black-boxes tested against one group of variation families.
struct VariationSubject {
  const PredictionTable* table = nullptr;
  std::size_t model = 0;
  std::size_t family = 0;  // position within the group
};

// Without probes, the subjects are the family members that are neither the
// close nor the median delegate, so the subject set does not depend on the
// delegate option.
inline std::vector<std::vector<VariationSubject>> variation_subjects(
    const PredictionTable& table, const FamilyPartition& partition, std::span<const FamilyDelegates> delegates,
    std::span<const std::vector<std::size_t>> groups, const sim::ProbeSet* probes) {
  std::vector<std::vector<VariationSubject>> out(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t j = 0; j < groups[g].size(); ++j) {
      const std::size_t f = groups[g][j];
      if (probes) {
        for (std::size_t q = 0; q < probes->variation_family.size(); ++q) {
          if (probes->variation_family[q] == f) out[g].push_back({&probes->table, q, j});
        }
        continue;
      }
      for (std::size_t m : partition[f].members) {
        if (m != delegates[f].close && m != delegates[f].median) out[g].push_back({&table, m, j});
      }
    }
  }
  return out;
}

// (correct, total) over every subject of one trial.
inline std::pair<std::size_t, std::size_t> variation_trial(
    const PredictionTable& table, const FamilyPartition& partition, std::span<const FamilyDelegates> delegates,
    std::span<const std::vector<std::size_t>> groups, std::span<const std::vector<VariationSubject>> subjects,
    const QuerySampler& sampler, SelectionStrategy strategy, std::size_t L, std::uint64_t trial_seed) {
  std::vector<std::pair<std::size_t, std::size_t>> per_group(groups.size());
  parallel_for(groups.size(), [&](std::size_t g) {
    const auto& fams = groups[g];
    const std::size_t anchor = delegates[fams.front()].anchor;
    const auto inputs = sampler.sample(strategy, L, anchor, mix_seed(trial_seed, g));
    std::vector<KnownFamily> known;
    for (std::size_t f : fams) {
      known.push_back(KnownFamily{partition[f].id, delegate_sequences(table, delegates[f], inputs)});
    }
    std::size_t correct = 0;
    for (const VariationSubject& s : subjects[g]) {
      correct += identify_variation(surject_model(*s.table, s.model, inputs), known) == s.family;
    }
    per_group[g] = {correct, subjects[g].size()};
  }, 1);
  std::pair<std::size_t, std::size_t> sum{0, 0};
  for (auto [c, n] : per_group) {
    sum.first += c;
    sum.second += n;
  }
  return sum;
}

inline void run_variation_identification(const PredictionTable& table, const FamilyPartition& partition,
                                         const sim::ProbeSet* probes, const ProtocolConfig& cfg, int k,
                                         Report& report) {
  const DelegateOption option = cfg.delegate.value_or(DelegateOption::kMedian);
  const auto delegates = prepare_delegates(table, partition, option, cfg.delegate_L, cfg.seed);
  const auto groups = variation_groups(partition, delegates);
  if (groups.empty()) throw ConfigError("variation identification needs an anchor with two variation families");
  const auto subjects = variation_subjects(table, partition, delegates, groups, probes);
  std::vector<std::size_t> anchors;
  for (const auto& g : groups) anchors.push_back(delegates[g.front()].anchor);
  const QuerySampler sampler(table, partition_anchors(partition), cfg.entropy_fraction, anchors);
  const std::vector<SelectionStrategy> strategies =
      cfg.strategies.empty() ? std::vector<SelectionStrategy>{SelectionStrategy::kEntropy} : cfg.strategies;
  const std::string flavor(to_string(partition.flavor()));
  const std::string delegate_tag(to_string(option));
  for (SelectionStrategy s : strategies) {
    const std::string strat(to_string(s));
    for (std::size_t L : cfg.L_grid) {
      std::vector<double> rates;
      std::size_t correct = 0, total = 0;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const std::uint64_t ts = trial_seed(cfg.seed, t);
        const auto [c, n] = variation_trial(table, partition, delegates, groups, subjects, sampler, s, L, ts);
        correct += c;
        total += n;
        rates.push_back(n == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(n));
        report.rows.push_back({"identify-variation", flavor, strat, k, L, std::to_string(ts), "correct", rates.back()});
      }
      report.rows.push_back({"identify-variation", flavor, strat, k, L, "all", "correct_mean", mean_of(rates)});
      report.rows.push_back({"identify-variation", flavor, strat, k, L, "all", "cases", static_cast<double>(total)});
      report.rows.push_back({"identify-variation", flavor, strat, k, L, "all", "delegate=" + delegate_tag,
                             total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total)});
    }
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

struct Dataset {
  PredictionTable table;
  std::optional<FamilyPartition> vanilla_span;
  std::optional<FamilyPartition> variation_span;
  std::optional<sim::ProbeSet> probes;  // unseen variants for variation identification
};

inline Dataset dataset_from_ensemble(const sim::Ensemble& e) {
  return Dataset{e.table, e.vanilla_span, e.variation_span, e.probes};
}

inline Report run_protocol(const Dataset& data, const ProtocolConfig& cfg) {
  cfg.validate();
  Report report;
  std::vector<int> ks = cfg.top_k.empty() ? std::vector<int>{data.table.k()} : cfg.top_k;
  for (int k : ks) {
    const PredictionTable table = data.table.truncated(k);
    std::optional<sim::ProbeSet> probes = data.probes;
    if (probes) probes->table = probes->table.truncated(k);
    for (Task task : cfg.tasks) {
      switch (task) {
        case Task::kDetect: {
          const auto& p = cfg.flavor == FamilyFlavor::kVariationSpan ? data.variation_span : data.vanilla_span;
          if (!p) throw ConfigError("detection needs a " + std::string(to_string(cfg.flavor)) + " partition");
          run_detection(table, *p, cfg, k, report);
          break;
        }
        case Task::kIdentifyFamily:
          if (!data.vanilla_span) throw ConfigError("family identification needs a vanilla partition");
          run_family_identification(table, *data.vanilla_span, cfg, k, report);
          break;
        case Task::kIdentifyVariation:
          if (!data.variation_span) throw ConfigError("variation identification needs a variation partition");
          run_variation_identification(table, *data.variation_span, probes ? &*probes : nullptr, cfg, k, report);
          break;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

inline const std::set<std::string>& ensemble_keys() {
  static const std::set<std::string> keys = {
      "seed", "n_vanilla", "variants_per_family", "procedures", "num_classes", "top_k", "num_inputs",
      "accuracy_min", "accuracy_max", "eta", "difficulty_corr", "miss", "spread_prob", "confusion_size",
      "confusion_skew", "confusion_prob", "resample",
      "procedure_retain_min", "procedure_retain_max", "mix_min", "mix_max", "strength_shape", "noise_retain",
      "probes_per_procedure"};
  return keys;
}

// Simulator keys, optionally under a prefix such as "sim.".
inline sim::EnsembleSpec ensemble_spec_from_config(const Config& c, const std::string& prefix = "") {
  sim::EnsembleSpec s;
  auto key = [&](const char* k) { return prefix + k; };
  s.seed = c.get_u64(key("seed"), s.seed);
  s.n_vanilla = c.get_u64(key("n_vanilla"), s.n_vanilla);
  s.variants_per_family = c.get_u64(key("variants_per_family"), s.variants_per_family);
  s.procedures = c.get_u64(key("procedures"), s.procedures);
  s.num_classes = static_cast<Label>(c.get_u64(key("num_classes"), static_cast<std::uint64_t>(s.num_classes)));
  s.top_k = static_cast<int>(c.get_u64(key("top_k"), static_cast<std::uint64_t>(s.top_k)));
  s.num_inputs = c.get_u64(key("num_inputs"), s.num_inputs);
  s.accuracy_min = c.get_double(key("accuracy_min"), s.accuracy_min);
  s.accuracy_max = c.get_double(key("accuracy_max"), s.accuracy_max);
  s.eta = c.get_double(key("eta"), s.eta);
  s.difficulty_corr = c.get_double(key("difficulty_corr"), s.difficulty_corr);
  if (auto v = c.find(key("miss"))) s.miss = sim::parse_miss_profile(*v);
  s.spread_prob = c.get_double(key("spread_prob"), s.spread_prob);
  s.confusion_size = c.get_u64(key("confusion_size"), s.confusion_size);
  s.confusion_skew = c.get_double(key("confusion_skew"), s.confusion_skew);
  s.confusion_prob = c.get_double(key("confusion_prob"), s.confusion_prob);
  if (auto v = c.find(key("resample"))) s.resample = sim::parse_resample_mode(*v);
  s.procedure_retain_min = c.get_double(key("procedure_retain_min"), s.procedure_retain_min);
  s.procedure_retain_max = c.get_double(key("procedure_retain_max"), s.procedure_retain_max);
  s.mix_min = c.get_double(key("mix_min"), s.mix_min);
  s.mix_max = c.get_double(key("mix_max"), s.mix_max);
  s.strength_shape = c.get_double(key("strength_shape"), s.strength_shape);
  s.noise_retain = c.get_double(key("noise_retain"), s.noise_retain);
  s.probes_per_procedure = c.get_u64(key("probes_per_procedure"), s.probes_per_procedure);
  s.validate();
  return s;
}

inline const std::set<std::string>& protocol_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"task", "family_flavor", "strategy", "top_k", "L", "trials", "alpha", "delegate",
                               "seed", "entropy_fraction", "held_out", "delegate_L", "threads", "table",
                               "ground_truth", "partition", "variation_partition", "format"};
    for (const auto& s : ensemble_keys()) k.insert("sim." + s);
    return k;
  }();
  return keys;
}

inline ProtocolConfig protocol_config_from(const Config& c) {
  c.check_keys(protocol_keys());
  ProtocolConfig p;
  if (c.has("task")) {
    p.tasks.clear();
    for (const auto& t : c.get_list("task", {})) p.tasks.push_back(parse_task(t));
  }
  if (auto v = c.find("family_flavor")) p.flavor = parse_family_flavor(*v);
  for (const auto& s : c.get_list("strategy", {})) p.strategies.push_back(parse_strategy(s));
  if (c.has("L")) {
    p.L_grid.clear();
    for (const auto& v : c.get_list("L", {})) p.L_grid.push_back(Config::to_u64("L", v));
  }
  for (const auto& v : c.get_list("top_k", {})) p.top_k.push_back(static_cast<int>(Config::to_u64("top_k", v)));
  p.trials = c.get_u64("trials", p.trials);
  p.alpha = c.get_double("alpha", p.alpha);
  if (auto v = c.find("delegate")) p.delegate = parse_delegate_option(*v);
  p.seed = c.get_u64("seed", p.seed);
  p.entropy_fraction = c.get_double("entropy_fraction", p.entropy_fraction);
  p.held_out = c.get_u64("held_out", p.held_out);
  p.delegate_L = c.get_u64("delegate_L", p.delegate_L);
  p.validate();
  return p;
}

}  // namespace fbi::protocol
