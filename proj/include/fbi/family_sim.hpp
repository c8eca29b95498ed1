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

// Synthetic model families.
//
// A vanilla model answers each input correctly with its nominal accuracy; the
// correctness events of different vanillas are coupled only through a shared
// per-input difficulty (Gaussian copula with correlation `difficulty_corr`).
// A variant is its parent seen through a channel acting on the surjected
// symbol (rank of the ground truth, 0 if absent), lifted back to a top-k list
// by the smallest rewrite that realizes the drawn symbol.
//
// Variants built by the same procedure share a procedure base: the parent seen
// once through the procedure channel, and a per-input fragility u ~ U(0,1).
// A variant answers like the base where u < 1 - mix and like the parent
// elsewhere, then passes through its own noise channel. The effective parent-to-variant channel is exactly
//   (mix * I + (1 - mix) * W_procedure) * W_noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fbi/channel.hpp"
#include "fbi/corpus.hpp"
#include "fbi/distance.hpp"
#include "fbi/errors.hpp"
#include "fbi/parallel.hpp"
#include "fbi/random.hpp"

namespace fbi::sim {

// Where the ground truth goes when the top-1 answer is wrong.
enum class MissProfile {
  kOmit,    // absent from the top-k (surjected 0)
  kSpread,  // with probability spread_prob at a uniform rank in 2..k, else absent
};

inline std::string_view to_string(MissProfile m) { return m == MissProfile::kOmit ? "omit" : "spread"; }

inline MissProfile parse_miss_profile(std::string_view s) {
  if (s == "omit") return MissProfile::kOmit;
  if (s == "spread") return MissProfile::kSpread;
  throw ConfigError("unknown miss profile '" + std::string(s) + "'");
}

// Per-input confusion structure: wrong answers favor a short list of
// plausible classes, so unrelated models often make the same mistake.
struct Confusion {
  std::size_t size = 0;  // confusable classes per input; 0 draws wrong labels uniformly
  double skew = 1.0;     // Zipf exponent over the list
  double prob = 0.9;     // chance a wrong label comes from the list
};

// Inputs shared by every model of an ensemble.
struct InputUniverse {
  std::vector<std::string> ids;
  std::vector<Label> ground_truth;
  std::vector<double> difficulty;  // standard normal per input
  Label num_classes = 0;
  double difficulty_corr = 0.0;
  Confusion confusion;
  std::vector<Label> confusers;   // n_inputs * confusion.size
  std::vector<double> confusion_weights;

  std::size_t size() const { return ids.size(); }
  std::span<const Label> confusable(std::size_t i) const {
    return {confusers.data() + i * confusion.size, confusion.size};
  }
};

inline InputUniverse make_universe(std::size_t n_inputs, Label num_classes, double difficulty_corr,
                                   std::uint64_t seed, Confusion confusion = {}) {
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (!(difficulty_corr >= 0.0 && difficulty_corr < 1.0)) {
    throw ConfigError("difficulty correlation must be in [0, 1)");
  }
  if (confusion.size >= static_cast<std::size_t>(num_classes)) {
    throw ConfigError("confusion size must be below num_classes");
  }
  if (!(confusion.prob >= 0.0 && confusion.prob <= 1.0)) throw ConfigError("confusion prob must be in [0, 1]");
  if (!(confusion.skew >= 0.0)) throw ConfigError("confusion skew must be >= 0");
  InputUniverse u;
  u.num_classes = num_classes;
  u.difficulty_corr = difficulty_corr;
  u.confusion = confusion;
  Rng rng(mix_seed(seed, "universe"));
  const int width = std::max<int>(5, static_cast<int>(std::to_string(n_inputs).size()));
  for (std::size_t i = 0; i < n_inputs; ++i) {
    std::ostringstream id;
    id << 'x' << std::setw(width) << std::setfill('0') << i;
    u.ids.push_back(id.str());
    u.ground_truth.push_back(static_cast<Label>(rng.below(static_cast<std::uint64_t>(num_classes))));
    u.difficulty.push_back(rng.normal());
  }
  if (confusion.size > 0) {
    Rng crng(mix_seed(seed, "confusers"));
    u.confusers.reserve(n_inputs * confusion.size);
    for (std::size_t i = 0; i < n_inputs; ++i) {
      const std::size_t start = u.confusers.size();
      while (u.confusers.size() - start < confusion.size) {
        const auto l = static_cast<Label>(crng.below(static_cast<std::uint64_t>(num_classes)));
        if (l == u.ground_truth[i]) continue;
        if (std::find(u.confusers.begin() + static_cast<std::ptrdiff_t>(start), u.confusers.end(), l) !=
            u.confusers.end()) {
          continue;
        }
        u.confusers.push_back(l);
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < confusion.size; ++j) {
      u.confusion_weights.push_back(std::pow(static_cast<double>(j + 1), -confusion.skew));
      total += u.confusion_weights.back();
    }
    for (auto& w : u.confusion_weights) w /= total;
  }
  return u;
}

struct VanillaSpec {
  std::string id;
  Label num_classes = 1000;
  double accuracy = 0.8;
  int k = 1;
  std::uint64_t seed = 0;
  MissProfile miss = MissProfile::kOmit;
  double spread_prob = 0.5;
};

// One model's outputs on every input of a universe, model-major like the table.
struct ModelColumn {
  std::string id;
  int k = 1;
  std::vector<Label> cells;  // n_inputs * k

  TopKView output(std::size_t i) const { return {cells.data() + i * static_cast<std::size_t>(k), static_cast<std::size_t>(k)}; }
  std::size_t size() const { return cells.size() / static_cast<std::size_t>(k); }
};

// Analytic distribution of the surjected symbol of a vanilla model.
inline std::vector<double> vanilla_marginal(double accuracy, int k, MissProfile miss, double spread_prob) {
  std::vector<double> p(static_cast<std::size_t>(k) + 1, 0.0);
  p[1] = accuracy;
  if (miss == MissProfile::kSpread && k > 1) {
    p[0] = (1.0 - accuracy) * (1.0 - spread_prob);
    for (int r = 2; r <= k; ++r) p[r] = (1.0 - accuracy) * spread_prob / (k - 1);
  } else {
    p[0] = 1.0 - accuracy;
  }
  return p;
}

namespace detail {

inline Label random_label(Rng& rng, Label num_classes, Label exclude, std::span<const Label> taken) {
  for (;;) {
    const auto l = static_cast<Label>(rng.below(static_cast<std::uint64_t>(num_classes)));
    if (l == exclude) continue;
    if (std::find(taken.begin(), taken.end(), l) != taken.end()) continue;
    return l;
  }
}

// A wrong label for input i, not in `taken`: from the confusable list with
// probability confusion.prob, else uniform.
inline Label wrong_label(Rng& rng, const InputUniverse& u, std::size_t i, std::span<const Label> taken) {
  const Label truth = u.ground_truth[i];
  if (u.confusion.size > 0 && rng.bernoulli(u.confusion.prob)) {
    const auto list = u.confusable(i);
    std::vector<double> w(u.confusion_weights);
    double total = 0.0;
    for (std::size_t j = 0; j < list.size(); ++j) {
      if (std::find(taken.begin(), taken.end(), list[j]) != taken.end()) w[j] = 0.0;
      total += w[j];
    }
    if (total > 0.0) {
      for (auto& x : w) x /= total;
      return list[rng.categorical(w)];
    }
  }
  return random_label(rng, u.num_classes, truth, taken);
}

// Smallest rewrite of `list` whose surjected symbol w.r.t. the truth of input
// i is `target`: move, insert or remove the truth; other labels keep their
// relative order and missing ranks are padded at the end with wrong labels.
inline TopKOutput realize(TopKView list, const InputUniverse& u, std::size_t i, int target, Rng& rng) {
  const Label truth = u.ground_truth[i];
  const int k = static_cast<int>(list.size());
  const int current = surject(list, truth);
  TopKOutput out(list.begin(), list.end());
  if (current == target) return out;
  if (current > 0) out.erase(out.begin() + (current - 1));
  if (target > 0) {
    out.insert(out.begin() + (target - 1), truth);
    if (static_cast<int>(out.size()) > k) out.pop_back();
  }
  while (static_cast<int>(out.size()) < k) out.push_back(wrong_label(rng, u, i, out));
  return out;
}

}  // namespace detail

inline ModelColumn gen_vanilla(const VanillaSpec& spec, const InputUniverse& universe) {
  if (spec.k < 1 || spec.num_classes < spec.k + 1) throw ConfigError("need num_classes >= k + 1");
  if (!(spec.accuracy >= 0.0 && spec.accuracy <= 1.0)) throw ConfigError("accuracy must be in [0, 1]");
  if (spec.num_classes != universe.num_classes) throw ConfigError("vanilla and universe disagree on classes");
  ModelColumn col{spec.id, spec.k, {}};
  col.cells.reserve(universe.size() * static_cast<std::size_t>(spec.k));
  Rng rng(mix_seed(spec.seed, spec.id));
  const double threshold = normal_quantile(spec.accuracy);
  const double shared = std::sqrt(universe.difficulty_corr);
  const double own = std::sqrt(1.0 - universe.difficulty_corr);
  TopKOutput cell;
  for (std::size_t i = 0; i < universe.size(); ++i) {
    const Label truth = universe.ground_truth[i];
    const double latent = shared * universe.difficulty[i] + own * rng.normal();
    const bool correct = latent < threshold;
    int rank = correct ? 1 : 0;
    if (!correct && spec.miss == MissProfile::kSpread && spec.k > 1 && rng.bernoulli(spec.spread_prob)) {
      rank = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.k - 1)));
    }
    cell.clear();
    for (int r = 1; r <= spec.k; ++r) {
      cell.push_back(r == rank ? truth : detail::wrong_label(rng, universe, i, cell));
    }
    col.cells.insert(col.cells.end(), cell.begin(), cell.end());
  }
  return col;
}

inline double accuracy(const ModelColumn& column, std::span<const Label> ground_truth) {
  if (ground_truth.size() != column.size()) throw MissingGroundTruth("ground truth does not cover all inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < column.size(); ++i) hits += column.output(i)[0] == ground_truth[i];
  return column.size() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(column.size());
}

inline double accuracy(const PredictionTable& table, std::size_t model) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < table.num_inputs(); ++i) {
    auto g = table.ground_truth(i);
    if (!g) throw MissingGroundTruth("input '" + table.input_id(i) + "' has no ground truth");
    hits += table.top1(model, i) == *g;
  }
  return static_cast<double>(hits) / static_cast<double>(table.num_inputs());
}

inline SurjectedSequence surject_column(const ModelColumn& column, std::span<const Label> ground_truth) {
  SurjectedSequence seq{{}, column.k};
  seq.values.reserve(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) {
    seq.values.push_back(static_cast<std::uint8_t>(surject(column.output(i), ground_truth[i])));
  }
  return seq;
}

struct VariantSpec {
  std::string id;
  std::string parent;
  std::optional<std::string> procedure;
  // Per-input probability of starting from the parent rather than the
  // procedure base; ignored when there is no base.
  double mix = 1.0;
  ChannelSpec channel;  // applied last
  std::uint64_t seed = 0;
  double eta = 0.15;    // accuracy gate: acc(v) > (1 - eta) acc(parent)
};

// Parent-to-variant channel implied by a spec (and the base channel, if any).
inline ChannelSpec effective_channel(const VariantSpec& v, const ChannelSpec* base_channel) {
  if (!base_channel) return v.channel;
  const int k = v.channel.k();
  const std::size_t n = static_cast<std::size_t>(k) + 1;
  std::vector<double> w(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t z = 0; z < n; ++z) w[y * n + z] = (1.0 - v.mix) * (*base_channel)(y, z) + (y == z ? v.mix : 0.0);
  }
  return ChannelSpec(k, std::move(w), "mixture").then(v.channel, "procedure-mixture");
}

// Builds a variant column. `base` is the procedure base column, if any.
// Throws AccuracyGateViolation when the variant loses more than eta of the
// parent's accuracy.
inline ModelColumn gen_variant(const ModelColumn& parent, const ModelColumn* base, const VariantSpec& spec,
                               const InputUniverse& universe) {
  if (spec.channel.k() != parent.k) throw ConfigError("channel alphabet does not match parent k");
  if (base && base->k != parent.k) throw ConfigError("procedure base has a different k");
  if (!(spec.mix >= 0.0 && spec.mix <= 1.0)) throw ConfigError("mix must be in [0, 1]");
  if (!(spec.eta > 0.0 && spec.eta < 1.0)) throw ConfigError("eta must be in (0, 1)");
  ModelColumn col{spec.id, parent.k, {}};
  col.cells.reserve(parent.cells.size());
  Rng rng(mix_seed(spec.seed, spec.id));
  // Per-input fragility shared by every variant of the procedure: a variant
  // starts from the base on the inputs with fragility below 1 - mix, so the
  // inputs changed by a mild variant are also changed by a stronger one.
  Rng fragility(mix_seed(spec.seed, spec.procedure.value_or(spec.id) + "/fragility"));
  for (std::size_t i = 0; i < universe.size(); ++i) {
    const Label truth = universe.ground_truth[i];
    TopKView source = parent.output(i);
    if (base && fragility.uniform() < 1.0 - spec.mix) source = base->output(i);
    const int y = surject(source, truth);
    const int z = static_cast<int>(rng.categorical(spec.channel.row(static_cast<std::size_t>(y))));
    TopKOutput out = detail::realize(source, universe, i, z, rng);
    col.cells.insert(col.cells.end(), out.begin(), out.end());
  }
  const double acc_parent = accuracy(parent, universe.ground_truth);
  const double acc_variant = accuracy(col, universe.ground_truth);
  if (!(acc_variant > (1.0 - spec.eta) * acc_parent)) {
    std::ostringstream msg;
    msg << "variant '" << spec.id << "' accuracy " << acc_variant << " <= (1 - " << spec.eta << ") * "
        << acc_parent;
    throw AccuracyGateViolation(msg.str());
  }
  return col;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

enum class ResampleMode { kMarginal, kUniform };

inline std::string_view to_string(ResampleMode r) { return r == ResampleMode::kMarginal ? "marginal" : "uniform"; }

inline ResampleMode parse_resample_mode(std::string_view s) {
  if (s == "marginal") return ResampleMode::kMarginal;
  if (s == "uniform") return ResampleMode::kUniform;
  throw ConfigError("unknown resample mode '" + std::string(s) + "'");
}

struct EnsembleSpec {
  std::uint64_t seed = 1;
  std::size_t n_vanilla = 10;
  std::size_t variants_per_family = 5;
  // Variants are dealt round-robin to this many procedures per vanilla.
  std::size_t procedures = 2;
  Label num_classes = 1000;
  int top_k = 1;
  std::size_t num_inputs = 5000;
  double accuracy_min = 0.70;
  double accuracy_max = 0.85;
  double eta = 0.15;
  double difficulty_corr = 0.3;
  MissProfile miss = MissProfile::kOmit;
  double spread_prob = 0.5;
  std::size_t confusion_size = 5;
  double confusion_skew = 1.0;
  double confusion_prob = 0.9;
  ResampleMode resample = ResampleMode::kMarginal;
  // Retain probability of each procedure channel.
  double procedure_retain_min = 0.72;
  double procedure_retain_max = 0.90;
  // Per-variant share of the parent's own answers, drawn as
  // mix_max - (mix_max - mix_min) * u^strength_shape; shapes above 1 favor
  // mild variants.
  double mix_min = 0.0;
  double mix_max = 0.95;
  double strength_shape = 1.0;
  // Retain probability of the per-variant noise channel.
  double noise_retain = 0.98;
  // Fresh variants per procedure kept out of the table, used as unseen
  // black-boxes.
  std::size_t probes_per_procedure = 0;

  void validate() const {
    if (n_vanilla < 1) throw ConfigError("n_vanilla must be >= 1");
    if (procedures < 1 && variants_per_family > 0) throw ConfigError("procedures must be >= 1");
    if (num_classes < top_k + 1) throw ConfigError("num_classes must exceed top_k");
    if (top_k < 1 || top_k > kMaxTopK) throw ConfigError("top_k out of range");
    if (num_inputs < 1) throw ConfigError("num_inputs must be >= 1");
    if (!(accuracy_min > 0.0 && accuracy_min <= accuracy_max && accuracy_max < 1.0)) {
      throw ConfigError("accuracy range must satisfy 0 < min <= max < 1");
    }
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must be in (0, 1), got " + std::to_string(eta));
    if (!(difficulty_corr >= 0.0 && difficulty_corr < 1.0)) throw ConfigError("difficulty_corr must be in [0, 1)");
    if (!(spread_prob >= 0.0 && spread_prob <= 1.0)) throw ConfigError("spread_prob must be in [0, 1]");
    if (confusion_size >= static_cast<std::size_t>(num_classes)) throw ConfigError("confusion_size must be below num_classes");
    if (!(confusion_prob >= 0.0 && confusion_prob <= 1.0)) throw ConfigError("confusion_prob must be in [0, 1]");
    if (!(confusion_skew >= 0.0)) throw ConfigError("confusion_skew must be >= 0");
    if (!(procedure_retain_min >= 0.0 && procedure_retain_min <= procedure_retain_max && procedure_retain_max <= 1.0)) {
      throw ConfigError("procedure retain range must lie in [0, 1]");
    }
    if (!(mix_min >= 0.0 && mix_min <= mix_max && mix_max <= 1.0)) throw ConfigError("mix range must lie in [0, 1]");
    if (!(noise_retain >= 0.0 && noise_retain <= 1.0)) throw ConfigError("noise_retain must be in [0, 1]");
    if (!(strength_shape > 0.0)) throw ConfigError("strength_shape must be > 0");
  }

  double draw_mix(Rng& rng) const { return mix_max - (mix_max - mix_min) * std::pow(rng.uniform(), strength_shape); }
};

struct ManifestEntry {
  std::string id;
  std::optional<std::string> parent;
  std::optional<std::string> procedure;
  std::string kind;  // "vanilla" or the variant channel kind
  std::map<std::string, double> params;
  std::optional<ChannelSpec> effective;  // parent-to-model channel
  std::vector<double> parent_marginal;   // analytic surjected marginal of the parent
  double measured_accuracy = 0.0;
};

struct DroppedVariant {
  std::string id;
  std::string reason;
};

// Variants generated like the table's but never shown to the detector.
struct ProbeSet {
  PredictionTable table;
  std::vector<std::size_t> variation_family;  // per probe, index into Ensemble::variation_span
  std::vector<std::size_t> vanilla_family;    // per probe, index into Ensemble::vanilla_span
  std::vector<ManifestEntry> manifest;
};

struct Ensemble {
  PredictionTable table;
  FamilyPartition vanilla_span;
  FamilyPartition variation_span;
  FamilyPartition singleton;
  std::vector<ManifestEntry> manifest;  // table model order
  std::vector<DroppedVariant> dropped;
  std::vector<std::size_t> vanillas;    // table indices of the vanilla models
  std::optional<ProbeSet> probes;

  const FamilyPartition& partition(FamilyFlavor flavor) const {
    switch (flavor) {
      case FamilyFlavor::kVanillaSpan: return vanilla_span;
      case FamilyFlavor::kVariationSpan: return variation_span;
      case FamilyFlavor::kSingleton: return singleton;
    }
    return vanilla_span;
  }
};

inline std::string two_digits(std::size_t i) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << i;
  return s.str();
}

inline Ensemble gen_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  const InputUniverse universe = make_universe(spec.num_inputs, spec.num_classes, spec.difficulty_corr, spec.seed,
                                               Confusion{spec.confusion_size, spec.confusion_skew, spec.confusion_prob});
  Rng param_rng(mix_seed(spec.seed, "parameters"));
  const int k = spec.top_k;

  struct VariantPlan {
    VariantSpec spec;
    std::size_t vanilla;
    std::size_t procedure;
    bool probe = false;
  };
  Rng probe_rng(mix_seed(spec.seed, "probe-parameters"));
  std::vector<VanillaSpec> vanilla_specs;
  std::vector<std::vector<double>> procedure_retain(spec.n_vanilla);
  std::vector<VariantPlan> plans;
  for (std::size_t v = 0; v < spec.n_vanilla; ++v) {
    VanillaSpec vs;
    vs.id = "m" + two_digits(v);
    vs.num_classes = spec.num_classes;
    vs.accuracy = spec.accuracy_min + (spec.accuracy_max - spec.accuracy_min) * param_rng.uniform();
    vs.k = k;
    vs.seed = spec.seed;
    vs.miss = spec.miss;
    vs.spread_prob = spec.spread_prob;
    vanilla_specs.push_back(vs);
    const std::size_t n_proc = std::min(spec.procedures, std::max<std::size_t>(spec.variants_per_family, 1));
    for (std::size_t p = 0; p < n_proc; ++p) {
      procedure_retain[v].push_back(spec.procedure_retain_min +
                                    (spec.procedure_retain_max - spec.procedure_retain_min) * param_rng.uniform());
    }
    const auto marginal = vanilla_marginal(vs.accuracy, k, spec.miss, spec.spread_prob);
    std::vector<std::size_t> per_proc(n_proc, 0);
    for (std::size_t j = 0; j < spec.variants_per_family; ++j) {
      const std::size_t p = j % n_proc;
      VariantPlan plan;
      plan.vanilla = v;
      plan.procedure = p;
      plan.spec.id = vs.id + ".p" + std::to_string(p) + ".v" + std::to_string(per_proc[p]++);
      plan.spec.parent = vs.id;
      plan.spec.procedure = vs.id + ".p" + std::to_string(p);
      plan.spec.mix = spec.draw_mix(param_rng);
      plan.spec.channel = spec.resample == ResampleMode::kMarginal
                              ? ChannelSpec::retain_marginal(k, spec.noise_retain, marginal)
                              : ChannelSpec::retain_uniform(k, spec.noise_retain);
      plan.spec.seed = spec.seed;
      plan.spec.eta = spec.eta;
      plans.push_back(std::move(plan));
    }
    for (std::size_t p = 0; p < n_proc && spec.variants_per_family > 0; ++p) {
      for (std::size_t j = 0; j < spec.probes_per_procedure; ++j) {
        VariantPlan plan;
        plan.vanilla = v;
        plan.procedure = p;
        plan.probe = true;
        plan.spec.id = vs.id + ".p" + std::to_string(p) + ".probe" + std::to_string(j);
        plan.spec.parent = vs.id;
        plan.spec.procedure = vs.id + ".p" + std::to_string(p);
        plan.spec.mix = spec.draw_mix(probe_rng);
        plan.spec.channel = spec.resample == ResampleMode::kMarginal
                                ? ChannelSpec::retain_marginal(k, spec.noise_retain, marginal)
                                : ChannelSpec::retain_uniform(k, spec.noise_retain);
        plan.spec.seed = spec.seed;
        plan.spec.eta = spec.eta;
        plans.push_back(std::move(plan));
      }
    }
  }

  std::vector<ModelColumn> vanilla_cols(spec.n_vanilla);
  parallel_for(spec.n_vanilla, [&](std::size_t v) { vanilla_cols[v] = gen_vanilla(vanilla_specs[v], universe); }, 1);

  // Procedure bases, flattened as (vanilla, procedure).
  std::vector<std::pair<std::size_t, std::size_t>> base_keys;
  for (std::size_t v = 0; v < spec.n_vanilla; ++v)
    for (std::size_t p = 0; p < procedure_retain[v].size(); ++p) base_keys.emplace_back(v, p);
  std::vector<ChannelSpec> base_channels(base_keys.size());
  std::vector<ModelColumn> base_cols(base_keys.size());
  std::vector<std::size_t> base_offset(spec.n_vanilla, 0);
  for (std::size_t v = 1; v < spec.n_vanilla; ++v) base_offset[v] = base_offset[v - 1] + procedure_retain[v - 1].size();
  parallel_for(base_keys.size(), [&](std::size_t b) {
    const auto [v, p] = base_keys[b];
    const auto marginal = vanilla_marginal(vanilla_specs[v].accuracy, k, spec.miss, spec.spread_prob);
    base_channels[b] = spec.resample == ResampleMode::kMarginal
                           ? ChannelSpec::retain_marginal(k, procedure_retain[v][p], marginal)
                           : ChannelSpec::retain_uniform(k, procedure_retain[v][p]);
    const ModelColumn& parent = vanilla_cols[v];
    // The base itself is never emitted; build it without the accuracy gate.
    ModelColumn col{vanilla_specs[v].id + ".p" + std::to_string(p) + ".base", k, {}};
    Rng rng(mix_seed(spec.seed, col.id));
    for (std::size_t i = 0; i < universe.size(); ++i) {
      const Label truth = universe.ground_truth[i];
      const int y = surject(parent.output(i), truth);
      const int z = static_cast<int>(rng.categorical(base_channels[b].row(static_cast<std::size_t>(y))));
      auto out = detail::realize(parent.output(i), universe, i, z, rng);
      col.cells.insert(col.cells.end(), out.begin(), out.end());
    }
    base_cols[b] = std::move(col);
  }, 1);

  std::vector<std::optional<ModelColumn>> variant_cols(plans.size());
  std::vector<std::string> failures(plans.size());
  parallel_for(plans.size(), [&](std::size_t j) {
    const auto& plan = plans[j];
    const std::size_t b = base_offset[plan.vanilla] + plan.procedure;
    try {
      variant_cols[j] = gen_variant(vanilla_cols[plan.vanilla], &base_cols[b], plan.spec, universe);
    } catch (const AccuracyGateViolation& e) {
      failures[j] = e.what();
    }
  }, 1);

  auto manifest_entry = [&](std::size_t j) {
    const auto& plan = plans[j];
    const std::size_t v = plan.vanilla;
    const std::size_t b = base_offset[v] + plan.procedure;
    const double pr = procedure_retain[v][plan.procedure];
    ManifestEntry e;
    e.id = plan.spec.id;
    e.parent = vanilla_specs[v].id;
    e.procedure = plan.spec.procedure;
    e.kind = std::string(spec.resample == ResampleMode::kMarginal ? "retain-marginal" : "retain-uniform");
    e.effective = effective_channel(plan.spec, &base_channels[b]);
    e.params = {{"procedure_retain", pr}, {"mix", plan.spec.mix}, {"noise_retain", spec.noise_retain}};
    if (spec.resample == ResampleMode::kMarginal) {
      e.params["retain"] = (plan.spec.mix + (1.0 - plan.spec.mix) * pr) * spec.noise_retain;
    }
    e.parent_marginal = vanilla_marginal(vanilla_specs[v].accuracy, k, spec.miss, spec.spread_prob);
    e.measured_accuracy = accuracy(*variant_cols[j], universe.ground_truth);
    return e;
  };

  Ensemble ens;
  std::vector<std::string> ids;
  std::vector<Label> cells;
  std::vector<Family> vanilla_fams, variation_fams, singleton_fams;
  auto push_column = [&](const ModelColumn& col) {
    ids.push_back(col.id);
    cells.insert(cells.end(), col.cells.begin(), col.cells.end());
    return ids.size() - 1;
  };
  for (std::size_t v = 0; v < spec.n_vanilla; ++v) {
    const auto& vs = vanilla_specs[v];
    const std::size_t vi = push_column(vanilla_cols[v]);
    ens.vanillas.push_back(vi);
    ens.manifest.push_back(ManifestEntry{vs.id, std::nullopt, std::nullopt, "vanilla",
                                         {{"accuracy", vs.accuracy}}, std::nullopt, {},
                                         accuracy(vanilla_cols[v], universe.ground_truth)});
    Family vf{vs.id, {vi}, vi};
    std::vector<Family> per_proc;
    for (std::size_t p = 0; p < procedure_retain[v].size(); ++p) {
      per_proc.push_back(Family{vs.id + ".p" + std::to_string(p), {}, vi});
    }
    singleton_fams.push_back(Family{vs.id, {vi}, vi});
    variation_fams.push_back(Family{vs.id + ".vanilla", {vi}, vi});
    for (std::size_t j = 0; j < plans.size(); ++j) {
      if (plans[j].vanilla != v || plans[j].probe) continue;
      if (!variant_cols[j]) {
        ens.dropped.push_back(DroppedVariant{plans[j].spec.id, failures[j]});
        continue;
      }
      const std::size_t mi = push_column(*variant_cols[j]);
      ens.manifest.push_back(manifest_entry(j));
      vf.members.push_back(mi);
      per_proc[plans[j].procedure].members.push_back(mi);
      singleton_fams.push_back(Family{plans[j].spec.id, {mi}, vi});
    }
    vanilla_fams.push_back(std::move(vf));
    for (auto& f : per_proc) {
      if (!f.members.empty()) variation_fams.push_back(std::move(f));
    }
  }
  std::vector<std::optional<Label>> gt(universe.ground_truth.begin(), universe.ground_truth.end());
  ens.table = PredictionTable(std::move(ids), universe.ids, k, std::move(cells), gt);
  const std::size_t n = ens.table.num_models();
  ens.vanilla_span = FamilyPartition(FamilyFlavor::kVanillaSpan, std::move(vanilla_fams), n);
  ens.variation_span = FamilyPartition(FamilyFlavor::kVariationSpan, std::move(variation_fams), n);
  ens.singleton = FamilyPartition(FamilyFlavor::kSingleton, std::move(singleton_fams), n);

  if (spec.probes_per_procedure > 0) {
    ProbeSet probes;
    std::vector<std::string> probe_ids;
    std::vector<Label> probe_cells;
    for (std::size_t j = 0; j < plans.size(); ++j) {
      if (!plans[j].probe) continue;
      if (!variant_cols[j]) {
        ens.dropped.push_back(DroppedVariant{plans[j].spec.id, failures[j]});
        continue;
      }
      const auto vfam = ens.variation_span.find(*plans[j].spec.procedure);
      if (!vfam) continue;  // every table member of the procedure was dropped
      probe_ids.push_back(plans[j].spec.id);
      probe_cells.insert(probe_cells.end(), variant_cols[j]->cells.begin(), variant_cols[j]->cells.end());
      probes.variation_family.push_back(*vfam);
      probes.vanilla_family.push_back(plans[j].vanilla);
      probes.manifest.push_back(manifest_entry(j));
    }
    if (!probe_ids.empty()) {
      probes.table = PredictionTable(std::move(probe_ids), universe.ids, k, std::move(probe_cells), gt);
      ens.probes = std::move(probes);
    }
  }
  return ens;
}

// The desk-scale ensemble used throughout the tests: 10 vanillas with 5
// variants each over 1000 classes.
inline EnsembleSpec standard_ensemble_spec(int top_k = 1, std::uint64_t seed = 2023) {
  EnsembleSpec s;
  s.seed = seed;
  s.top_k = top_k;
  return s;
}

}  // namespace fbi::sim
