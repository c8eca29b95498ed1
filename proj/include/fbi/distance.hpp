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

// Empirical information measures between the surjected outputs of two models
// and the normalized distance built on them.
//
// All logarithms are base 2 and 0 log 0 is taken as 0. Sums are accumulated
// over sorted terms, so the results do not depend on symbol order: transposing
// a histogram or relabeling its symbols gives bit-identical values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fbi/channel.hpp"
#include "fbi/corpus.hpp"
#include "fbi/errors.hpp"

namespace fbi {

// Rank (1-based) of `reference` in `output`, or 0 when absent.
inline int surject(TopKView output, Label reference) {
  for (std::size_t j = 0; j < output.size(); ++j) {
    if (output[j] == reference) return static_cast<int>(j) + 1;
  }
  return 0;
}

struct SurjectedSequence {
  std::vector<std::uint8_t> values;  // each in [0, k]
  int k = 1;

  std::size_t size() const { return values.size(); }
  bool constant() const {
    return std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end();
  }
};

inline SurjectedSequence make_sequence(std::vector<std::uint8_t> values, int k) {
  for (auto v : values) {
    if (v > k) throw ConfigError("surjected value exceeds k");
  }
  return SurjectedSequence{std::move(values), k};
}

// Surjected outputs of table model `model` on `inputs`, w.r.t. the table's
// reference classes.
inline SurjectedSequence surject_model(const PredictionTable& table, std::size_t model,
                                       std::span<const std::size_t> inputs) {
  SurjectedSequence seq{{}, table.k()};
  seq.values.reserve(inputs.size());
  for (std::size_t i : inputs) {
    seq.values.push_back(static_cast<std::uint8_t>(surject(table.output(model, i), table.reference_class(i))));
  }
  return seq;
}

inline SurjectedSequence surject_outputs(std::span<const TopKOutput> outputs,
                                         std::span<const Label> references, int k) {
  if (outputs.size() != references.size()) throw LengthMismatch("outputs vs references");
  SurjectedSequence seq{{}, k};
  seq.values.reserve(outputs.size());
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    if (outputs[j].size() != static_cast<std::size_t>(k)) throw LengthMismatch("output depth != k");
    seq.values.push_back(static_cast<std::uint8_t>(surject(outputs[j], references[j])));
  }
  return seq;
}

// Counts of (z, y) symbol pairs; z indexes rows.
class JointHistogram {
 public:
  explicit JointHistogram(int k) : k_(k), counts_(alphabet() * alphabet(), 0) {}

  int k() const { return k_; }
  std::size_t alphabet() const { return static_cast<std::size_t>(k_) + 1; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::size_t z, std::size_t y) const { return counts_[z * alphabet() + y]; }

  void add(std::size_t z, std::size_t y) {
    ++counts_[z * alphabet() + y];
    ++total_;
  }

  std::vector<std::uint64_t> z_marginal() const {
    std::vector<std::uint64_t> m(alphabet(), 0);
    for (std::size_t z = 0; z < alphabet(); ++z)
      for (std::size_t y = 0; y < alphabet(); ++y) m[z] += count(z, y);
    return m;
  }
  std::vector<std::uint64_t> y_marginal() const {
    std::vector<std::uint64_t> m(alphabet(), 0);
    for (std::size_t z = 0; z < alphabet(); ++z)
      for (std::size_t y = 0; y < alphabet(); ++y) m[y] += count(z, y);
    return m;
  }

  JointHistogram transposed() const {
    JointHistogram t(k_);
    for (std::size_t z = 0; z < alphabet(); ++z)
      for (std::size_t y = 0; y < alphabet(); ++y) t.counts_[y * alphabet() + z] = count(z, y);
    t.total_ = total_;
    return t;
  }

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

inline JointHistogram joint_histogram(const SurjectedSequence& z, const SurjectedSequence& y) {
  if (z.size() != y.size()) {
    throw LengthMismatch("sequences of length " + std::to_string(z.size()) + " and " +
                         std::to_string(y.size()));
  }
  if (z.size() == 0) throw LengthMismatch("empty sequences");
  if (z.k != y.k) throw LengthMismatch("sequences over different alphabets");
  JointHistogram h(z.k);
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z.values[j] > z.k || y.values[j] > y.k) throw ConfigError("surjected value exceeds k");
    h.add(z.values[j], y.values[j]);
  }
  return h;
}

namespace detail {

inline double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

// p * log2(num / den) with p = count / total; num and den are exact integers.
inline double info_term(std::uint64_t count, std::uint64_t total, std::uint64_t num, std::uint64_t den) {
  const double p = static_cast<double>(count) / static_cast<double>(total);
  return p * std::log2(static_cast<double>(num) / static_cast<double>(den));
}

}  // namespace detail

// Entropy (bits) of a histogram of counts.
inline double entropy_bits(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  std::vector<double> terms;
  for (auto c : counts) {
    if (c > 0) terms.push_back(detail::info_term(c, total, total, c));
  }
  return detail::sorted_sum(terms);
}

// Entropy (bits) of a probability vector.
inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

inline double empirical_mi(const JointHistogram& h) {
  if (h.total() == 0) throw LengthMismatch("empty histogram");
  const auto nz = h.z_marginal();
  const auto ny = h.y_marginal();
  const std::uint64_t total = h.total();
  std::vector<double> terms;
  for (std::size_t z = 0; z < h.alphabet(); ++z) {
    for (std::size_t y = 0; y < h.alphabet(); ++y) {
      const auto c = h.count(z, y);
      if (c == 0) continue;
      terms.push_back(detail::info_term(c, total, c * total, nz[z] * ny[y]));
    }
  }
  return std::max(0.0, detail::sorted_sum(terms));
}

struct DistanceReport {
  double mi_bits = 0.0;
  double h_y_bits = 0.0;
  double h_z_bits = 0.0;
  double distance = 1.0;
  std::size_t length = 0;
  // min(H) == 0: no evidence either way; distance is reported as 1.
  bool degenerate = false;
};

inline DistanceReport model_distance(const SurjectedSequence& z, const SurjectedSequence& y) {
  const JointHistogram h = joint_histogram(z, y);
  DistanceReport r;
  r.length = z.size();
  const auto nz = h.z_marginal();
  const auto ny = h.y_marginal();
  r.h_z_bits = entropy_bits(std::span<const std::uint64_t>(nz));
  r.h_y_bits = entropy_bits(std::span<const std::uint64_t>(ny));
  const double h_min = std::min(r.h_z_bits, r.h_y_bits);
  r.mi_bits = std::min(empirical_mi(h), h_min);
  if (h_min <= 0.0) {
    r.degenerate = true;
    r.distance = 1.0;
    return r;
  }
  r.distance = std::clamp(1.0 - r.mi_bits / h_min, 0.0, 1.0);
  return r;
}

struct CompoundReport {
  double distance = 1.0;
  std::size_t best = 0;  // index of the closest delegate
  std::vector<DistanceReport> per_delegate;
  bool all_degenerate() const {
    return std::all_of(per_delegate.begin(), per_delegate.end(),
                       [](const DistanceReport& r) { return r.degenerate; });
  }
};

// Distance to a family represented by several delegates: the minimum.
inline CompoundReport compound_report(const SurjectedSequence& b,
                                      std::span<const SurjectedSequence> delegates) {
  if (delegates.empty()) throw EmptyDelegateSet("no delegate sequences");
  CompoundReport out;
  out.per_delegate.reserve(delegates.size());
  for (std::size_t d = 0; d < delegates.size(); ++d) {
    out.per_delegate.push_back(model_distance(b, delegates[d]));
    if (d == 0 || out.per_delegate[d].distance < out.distance) {
      out.distance = out.per_delegate[d].distance;
      out.best = d;
    }
  }
  return out;
}

inline double compound_distance(const SurjectedSequence& b, std::span<const SurjectedSequence> delegates) {
  return compound_report(b, delegates).distance;
}

// ---------------------------------------------------------------------------
// Top-1 lower bound on the distance between two models of known accuracies.
// ---------------------------------------------------------------------------

struct BoundInput {
  double acc_m = 0.0;  // accuracy of the reference model
  double acc_b = 0.0;  // accuracy of the black-box
};

inline double neg_x_log2_x(double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; }

inline double binary_entropy(double p) { return neg_x_log2_x(p) + neg_x_log2_x(1.0 - p); }

// Feasible range of P(Z=0, Y=0) given both accuracies.
inline std::pair<double, double> bound_feasible_range(double acc_m, double acc_b) {
  return {std::max(0.0, 1.0 - (acc_m + acc_b)), std::min(1.0 - acc_m, 1.0 - acc_b)};
}

// Mutual information of the 2x2 joint with P(Z=0,Y=0) = a and the given
// marginal accuracies.
inline double bound_mutual_information(double acc_m, double acc_b, double a) {
  const double b = 1.0 - acc_b - a;
  const double c = 1.0 - acc_m - a;
  const double d = acc_m + acc_b - 1.0 + a;
  return binary_entropy(acc_m) + binary_entropy(acc_b) -
         (neg_x_log2_x(a) + neg_x_log2_x(b) + neg_x_log2_x(c) + neg_x_log2_x(d));
}

inline double theory_lower_bound(BoundInput in) {
  double hi = std::max(in.acc_m, in.acc_b);
  double lo = std::min(in.acc_m, in.acc_b);
  if (!(lo >= 0.0 && hi <= 1.0)) throw InfeasibleAccuracies("accuracies must lie in [0, 1]");
  const auto [a_min, a_max] = bound_feasible_range(hi, lo);
  if (a_min > a_max) throw InfeasibleAccuracies("empty feasible range");
  if (!(hi + lo > 1.0)) {
    throw OutOfRegime("bound derived only for acc_m + acc_b > 1 (got " + std::to_string(hi + lo) + ")");
  }
  const double h_min = std::min(binary_entropy(hi), binary_entropy(lo));
  if (h_min <= 0.0) throw OutOfRegime("accuracy 1 leaves no entropy to normalize by");
  const double mi_max =
      neg_x_log2_x(hi) + std::max(neg_x_log2_x(lo) - neg_x_log2_x(hi + lo - 1.0),
                                  neg_x_log2_x(1.0 - lo) - neg_x_log2_x(hi - lo));
  const double bound = 1.0 - mi_max / h_min;
  if (bound < 0.0 && bound >= -1e-12) return 0.0;
  return std::clamp(bound, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Analytic quantities of a channel, used as oracles for the estimators.
// ---------------------------------------------------------------------------

inline double channel_mi(const ChannelSpec& w, std::span<const double> p_y) {
  if (p_y.size() != w.alphabet()) throw ConfigError("input distribution has wrong size");
  const auto p_z = w.push_forward(p_y);
  double mi = 0.0;
  for (std::size_t y = 0; y < w.alphabet(); ++y) {
    for (std::size_t z = 0; z < w.alphabet(); ++z) {
      const double joint = p_y[y] * w(y, z);
      if (joint > 0.0) mi += joint * std::log2(w(y, z) / p_z[z]);
    }
  }
  return std::max(0.0, mi);
}

// 1 - I / min(H(Y), H(Z)) for the exact joint p_y(y) W(z|y).
inline double channel_distance(const ChannelSpec& w, std::span<const double> p_y) {
  const auto p_z = w.push_forward(p_y);
  const double h_min = std::min(entropy_bits(p_y), entropy_bits(std::span<const double>(p_z)));
  if (h_min <= 0.0) return 1.0;
  return std::clamp(1.0 - channel_mi(w, p_y) / h_min, 0.0, 1.0);
}

}  // namespace fbi
