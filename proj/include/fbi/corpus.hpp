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

// Prediction tables: the offline database of top-k outputs of every known
// model on every input, plus the derived per-input reference classes and the
// input-selection strategies used by the statistical tests.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fbi/errors.hpp"
#include "fbi/random.hpp"

namespace fbi {

using Label = std::int32_t;

// Owning top-k output: distinct labels, best first.
using TopKOutput = std::vector<Label>;
// Non-owning view of one cell of a table.
using TopKView = std::span<const Label>;

inline constexpr int kMaxTopK = 255;

namespace detail {

inline std::uint64_t hash_labels(TopKView labels) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (Label l : labels) h = splitmix64(h ^ static_cast<std::uint32_t>(l));
  return h;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename Int>
Int parse_int(std::string_view field, std::string_view what, std::size_t line_no) {
  Int value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid " + std::string(what) +
                     " '" + std::string(field) + "'");
  }
  return value;
}

// log2 entropy of a histogram given as counts; summed in sorted order so that
// equal multisets of counts give bit-identical results.
inline double entropy_of_counts(std::vector<std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  std::sort(counts.begin(), counts.end());
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace detail

// Majority top-1 vote over `models` for one input; ties go to the smallest
// label. Exposed separately from the memoized table lookup so tests can call
// it on arbitrary model subsets.
template <typename Top1Fn>
Label majority_vote(std::size_t n_models, Top1Fn&& top1) {
  std::map<Label, std::size_t> votes;
  for (std::size_t m = 0; m < n_models; ++m) ++votes[top1(m)];
  Label best = votes.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [label, count] : votes) {
    if (count > best_count) {  // strict: earlier (smaller) labels win ties
      best = label;
      best_count = count;
    }
  }
  return best;
}

// Immutable map (model, input) -> top-k list. Reference classes are computed
// once at construction.
class PredictionTable {
 public:
  PredictionTable() = default;

  // `cells` is laid out model-major: ((model * n_inputs) + input) * k + rank.
  // `ground_truth` is either empty or has one entry per input.
  PredictionTable(std::vector<std::string> models, std::vector<std::string> inputs, int k,
                  std::vector<Label> cells,
                  std::vector<std::optional<Label>> ground_truth = {})
      : models_(std::move(models)),
        inputs_(std::move(inputs)),
        k_(k),
        cells_(std::move(cells)) {
    if (k_ < 1 || k_ > kMaxTopK) throw ConsistencyError("k must be in [1, 255]");
    if (models_.empty() || inputs_.empty()) throw ConsistencyError("empty table");
    if (cells_.size() != models_.size() * inputs_.size() * static_cast<std::size_t>(k_)) {
      throw ConsistencyError("cell count does not match models x inputs x k");
    }
    index_ids(models_, model_index_, "model");
    index_ids(inputs_, input_index_, "input");
    ground_truth_.assign(inputs_.size(), std::nullopt);
    if (!ground_truth.empty()) {
      if (ground_truth.size() != inputs_.size()) {
        throw ConsistencyError("ground truth size does not match inputs");
      }
      for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        if (ground_truth[i] && *ground_truth[i] < 0) {
          throw ConsistencyError("negative ground-truth label for input '" + inputs_[i] + "'");
        }
      }
      ground_truth_ = std::move(ground_truth);
    }
    validate_cells();
    hashes_.resize(models_.size() * inputs_.size());
    for (std::size_t m = 0; m < models_.size(); ++m) {
      for (std::size_t i = 0; i < inputs_.size(); ++i) {
        hashes_[i * models_.size() + m] = detail::hash_labels(output(m, i));
      }
    }
    build_output_classes();
    reference_.resize(inputs_.size());
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      reference_[i] = ground_truth_[i]
                          ? *ground_truth_[i]
                          : majority_vote(models_.size(), [&](std::size_t m) { return top1(m, i); });
    }
  }

  std::size_t num_models() const { return models_.size(); }
  std::size_t num_inputs() const { return inputs_.size(); }
  std::size_t num_cells() const { return models_.size() * inputs_.size(); }
  int k() const { return k_; }

  const std::vector<std::string>& models() const { return models_; }
  const std::vector<std::string>& inputs() const { return inputs_; }
  const std::string& model_id(std::size_t m) const { return models_.at(m); }
  const std::string& input_id(std::size_t i) const { return inputs_.at(i); }

  std::optional<std::size_t> find_model(std::string_view id) const {
    auto it = model_index_.find(std::string(id));
    if (it == model_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_input(std::string_view id) const {
    auto it = input_index_.find(std::string(id));
    if (it == input_index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t model(std::string_view id) const {
    auto m = find_model(id);
    if (!m) throw ConsistencyError("unknown model '" + std::string(id) + "'");
    return *m;
  }

  TopKView output(std::size_t m, std::size_t i) const {
    return {cells_.data() + (m * inputs_.size() + i) * static_cast<std::size_t>(k_),
            static_cast<std::size_t>(k_)};
  }
  Label top1(std::size_t m, std::size_t i) const { return output(m, i)[0]; }

  // Hash of the full ordered top-k list; equal outputs have equal hashes.
  std::uint64_t output_hash(std::size_t m, std::size_t i) const {
    return hashes_[i * models_.size() + m];
  }

  // Dense id of the output of model m on input i: two models share an id iff
  // their outputs on i are equal. Ids are < num_models().
  std::uint32_t output_class(std::size_t m, std::size_t i) const { return classes_[i * models_.size() + m]; }

  bool same_output(std::size_t m1, std::size_t m2, std::size_t i) const {
    if (output_hash(m1, i) != output_hash(m2, i)) return false;
    auto a = output(m1, i);
    auto b = output(m2, i);
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  }

  bool has_ground_truth() const {
    return std::any_of(ground_truth_.begin(), ground_truth_.end(),
                       [](const auto& g) { return g.has_value(); });
  }
  std::optional<Label> ground_truth(std::size_t i) const { return ground_truth_.at(i); }
  const std::vector<std::optional<Label>>& ground_truth() const { return ground_truth_; }

  // Ground truth if annotated, else the majority top-1 vote over all models.
  Label reference_class(std::size_t i) const { return reference_.at(i); }

  Label max_label() const {
    Label mx = 0;
    for (Label l : cells_) mx = std::max(mx, l);
    for (const auto& g : ground_truth_) {
      if (g) mx = std::max(mx, *g);
    }
    return mx;
  }

  const std::vector<Label>& cells() const { return cells_; }

  // Same models and inputs, outputs cut to their first `k` ranks.
  PredictionTable truncated(int k) const {
    if (k < 1 || k > k_) throw ConfigError("cannot truncate top-" + std::to_string(k_) +
                                           " table to top-" + std::to_string(k));
    if (k == k_) return *this;
    std::vector<Label> cells;
    cells.reserve(num_cells() * static_cast<std::size_t>(k));
    for (std::size_t m = 0; m < num_models(); ++m) {
      for (std::size_t i = 0; i < num_inputs(); ++i) {
        auto out = output(m, i);
        cells.insert(cells.end(), out.begin(), out.begin() + k);
      }
    }
    return PredictionTable(models_, inputs_, k, std::move(cells), ground_truth_);
  }

  // Restriction to a subset of models (in the given order).
  PredictionTable with_models(std::span<const std::size_t> subset) const {
    std::vector<std::string> ids;
    std::vector<Label> cells;
    cells.reserve(subset.size() * num_inputs() * static_cast<std::size_t>(k_));
    for (std::size_t m : subset) {
      ids.push_back(models_.at(m));
      auto first = cells_.begin() + static_cast<std::ptrdiff_t>(m * num_inputs() * k_);
      cells.insert(cells.end(), first, first + static_cast<std::ptrdiff_t>(num_inputs() * k_));
    }
    return PredictionTable(std::move(ids), inputs_, k_, std::move(cells), ground_truth_);
  }

 private:
  static void index_ids(const std::vector<std::string>& ids,
                        std::unordered_map<std::string, std::size_t>& index, const char* what) {
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i].empty() || ids[i].find(',') != std::string::npos) {
        throw ConsistencyError(std::string("invalid ") + what + " id '" + ids[i] + "'");
      }
      if (!index.emplace(ids[i], i).second) {
        throw ConsistencyError(std::string("duplicate ") + what + " id '" + ids[i] + "'");
      }
    }
  }

  void build_output_classes() {
    const std::size_t n_models = models_.size();
    classes_.assign(hashes_.size(), 0);
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    std::vector<std::size_t> reps;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      order.clear();
      for (std::size_t m = 0; m < n_models; ++m) order.emplace_back(output_hash(m, i), m);
      std::sort(order.begin(), order.end());
      std::uint32_t next = 0;
      std::size_t run_first = 0;
      for (std::size_t s = 0; s < order.size(); ++s) {
        if (s == 0 || order[s].first != order[s - 1].first) {
          run_first = next;
          reps.clear();
        }
        const std::size_t m = order[s].second;
        std::uint32_t id = next;
        for (std::size_t r = 0; r < reps.size(); ++r) {
          if (same_output(reps[r], m, i)) {
            id = static_cast<std::uint32_t>(run_first + r);
            break;
          }
        }
        if (id == next) {
          reps.push_back(m);
          ++next;
        }
        classes_[i * n_models + m] = id;
      }
    }
  }

  void validate_cells() const {
    for (std::size_t m = 0; m < models_.size(); ++m) {
      for (std::size_t i = 0; i < inputs_.size(); ++i) {
        auto out = output(m, i);
        for (int r = 0; r < k_; ++r) {
          if (out[r] < 0) {
            throw ConsistencyError("negative label for (" + models_[m] + ", " + inputs_[i] + ")");
          }
          for (int s = 0; s < r; ++s) {
            if (out[s] == out[r]) {
              throw ConsistencyError("repeated label " + std::to_string(out[r]) + " in (" +
                                     models_[m] + ", " + inputs_[i] + ")");
            }
          }
        }
      }
    }
  }

  std::vector<std::string> models_;
  std::vector<std::string> inputs_;
  int k_ = 0;
  std::vector<Label> cells_;
  std::vector<std::optional<Label>> ground_truth_;
  std::vector<std::uint64_t> hashes_;   // input-major
  std::vector<std::uint32_t> classes_;  // input-major
  std::vector<Label> reference_;
  std::unordered_map<std::string, std::size_t> model_index_;
  std::unordered_map<std::string, std::size_t> input_index_;
};

inline Label reference_class(const PredictionTable& table, std::string_view input) {
  auto i = table.find_input(input);
  if (!i) throw ConsistencyError("unknown input '" + std::string(input) + "'");
  return table.reference_class(*i);
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

enum class TableFormat { kCsv, kJson };

struct LoadOptions {
  // Optional `input,label` CSV.
  std::optional<std::filesystem::path> ground_truth;
  // When set, labels >= num_classes are rejected.
  std::optional<Label> num_classes;
};

// Prediction CSV: header `model,input,rank,label`, one row per
// (model, input, rank). Models and inputs keep first-appearance order.
inline PredictionTable parse_table_csv(std::istream& in, const LoadOptions& options = {},
                                       std::istream* ground_truth = nullptr);

inline std::vector<std::optional<Label>> parse_ground_truth_csv(std::istream& in,
                                                                const std::vector<std::string>& inputs) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inputs.size(); ++i) index.emplace(inputs[i], i);
  std::vector<std::optional<Label>> gt(inputs.size());
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != "input,label") throw ParseError("ground truth: expected header 'input,label'");
      header_seen = true;
      continue;
    }
    auto fields = detail::split_csv_line(view);
    if (fields.size() != 2) {
      throw ParseError("ground truth line " + std::to_string(line_no) + ": expected 2 fields");
    }
    auto it = index.find(std::string(fields[0]));
    if (it == index.end()) {
      throw ConsistencyError("ground truth for unknown input '" + std::string(fields[0]) + "'");
    }
    const Label label = detail::parse_int<Label>(fields[1], "label", line_no);
    if (label < 0) throw ParseError("line " + std::to_string(line_no) + ": negative label");
    if (gt[it->second]) {
      throw ConsistencyError("duplicate ground truth for input '" + it->first + "'");
    }
    gt[it->second] = label;
  }
  if (!header_seen) throw ParseError("ground truth: empty file");
  return gt;
}

inline PredictionTable parse_table_csv(std::istream& in, const LoadOptions& options,
                                       std::istream* ground_truth) {
  struct Row {
    std::size_t model, input;
    int rank;
    Label label;
  };
  std::vector<std::string> models, inputs;
  std::unordered_map<std::string, std::size_t> model_index, input_index;
  std::vector<Row> rows;
  int k = 0;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != "model,input,rank,label") {
        throw ParseError("expected header 'model,input,rank,label'");
      }
      header_seen = true;
      continue;
    }
    auto fields = detail::split_csv_line(view);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty id");
    }
    const int rank = detail::parse_int<int>(fields[2], "rank", line_no);
    const Label label = detail::parse_int<Label>(fields[3], "label", line_no);
    if (rank < 1 || rank > kMaxTopK) {
      throw ParseError("line " + std::to_string(line_no) + ": rank out of range");
    }
    if (label < 0) throw ParseError("line " + std::to_string(line_no) + ": negative label");
    if (options.num_classes && label >= *options.num_classes) {
      throw ConsistencyError("line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                             " >= number of classes " + std::to_string(*options.num_classes));
    }
    auto intern = [](std::string_view id, std::vector<std::string>& ids,
                     std::unordered_map<std::string, std::size_t>& index) {
      auto [it, inserted] = index.emplace(std::string(id), ids.size());
      if (inserted) ids.emplace_back(id);
      return it->second;
    };
    rows.push_back({intern(fields[0], models, model_index), intern(fields[1], inputs, input_index),
                    rank, label});
    k = std::max(k, rank);
  }
  if (!header_seen) throw ParseError("empty file");
  if (rows.empty()) throw ConsistencyError("table has no rows");

  const std::size_t n_inputs = inputs.size();
  std::vector<Label> cells(models.size() * n_inputs * static_cast<std::size_t>(k), -1);
  for (const Row& r : rows) {
    Label& slot = cells[(r.model * n_inputs + r.input) * k + (r.rank - 1)];
    if (slot != -1) {
      throw ConsistencyError("duplicate cell (" + models[r.model] + ", " + inputs[r.input] +
                             ", rank " + std::to_string(r.rank) + ")");
    }
    slot = r.label;
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t i = 0; i < n_inputs; ++i) {
      const Label* cell = cells.data() + (m * n_inputs + i) * k;
      const auto present = std::count_if(cell, cell + k, [](Label l) { return l >= 0; });
      if (present == 0) {
        throw ConsistencyError("missing cell (" + models[m] + ", " + inputs[i] + ")");
      }
      if (present != k) {
        throw ConsistencyError("mixed k: cell (" + models[m] + ", " + inputs[i] + ") has " +
                               std::to_string(present) + " ranks, expected " + std::to_string(k));
      }
    }
  }

  std::vector<std::optional<Label>> gt;
  if (ground_truth) gt = parse_ground_truth_csv(*ground_truth, inputs);
  if (options.num_classes) {
    for (const auto& g : gt) {
      if (g && *g >= *options.num_classes) throw ConsistencyError("ground-truth label >= number of classes");
    }
  }
  return PredictionTable(std::move(models), std::move(inputs), k, std::move(cells), std::move(gt));
}

// Canonical CSV: rows ordered by model, input (table order), then rank.
inline void write_table_csv(const PredictionTable& table, std::ostream& out) {
  out << "model,input,rank,label\n";
  for (std::size_t m = 0; m < table.num_models(); ++m) {
    for (std::size_t i = 0; i < table.num_inputs(); ++i) {
      auto cell = table.output(m, i);
      for (int r = 0; r < table.k(); ++r) {
        out << table.model_id(m) << ',' << table.input_id(i) << ',' << (r + 1) << ',' << cell[r]
            << '\n';
      }
    }
  }
}

inline void write_ground_truth_csv(const PredictionTable& table, std::ostream& out) {
  out << "input,label\n";
  for (std::size_t i = 0; i < table.num_inputs(); ++i) {
    if (auto g = table.ground_truth(i)) out << table.input_id(i) << ',' << *g << '\n';
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

inline PredictionTable parse_table_json(std::istream& in, const LoadOptions& options = {});
inline void write_table_json(const PredictionTable& table, std::ostream& out);

inline TableFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".json" ? TableFormat::kJson : TableFormat::kCsv;
}

inline PredictionTable load_table(const std::filesystem::path& path, TableFormat format,
                                  const LoadOptions& options = {}) {
  auto in = open_input(path);
  if (format == TableFormat::kJson) {
    if (options.ground_truth) {
      throw ConfigError("JSON tables carry their own ground truth");
    }
    return parse_table_json(in, options);
  }
  if (options.ground_truth) {
    auto gt = open_input(*options.ground_truth);
    return parse_table_csv(in, options, &gt);
  }
  return parse_table_csv(in, options);
}

inline PredictionTable load_table(const std::filesystem::path& path, const LoadOptions& options = {}) {
  return load_table(path, format_from_path(path), options);
}

inline void save_table(const PredictionTable& table, const std::filesystem::path& path,
                       TableFormat format = TableFormat::kCsv) {
  auto out = open_output(path);
  if (format == TableFormat::kJson) {
    write_table_json(table, out);
  } else {
    write_table_csv(table, out);
  }
}

// One model id per line; blank lines and `#` comments are skipped.
inline std::vector<std::string> load_model_list(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view v = detail::strip_cr(line);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
    if (v.empty() || v.front() == '#') continue;
    ids.emplace_back(v);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

enum class FamilyFlavor { kVanillaSpan, kVariationSpan, kSingleton };

inline std::string_view to_string(FamilyFlavor f) {
  switch (f) {
    case FamilyFlavor::kVanillaSpan: return "vanilla";
    case FamilyFlavor::kVariationSpan: return "variation";
    case FamilyFlavor::kSingleton: return "singleton";
  }
  return "?";
}

inline FamilyFlavor parse_family_flavor(std::string_view s) {
  if (s == "vanilla") return FamilyFlavor::kVanillaSpan;
  if (s == "variation") return FamilyFlavor::kVariationSpan;
  if (s == "singleton") return FamilyFlavor::kSingleton;
  throw ConfigError("unknown family flavor '" + std::string(s) + "'");
}

struct Family {
  std::string id;
  std::vector<std::size_t> members;  // model indices into the owning table
  // The vanilla model spanning the family; may lie outside `members`.
  std::optional<std::size_t> anchor;
};

class FamilyPartition {
 public:
  FamilyPartition() = default;
  FamilyPartition(FamilyFlavor flavor, std::vector<Family> families, std::size_t n_models)
      : flavor_(flavor), families_(std::move(families)), family_of_(n_models, kNone) {
    for (std::size_t f = 0; f < families_.size(); ++f) {
      if (families_[f].members.empty()) {
        throw ConsistencyError("family '" + families_[f].id + "' is empty");
      }
      for (std::size_t m : families_[f].members) {
        if (m >= n_models) throw ConsistencyError("family member out of range");
        if (family_of_[m] != kNone) {
          throw ConsistencyError("families '" + families_[family_of_[m]].id + "' and '" +
                                 families_[f].id + "' overlap");
        }
        family_of_[m] = f;
      }
      if (families_[f].anchor && *families_[f].anchor >= n_models) {
        throw ConsistencyError("family anchor out of range");
      }
    }
  }

  FamilyFlavor flavor() const { return flavor_; }
  const std::vector<Family>& families() const { return families_; }
  std::size_t size() const { return families_.size(); }
  const Family& operator[](std::size_t f) const { return families_.at(f); }

  std::optional<std::size_t> family_of(std::size_t model) const {
    if (model >= family_of_.size() || family_of_[model] == kNone) return std::nullopt;
    return family_of_[model];
  }

  bool covers_all_models() const {
    return std::none_of(family_of_.begin(), family_of_.end(), [](std::size_t f) { return f == kNone; });
  }

  std::optional<std::size_t> find(std::string_view id) const {
    for (std::size_t f = 0; f < families_.size(); ++f) {
      if (families_[f].id == id) return f;
    }
    return std::nullopt;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  FamilyFlavor flavor_ = FamilyFlavor::kVanillaSpan;
  std::vector<Family> families_;
  std::vector<std::size_t> family_of_;
};

// Partition CSV: header `family,model` or `family,model,anchor`. The anchor
// column names the spanning vanilla model (repeated on each row, may be empty).
inline FamilyPartition parse_partition_csv(std::istream& in, const PredictionTable& table,
                                           FamilyFlavor flavor = FamilyFlavor::kVanillaSpan) {
  std::vector<Family> families;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_fields = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = detail::strip_cr(line);
    if (v.empty()) continue;
    if (n_fields == 0) {
      if (v == "family,model") {
        n_fields = 2;
      } else if (v == "family,model,anchor") {
        n_fields = 3;
      } else {
        throw ParseError("partition: expected header 'family,model[,anchor]'");
      }
      continue;
    }
    auto fields = detail::split_csv_line(v);
    if (fields.size() != n_fields) {
      throw ParseError("partition line " + std::to_string(line_no) + ": wrong field count");
    }
    auto [it, inserted] = index.emplace(std::string(fields[0]), families.size());
    if (inserted) families.push_back(Family{std::string(fields[0]), {}, std::nullopt});
    Family& fam = families[it->second];
    fam.members.push_back(table.model(fields[1]));
    if (n_fields == 3 && !fields[2].empty()) {
      const std::size_t anchor = table.model(fields[2]);
      if (fam.anchor && *fam.anchor != anchor) {
        throw ConsistencyError("family '" + fam.id + "' has conflicting anchors");
      }
      fam.anchor = anchor;
    }
  }
  if (n_fields == 0) throw ParseError("partition: empty file");
  return FamilyPartition(flavor, std::move(families), table.num_models());
}

inline FamilyPartition load_partition(const std::filesystem::path& path, const PredictionTable& table,
                                      FamilyFlavor flavor = FamilyFlavor::kVanillaSpan) {
  auto in = open_input(path);
  return parse_partition_csv(in, table, flavor);
}

inline void write_partition_csv(const FamilyPartition& partition, const std::vector<std::string>& model_ids,
                                std::ostream& out) {
  out << "family,model,anchor\n";
  for (const Family& fam : partition.families()) {
    for (std::size_t m : fam.members) {
      out << fam.id << ',' << model_ids.at(m) << ',' << (fam.anchor ? model_ids.at(*fam.anchor) : "")
          << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Input selection
// ---------------------------------------------------------------------------

enum class SelectionStrategy { kAll, kSplit5050, kSplit3070, kEntropy };

inline std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kAll: return "all";
    case SelectionStrategy::kSplit5050: return "50/50";
    case SelectionStrategy::kSplit3070: return "30/70";
    case SelectionStrategy::kEntropy: return "entropy";
  }
  return "?";
}

inline SelectionStrategy parse_strategy(std::string_view s) {
  if (s == "all") return SelectionStrategy::kAll;
  if (s == "50/50" || s == "split5050" || s == "50-50") return SelectionStrategy::kSplit5050;
  if (s == "30/70" || s == "split3070" || s == "30-70") return SelectionStrategy::kSplit3070;
  if (s == "entropy") return SelectionStrategy::kEntropy;
  throw ConfigError("unknown selection strategy '" + std::string(s) + "'");
}

// Share of anchor-correct inputs in a split strategy.
inline double correct_share(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kSplit5050: return 0.5;
    case SelectionStrategy::kSplit3070: return 0.3;
    default: return 0.0;
  }
}

struct SelectionSubset {
  SelectionStrategy strategy = SelectionStrategy::kAll;
  std::vector<std::size_t> inputs;  // input indices, in query order
  std::uint64_t seed = 0;
};

// Empirical entropy (bits) of the top-1 labels of `known` models on input i.
inline double top1_entropy(const PredictionTable& table, std::size_t input,
                           std::span<const std::size_t> known) {
  std::unordered_map<Label, std::size_t> counts;
  for (std::size_t m : known) ++counts[table.top1(m, input)];
  std::vector<std::size_t> c;
  c.reserve(counts.size());
  for (const auto& [label, n] : counts) c.push_back(n);
  return detail::entropy_of_counts(std::move(c));
}

// Inputs sorted by decreasing top-1 entropy over `known`; ties by input index.
inline std::vector<std::size_t> entropy_ranking(const PredictionTable& table,
                                                std::span<const std::size_t> known) {
  std::vector<std::pair<double, std::size_t>> scored(table.num_inputs());
  for (std::size_t i = 0; i < table.num_inputs(); ++i) scored[i] = {top1_entropy(table, i, known), i};
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) order[i] = scored[i].second;
  return order;
}

// Uniform draw of `count` items of `pool` without replacement, sorted by value.
inline std::vector<std::size_t> sample_from(std::span<const std::size_t> pool, std::size_t count,
                                            Rng& rng) {
  if (count > pool.size()) {
    throw InsufficientPool("requested " + std::to_string(count) + " inputs from a pool of " +
                           std::to_string(pool.size()));
  }
  auto picks = rng.sample_indices(pool.size(), count);
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t p : picks) out.push_back(pool[p]);
  std::sort(out.begin(), out.end());
  return out;
}

inline SelectionSubset select_inputs(const PredictionTable& table, SelectionStrategy strategy,
                                     std::size_t size, std::optional<std::size_t> anchor_model,
                                     std::span<const std::size_t> known_set, std::uint64_t seed) {
  SelectionSubset subset{strategy, {}, seed};
  Rng rng(mix_seed(seed, "select_inputs"));
  switch (strategy) {
    case SelectionStrategy::kAll: {
      std::vector<std::size_t> pool(table.num_inputs());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      subset.inputs = sample_from(pool, size, rng);
      break;
    }
    case SelectionStrategy::kSplit5050:
    case SelectionStrategy::kSplit3070: {
      if (!anchor_model) throw ConfigError("split selection requires an anchor model");
      std::vector<std::size_t> correct, wrong;
      for (std::size_t i = 0; i < table.num_inputs(); ++i) {
        (table.top1(*anchor_model, i) == table.reference_class(i) ? correct : wrong).push_back(i);
      }
      const auto n_correct = static_cast<std::size_t>(
          std::floor(correct_share(strategy) * static_cast<double>(size) + 0.5));
      const std::size_t n_wrong = size - n_correct;
      if (n_correct > correct.size() || n_wrong > wrong.size()) {
        throw InsufficientPool("split needs " + std::to_string(n_correct) + " correct / " +
                               std::to_string(n_wrong) + " wrong inputs, pool has " +
                               std::to_string(correct.size()) + " / " + std::to_string(wrong.size()));
      }
      auto a = sample_from(correct, n_correct, rng);
      auto b = sample_from(wrong, n_wrong, rng);
      subset.inputs = std::move(a);
      subset.inputs.insert(subset.inputs.end(), b.begin(), b.end());
      std::sort(subset.inputs.begin(), subset.inputs.end());
      break;
    }
    case SelectionStrategy::kEntropy: {
      if (known_set.empty()) throw ConfigError("entropy selection requires a known model set");
      if (size > table.num_inputs()) {
        throw InsufficientPool("requested " + std::to_string(size) + " inputs from " +
                               std::to_string(table.num_inputs()));
      }
      auto order = entropy_ranking(table, known_set);
      order.resize(size);
      subset.inputs = std::move(order);
      break;
    }
  }
  return subset;
}

}  // namespace fbi

#include "fbi/corpus_json.hpp"
