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

// JSON mirror of the prediction CSV:
//
//   {"k": 1,
//    "models": ["m0", ...],
//    "inputs": ["x0", ...],
//    "outputs": [[[label, ...] per input] per model],
//    "ground_truth": [label | null per input]}      (optional)

#include <istream>
#include <ostream>

#include "fbi/corpus.hpp"
#include "json.hpp"

namespace fbi {

inline PredictionTable parse_table_json(std::istream& in, const LoadOptions& options) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
  try {
    const int k = doc.at("k").get<int>();
    auto models = doc.at("models").get<std::vector<std::string>>();
    auto inputs = doc.at("inputs").get<std::vector<std::string>>();
    const auto& outputs = doc.at("outputs");
    if (!outputs.is_array() || outputs.size() != models.size()) {
      throw ConsistencyError("json: outputs must have one row per model");
    }
    if (k < 1 || k > kMaxTopK) throw ConsistencyError("json: k out of range");
    std::vector<Label> cells;
    cells.reserve(models.size() * inputs.size() * static_cast<std::size_t>(k));
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto& row = outputs[m];
      if (!row.is_array() || row.size() != inputs.size()) {
        throw ConsistencyError("json: missing cell for model '" + models[m] + "'");
      }
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& cell = row[i];
        if (!cell.is_array() || cell.size() != static_cast<std::size_t>(k)) {
          throw ConsistencyError("json: mixed k in cell (" + models[m] + ", " + inputs[i] + ")");
        }
        for (const auto& label : cell) {
          const Label l = label.get<Label>();
          if (options.num_classes && l >= *options.num_classes) {
            throw ConsistencyError("json: label >= number of classes");
          }
          cells.push_back(l);
        }
      }
    }
    std::vector<std::optional<Label>> gt;
    if (doc.contains("ground_truth") && !doc["ground_truth"].is_null()) {
      const auto& g = doc["ground_truth"];
      if (!g.is_array() || g.size() != inputs.size()) {
        throw ConsistencyError("json: ground_truth must have one entry per input");
      }
      for (const auto& v : g) {
        gt.push_back(v.is_null() ? std::nullopt : std::optional<Label>(v.get<Label>()));
      }
    }
    return PredictionTable(std::move(models), std::move(inputs), k, std::move(cells), std::move(gt));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
}

inline void write_table_json(const PredictionTable& table, std::ostream& out) {
  nlohmann::json doc;
  doc["k"] = table.k();
  doc["models"] = table.models();
  doc["inputs"] = table.inputs();
  auto& outputs = doc["outputs"] = nlohmann::json::array();
  for (std::size_t m = 0; m < table.num_models(); ++m) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t i = 0; i < table.num_inputs(); ++i) {
      auto cell = table.output(m, i);
      row.push_back(std::vector<Label>(cell.begin(), cell.end()));
    }
    outputs.push_back(std::move(row));
  }
  if (table.has_ground_truth()) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& v : table.ground_truth()) g.push_back(v ? nlohmann::json(*v) : nlohmann::json());
    doc["ground_truth"] = std::move(g);
  }
  out << doc.dump() << '\n';
}

}  // namespace fbi
