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

// Truth manifest of a simulated ensemble:
//
//   {"models": {"m00": {"parent": null, "procedure": null, "kind": "vanilla",
//                       "parameters": {...}, "measured_accuracy": 0.79,
//                       "effective_channel": [[...], ...]}, ...},
//    "dropped": [{"id": ..., "reason": ...}],
//    "probes": {...}}  // only when the ensemble has probes

#include <ostream>
#include <span>

#include "fbi/family_sim.hpp"
#include "json.hpp"

namespace fbi::sim {

inline nlohmann::ordered_json manifest_entries_json(std::span<const ManifestEntry> entries) {
  nlohmann::ordered_json models = nlohmann::ordered_json::object();
  for (const ManifestEntry& m : entries) {
    nlohmann::ordered_json j;
    j["parent"] = m.parent ? nlohmann::ordered_json(*m.parent) : nlohmann::ordered_json();
    j["procedure"] = m.procedure ? nlohmann::ordered_json(*m.procedure) : nlohmann::ordered_json();
    j["kind"] = m.kind;
    j["parameters"] = m.params;
    j["measured_accuracy"] = m.measured_accuracy;
    if (m.effective) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (std::size_t y = 0; y < m.effective->alphabet(); ++y) {
        auto r = m.effective->row(y);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
      }
      j["effective_channel"] = std::move(rows);
      j["parent_marginal"] = m.parent_marginal;
    }
    models[m.id] = std::move(j);
  }
  return models;
}

inline nlohmann::ordered_json manifest_json(const Ensemble& e) {
  nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
  for (const auto& d : e.dropped) dropped.push_back({{"id", d.id}, {"reason", d.reason}});
  nlohmann::ordered_json doc;
  doc["models"] = manifest_entries_json(e.manifest);
  doc["dropped"] = std::move(dropped);
  if (e.probes) doc["probes"] = manifest_entries_json(e.probes->manifest);
  return doc;
}

inline void write_manifest(const Ensemble& e, std::ostream& out) { out << manifest_json(e).dump(2) << '\n'; }

}  // namespace fbi::sim
