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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbi/corpus.hpp"
#include "fbi/distance.hpp"
#include "fbi/random.hpp"

namespace fbi::testing {

// outputs[m][i] is the top-k list of model m on input i.
inline PredictionTable make_table(const std::vector<std::vector<TopKOutput>>& outputs,
                                  std::vector<std::optional<Label>> ground_truth = {}) {
  std::vector<std::string> models, inputs;
  for (std::size_t m = 0; m < outputs.size(); ++m) models.push_back("m" + std::to_string(m));
  for (std::size_t i = 0; i < outputs.front().size(); ++i) inputs.push_back("x" + std::to_string(i));
  const int k = static_cast<int>(outputs.front().front().size());
  std::vector<Label> cells;
  for (const auto& row : outputs)
    for (const auto& cell : row) cells.insert(cells.end(), cell.begin(), cell.end());
  return PredictionTable(std::move(models), std::move(inputs), k, std::move(cells), std::move(ground_truth));
}

// Table of top-k lists with labels drawn from [0, n_labels).
inline PredictionTable random_table(std::uint64_t seed, std::size_t n_models, std::size_t n_inputs, int k,
                                    Label n_labels) {
  Rng rng(seed);
  std::vector<std::vector<TopKOutput>> outputs(n_models, std::vector<TopKOutput>(n_inputs));
  for (auto& row : outputs) {
    for (auto& cell : row) {
      while (static_cast<int>(cell.size()) < k) {
        const auto l = static_cast<Label>(rng.below(static_cast<std::uint64_t>(n_labels)));
        if (std::find(cell.begin(), cell.end(), l) == cell.end()) cell.push_back(l);
      }
    }
  }
  return make_table(outputs);
}

inline SurjectedSequence seq(std::vector<std::uint8_t> v, int k = 1) { return make_sequence(std::move(v), k); }

}  // namespace fbi::testing
