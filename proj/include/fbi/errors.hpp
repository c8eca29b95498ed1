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

#include <stdexcept>
#include <string>

namespace fbi {

// Base class for every error raised by the toolkit. The CLI maps the
// category() of an error onto its exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kConfig, kProtocol, kDegenerate };

  explicit Error(const std::string& what, Category category = Category::kConfig)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define FBI_DEFINE_ERROR(Name, category_value)                 \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what)                     \
        : Error(std::string(#Name ": ") + what, category_value) {} \
  }

// corpus
FBI_DEFINE_ERROR(ParseError, Category::kConfig);
FBI_DEFINE_ERROR(ConsistencyError, Category::kConfig);
FBI_DEFINE_ERROR(InsufficientPool, Category::kConfig);
FBI_DEFINE_ERROR(MissingGroundTruth, Category::kConfig);

// distance
FBI_DEFINE_ERROR(LengthMismatch, Category::kConfig);
FBI_DEFINE_ERROR(EmptyDelegateSet, Category::kConfig);
FBI_DEFINE_ERROR(InfeasibleAccuracies, Category::kConfig);
FBI_DEFINE_ERROR(OutOfRegime, Category::kConfig);

// walled garden
FBI_DEFINE_ERROR(OracleOutputInvalid, Category::kProtocol);
FBI_DEFINE_ERROR(EmptyInput, Category::kConfig);

// open world
FBI_DEFINE_ERROR(TooFewNegatives, Category::kConfig);
FBI_DEFINE_ERROR(DegenerateEvidence, Category::kDegenerate);

// simulator
FBI_DEFINE_ERROR(AccuracyGateViolation, Category::kProtocol);

// cli / protocol configuration
FBI_DEFINE_ERROR(ConfigError, Category::kConfig);

#undef FBI_DEFINE_ERROR

}  // namespace fbi
