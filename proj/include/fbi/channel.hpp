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

// Discrete memoryless channels over the surjected alphabet {0..k}.

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbi/errors.hpp"

namespace fbi {

// Row-stochastic (k+1)x(k+1) matrix; row y holds P(Z = . | Y = y).
class ChannelSpec {
 public:
  ChannelSpec() = default;
  ChannelSpec(int k, std::vector<double> matrix, std::string kind = "custom",
              std::map<std::string, double> params = {})
      : k_(k), w_(std::move(matrix)), kind_(std::move(kind)), params_(std::move(params)) {
    const std::size_t n = alphabet();
    if (k_ < 1 || w_.size() != n * n) throw ConfigError("channel matrix must be (k+1)x(k+1)");
    for (std::size_t y = 0; y < n; ++y) {
      double sum = 0.0;
      for (std::size_t z = 0; z < n; ++z) {
        const double v = w_[y * n + z];
        if (!(v >= 0.0)) throw ConfigError("channel entries must be non-negative");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("channel rows must sum to one");
    }
  }

  int k() const { return k_; }
  std::size_t alphabet() const { return static_cast<std::size_t>(k_) + 1; }
  double operator()(std::size_t y, std::size_t z) const { return w_[y * alphabet() + z]; }
  std::span<const double> row(std::size_t y) const { return {w_.data() + y * alphabet(), alphabet()}; }
  const std::vector<double>& matrix() const { return w_; }
  const std::string& kind() const { return kind_; }
  const std::map<std::string, double>& params() const { return params_; }

  // Output distribution for input distribution p_y.
  std::vector<double> push_forward(std::span<const double> p_y) const {
    std::vector<double> p_z(alphabet(), 0.0);
    for (std::size_t y = 0; y < alphabet(); ++y) {
      for (std::size_t z = 0; z < alphabet(); ++z) p_z[z] += p_y[y] * (*this)(y, z);
    }
    return p_z;
  }

  // This channel followed by `next`.
  ChannelSpec then(const ChannelSpec& next, std::string kind = "composite") const {
    if (next.k_ != k_) throw ConfigError("cannot compose channels of different k");
    const std::size_t n = alphabet();
    std::vector<double> w(n * n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t z = 0; z < n; ++z) w[y * n + z] += (*this)(y, t) * next(t, z);
      }
    }
    normalize_rows(w, n);
    return ChannelSpec(k_, std::move(w), std::move(kind));
  }

  static ChannelSpec identity(int k) {
    const std::size_t n = static_cast<std::size_t>(k) + 1;
    std::vector<double> w(n * n, 0.0);
    for (std::size_t y = 0; y < n; ++y) w[y * n + y] = 1.0;
    return ChannelSpec(k, std::move(w), "identity");
  }

  // Keep the symbol with probability p, otherwise redraw it from `resample`.
  static ChannelSpec retain(int k, double p, std::span<const double> resample, std::string kind) {
    const std::size_t n = static_cast<std::size_t>(k) + 1;
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("retain probability must be in [0, 1]");
    if (resample.size() != n) throw ConfigError("resample distribution has wrong size");
    std::vector<double> w(n * n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t z = 0; z < n; ++z) w[y * n + z] = (1.0 - p) * resample[z];
      w[y * n + y] += p;
    }
    normalize_rows(w, n);
    return ChannelSpec(k, std::move(w), std::move(kind), {{"retain", p}});
  }

  static ChannelSpec retain_uniform(int k, double p) {
    std::vector<double> u(static_cast<std::size_t>(k) + 1, 1.0 / (k + 1));
    return retain(k, p, u, "retain-uniform");
  }

  static ChannelSpec retain_marginal(int k, double p, std::span<const double> marginal) {
    return retain(k, p, marginal, "retain-marginal");
  }

  // Binary symmetric channel (k = 1).
  static ChannelSpec binary_symmetric(double flip) {
    return ChannelSpec(1, {1.0 - flip, flip, flip, 1.0 - flip}, "bsc", {{"flip", flip}});
  }

 private:
  static void normalize_rows(std::vector<double>& w, std::size_t n) {
    for (std::size_t y = 0; y < n; ++y) {
      double sum = 0.0;
      for (std::size_t z = 0; z < n; ++z) sum += w[y * n + z];
      for (std::size_t z = 0; z < n; ++z) w[y * n + z] /= sum;
    }
  }

  int k_ = 0;
  std::vector<double> w_;
  std::string kind_;
  std::map<std::string, double> params_;
};

}  // namespace fbi
