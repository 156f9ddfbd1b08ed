// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference oracle for scalar-valued functions of Var leaves.
// Independent of the backward closures it checks: it only re-evaluates the
// forward pass.

#pragma once

#include "semtex/core/var.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace semtex::testing {

/// Numerical gradient of f w.r.t. every entry of `leaf`.
inline Tensord numeric_grad(const std::function<Vard()>& f, Vard leaf, double h = 1e-6) {
  Tensord g(leaf.shape());
  auto& v = leaf.mutable_value();
  NoGradGuard guard;
  for (Index i = 0; i < v.numel(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double up = f().item();
    v[i] = orig - h;
    const double down = f().item();
    v[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Relative error |a-b| / max(1, |a|, |b|) maximised over entries and leaves.
inline double max_grad_error(const std::function<Vard()>& f, std::vector<Vard> leaves, double h = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  backward(f());
  double worst = 0;
  for (auto& l : leaves) {
    const Tensord num = numeric_grad(f, l, h);
    const auto& ana = l.grad();
    for (Index i = 0; i < num.numel(); ++i) {
      const double scale = std::max({1.0, std::abs(num[i]), std::abs(ana[i])});
      worst = std::max(worst, std::abs(num[i] - ana[i]) / scale);
    }
  }
  return worst;
}

/// Relative error in the form |a-b| / max(|a|, |b|, floor), for loss checks.
inline double relative_error(const Tensord& analytic, const Tensord& numeric, double floor = 1e-8) {
  double worst = 0;
  for (Index i = 0; i < analytic.numel(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace semtex::testing
