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

#pragma once

#include "semtex/core/layers.hpp"

#include <cmath>

namespace semtex {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over one ParamStore.
template <typename Scalar>
class Adam {
 public:
  Adam(ParamStore<Scalar>& params, AdamOptions options) : params_(&params), options_(options) {
    for (const auto& e : params.entries()) {
      m_.push_back(Tensor<Scalar>::zeros(e.var.shape()));
      v_.push_back(Tensor<Scalar>::zeros(e.var.shape()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
    const auto lr = static_cast<Scalar>(options_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    const auto& entries = params_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto var = entries[i].var;
      if (!var.requires_grad()) continue;
      const auto& g = var.grad().array();
      auto& m = m_[i].array();
      auto& v = v_[i].array();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      var.mutable_value().array() -= lr * m / ((v * inv_c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }
  const AdamOptions& options() const { return options_; }
  void set_options(const AdamOptions& options) { options_ = options; }

 private:
  ParamStore<Scalar>* params_;
  AdamOptions options_;
  std::vector<Tensor<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace semtex
