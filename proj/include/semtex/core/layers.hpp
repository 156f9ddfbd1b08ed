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

// Parameter storage and the equalized-learning-rate layers shared by the
// generator, discriminator, encoders and toy feature extractors.

#pragma once

#include "semtex/core/ops.hpp"
#include "semtex/core/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace semtex {

/// Ordered, named collection of trainable leaves.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<Scalar> var;
  };

  Var<Scalar> add(const std::string& name, Tensor<Scalar> init) {
    for (const auto& e : entries_)
      if (e.name == name) throw std::invalid_argument("duplicate parameter " + name);
    entries_.push_back({name, Var<Scalar>::leaf(std::move(init), true)});
    return entries_.back().var;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const Var<Scalar>& at(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.var;
    throw std::out_of_range("no parameter " + name);
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }
  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.var.set_requires_grad(on);
  }

  /// Copies values from a store with the same layout.
  void copy_values_from(const ParamStore& other) {
    check_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i)
      entries_[i].var.mutable_value() = other.entries_[i].var.value();
  }

  /// this = decay * this + (1 - decay) * other.
  void lerp_towards(const ParamStore& other, Scalar decay) {
    check_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& a = entries_[i].var.mutable_value().array();
      a = decay * a + (Scalar(1) - decay) * other.entries_[i].var.value().array();
    }
  }

  Index count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.var.numel();
    return n;
  }

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
    };
    for (const auto& e : entries_) {
      mix(e.name.data(), e.name.size());
      for (Index d : e.var.shape()) mix(&d, sizeof d);
      mix(e.var.value().data(), sizeof(Scalar) * static_cast<std::size_t>(e.var.numel()));
    }
    return h;
  }

 private:
  void check_layout(const ParamStore& other) const {
    if (other.entries_.size() != entries_.size()) throw std::invalid_argument("parameter layout mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != other.entries_[i].name || entries_[i].var.shape() != other.entries_[i].var.shape())
        throw std::invalid_argument("parameter layout mismatch at " + entries_[i].name);
  }

  std::vector<Entry> entries_;
};

/// Fully connected layer, y = x W^T * (lr_mul / sqrt(in)) + b * lr_mul.
template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(ParamStore<Scalar>& store, const std::string& name, Index in, Index out, Rng& rng, Scalar lr_mul = 1,
        Scalar bias_init = 0, Scalar init_gain = 1)
      : gain_(lr_mul / std::sqrt(static_cast<Scalar>(in))), lr_mul_(lr_mul) {
    weight_ = store.add(name + ".weight", rng.normal_tensor<Scalar>({out, in}, init_gain / lr_mul));
    bias_ = store.add(name + ".bias", Tensor<Scalar>::constant({out}, bias_init / lr_mul));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return add_bias(matmul_nt(x, scale(weight_, gain_)), scale(bias_, lr_mul_));
  }

 private:
  Var<Scalar> weight_, bias_;
  Scalar gain_ = 1, lr_mul_ = 1;
};

/// Plain convolution with runtime weight scaling.
template <typename Scalar>
class Conv {
 public:
  Conv() = default;
  Conv(ParamStore<Scalar>& store, const std::string& name, Index in, Index out, Index kernel, Rng& rng,
       Index stride = 1, bool bias = true, Scalar init_gain = 1)
      : stride_(stride), pad_(kernel / 2), gain_(Scalar(1) / std::sqrt(static_cast<Scalar>(in * kernel * kernel))) {
    weight_ = store.add(name + ".weight", rng.normal_tensor<Scalar>({out, in, kernel, kernel}, init_gain));
    if (bias) bias_ = store.add(name + ".bias", Tensor<Scalar>::zeros({out}));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    Var<Scalar> y = conv2d(x, scale(weight_, gain_), stride_, pad_);
    return bias_.defined() ? add_bias(y, bias_) : y;
  }

  const Var<Scalar>& weight() const { return weight_; }

 private:
  Var<Scalar> weight_, bias_;
  Index stride_ = 1, pad_ = 0;
  Scalar gain_ = 1;
};

/// Style-modulated convolution. The style scales input channels, the
/// (optional) demodulation renormalizes each output channel to unit
/// expected variance; equivalent to per-sample weight modulation.
template <typename Scalar>
class ModulatedConv {
 public:
  ModulatedConv() = default;
  ModulatedConv(ParamStore<Scalar>& store, const std::string& name, Index w_dim, Index in, Index out, Index kernel,
                Rng& rng, bool demodulate = true, bool upsample = false)
      : affine_(store, name + ".affine", w_dim, in, rng, Scalar(1), Scalar(1)),
        kernel_(kernel),
        demodulate_(demodulate),
        upsample_(upsample),
        gain_(Scalar(1) / std::sqrt(static_cast<Scalar>(in * kernel * kernel))) {
    weight_ = store.add(name + ".weight", rng.normal_tensor<Scalar>({out, in, kernel, kernel}));
  }

  Var<Scalar> operator()(const Var<Scalar>& x, const Var<Scalar>& w) const {
    const Var<Scalar> styles = affine_(w);  // [N, in]
    const Var<Scalar> weight = scale(weight_, gain_);
    Var<Scalar> h = scale_channels(x, styles);
    if (upsample_) h = upsample2x(h);
    Var<Scalar> y = conv2d(h, weight, 1, kernel_ / 2);
    if (demodulate_) {
      const Index O = weight_.dim(0), C = weight_.dim(1);
      const Var<Scalar> wsq = reshape(sum_last(reshape(square(weight), {O * C, kernel_ * kernel_})), {O, C});
      y = scale_channels(y, rsqrt(add_scalar(matmul_nt(square(styles), wsq), Scalar(1e-8))));
    }
    return y;
  }

 private:
  Dense<Scalar> affine_;
  Var<Scalar> weight_;
  Index kernel_ = 3;
  bool demodulate_ = true;
  bool upsample_ = false;
  Scalar gain_ = 1;
};

}  // namespace semtex
