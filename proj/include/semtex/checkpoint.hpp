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

// Single-file container of named arrays plus string metadata.
//
// Layout (little-endian): magic "SEMTEXCK", u32 format version, u64 payload
// size, payload, u64 FNV-1a of the payload. Entries are stored in key order,
// so equal contents always serialize to equal bytes.

#pragma once

#include "semtex/core/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>

namespace semtex {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Checkpoint {
 public:
  using Array = std::variant<Tensor<float>, Tensor<double>>;

  void set(const std::string& key, const std::string& value) { metadata_[key] = value; }
  bool has(const std::string& key) const { return metadata_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  long get_int(const std::string& key) const;
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& t) {
    arrays_[name] = t;
  }
  bool has_array(const std::string& name) const { return arrays_.count(name) > 0; }
  template <typename Scalar>
  const Tensor<Scalar>& array(const std::string& name) const {
    const auto it = arrays_.find(name);
    if (it == arrays_.end()) throw CheckpointError("checkpoint has no array '" + name + "'");
    if (const auto* t = std::get_if<Tensor<Scalar>>(&it->second)) return *t;
    throw CheckpointError("array '" + name + "' has a different element type");
  }
  const std::map<std::string, Array>& arrays() const { return arrays_; }

  /// Stores every parameter as "<group>/<name>".
  template <typename Scalar>
  void put_params(const std::string& group, const ParamStore<Scalar>& store) {
    for (const auto& e : store.entries()) put(group + "/" + e.name, e.var.value());
  }
  bool has_group(const std::string& group) const;

  /// Loads every parameter of `store` from "<group>/<name>"; shapes must match.
  template <typename Scalar>
  void load_params(const std::string& group, ParamStore<Scalar>& store) const {
    for (const auto& e : store.entries()) {
      const Tensor<Scalar>& t = array<Scalar>(group + "/" + e.name);
      if (t.shape() != e.var.shape())
        throw CheckpointError("shape mismatch for " + group + "/" + e.name + ": file " + shape_string(t.shape()) +
                              ", model " + shape_string(e.var.shape()));
      Var<Scalar> v = e.var;
      v.mutable_value() = t;
    }
  }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes, const std::string& source = "<memory>");

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> metadata_;
  std::map<std::string, Array> arrays_;
};

}  // namespace semtex
