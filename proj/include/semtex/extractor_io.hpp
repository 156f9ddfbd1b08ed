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

// Feature extractors stored as checkpoint files, so that the loss and metric
// networks can be swapped without recompiling.

#pragma once

#include "semtex/checkpoint.hpp"
#include "semtex/losses.hpp"

#include <sstream>

namespace semtex {

template <typename Scalar>
void save_extractor(const FeatureExtractor<Scalar>& f, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.set("extractor.id", f.id());
  std::string stages;
  for (const auto& s : f.stages())
    stages += (stages.empty() ? "" : ",") + std::to_string(s.channels) + ":" + std::to_string(s.stride);
  ck.set("extractor.stages", stages);
  ck.set("extractor.embedding_dim", std::to_string(f.embedding_dim()));
  ck.set("extractor.pool_to", std::to_string(f.pool_to()));
  ck.put_params("extractor", f.params());
  ck.save(path);
}

/// Throws CheckpointError when the file is unreadable or its identifier
/// differs from `expected_id` (empty accepts any).
template <typename Scalar>
FeatureExtractor<Scalar> load_extractor(const std::filesystem::path& path, const std::string& expected_id = {}) {
  const Checkpoint ck = Checkpoint::load(path);
  const std::string id = ck.get("extractor.id");
  if (!expected_id.empty() && id != expected_id)
    throw CheckpointError(path.string() + " holds extractor '" + id + "', expected '" + expected_id + "'");
  std::vector<typename FeatureExtractor<Scalar>::Stage> stages;
  std::istringstream is(ck.get("extractor.stages"));
  for (std::string item; std::getline(is, item, ',');) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw CheckpointError("bad extractor stage '" + item + "' in " + path.string());
    stages.push_back({std::stol(item.substr(0, colon)), std::stol(item.substr(colon + 1))});
  }
  FeatureExtractor<Scalar> f(id, stages, 0, ck.get_int("extractor.embedding_dim"), ck.get_int("extractor.pool_to"));
  ck.load_params("extractor", f.params());
  return f;
}

}  // namespace semtex
