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

#include "semtex/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace semtex {
namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'T', 'E', 'X', 'C', 'K'};
enum : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) h = (h ^ static_cast<unsigned char>(data[i])) * 1099511628211ULL;
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.append(s);
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t begin, std::size_t end, std::string source)
      : bytes_(bytes), pos_(begin), end_(end), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof v), sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    return std::string(take(n), n);
  }
  const char* take(std::size_t n) {
    if (n > end_ - pos_) throw CheckpointError(source_ + ": truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::size_t pos_, end_;
  std::string source_;
};

template <typename Scalar>
void write_array(Writer& w, std::uint8_t dtype, const Tensor<Scalar>& t) {
  w.pod(dtype);
  w.pod(static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) w.pod(static_cast<std::int64_t>(d));
  w.raw(t.data(), sizeof(Scalar) * static_cast<std::size_t>(t.numel()));
}

template <typename Scalar>
Tensor<Scalar> read_array(Reader& r, const Shape& shape) {
  Tensor<Scalar> t(shape);
  const std::size_t n = sizeof(Scalar) * static_cast<std::size_t>(t.numel());
  std::memcpy(t.data(), r.take(n), n);
  return t;
}

}  // namespace

const std::string& Checkpoint::get(const std::string& key) const {
  const auto it = metadata_.find(key);
  if (it == metadata_.end()) throw CheckpointError("checkpoint metadata has no key '" + key + "'");
  return it->second;
}

long Checkpoint::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw CheckpointError("metadata '" + key + "' is not an integer: " + v);
  return out;
}

bool Checkpoint::has_group(const std::string& group) const {
  const auto it = arrays_.lower_bound(group + "/");
  return it != arrays_.end() && it->first.rfind(group + "/", 0) == 0;
}

std::string Checkpoint::serialize() const {
  Writer body;
  body.pod(static_cast<std::uint64_t>(metadata_.size()));
  for (const auto& [k, v] : metadata_) {
    body.str(k);
    body.str(v);
  }
  body.pod(static_cast<std::uint64_t>(arrays_.size()));
  for (const auto& [name, arr] : arrays_) {
    body.str(name);
    if (const auto* f = std::get_if<Tensor<float>>(&arr))
      write_array(body, kFloat32, *f);
    else
      write_array(body, kFloat64, std::get<Tensor<double>>(arr));
  }
  Writer out;
  out.raw(kMagic, sizeof kMagic);
  out.pod(kCheckpointVersion);
  out.pod(static_cast<std::uint64_t>(body.bytes().size()));
  out.raw(body.bytes().data(), body.bytes().size());
  out.pod(fnv1a(body.bytes().data(), body.bytes().size()));
  return std::move(out.bytes());
}

Checkpoint Checkpoint::deserialize(const std::string& bytes, const std::string& source) {
  Reader head(bytes, 0, bytes.size(), source);
  if (std::memcmp(head.take(sizeof kMagic), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(source + ": not a checkpoint file");
  const auto version = head.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": checkpoint format version " + std::to_string(version) +
                          " is not supported by this build (reads version " + std::to_string(kCheckpointVersion) + ")");
  const auto size = head.pod<std::uint64_t>();
  const std::size_t begin = sizeof kMagic + sizeof version + sizeof size;
  if (size > bytes.size() - begin || bytes.size() - begin - size < sizeof(std::uint64_t))
    throw CheckpointError(source + ": truncated checkpoint");
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + begin + size, sizeof stored);
  if (stored != fnv1a(bytes.data() + begin, size)) throw CheckpointError(source + ": checksum mismatch");
  if (bytes.size() != begin + size + sizeof stored) throw CheckpointError(source + ": trailing bytes after checkpoint");

  Reader r(bytes, begin, begin + size, source);
  Checkpoint ck;
  const auto n_meta = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.metadata_[k] = r.str();
  }
  const auto n_arrays = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    const std::string name = r.str();
    const auto dtype = r.pod<std::uint8_t>();
    const auto rank = r.pod<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.pod<std::int64_t>();
      if (dim < 0) throw CheckpointError(source + ": negative dimension in " + name);
      shape.push_back(static_cast<Index>(dim));
    }
    if (dtype == kFloat32)
      ck.arrays_[name] = read_array<float>(r, shape);
    else if (dtype == kFloat64)
      ck.arrays_[name] = read_array<double>(r, shape);
    else
      throw CheckpointError(source + ": unknown element type in " + name);
  }
  if (!r.done()) throw CheckpointError(source + ": malformed checkpoint payload");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

}  // namespace semtex
