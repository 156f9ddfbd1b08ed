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

#include "semtex/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace semtex {
namespace {

struct Raw {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
};

void write_raw(const std::filesystem::path& path, int width, int height, std::uint32_t format,
               const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
}

Raw read_raw(const std::filesystem::path& path, std::uint32_t format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error("cannot read " + path.string() + ": " + img.message);
  img.format = format;
  Raw raw;
  raw.width = static_cast<int>(img.width);
  raw.height = static_cast<int>(img.height);
  raw.bytes.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, raw.bytes.data(), 0, nullptr))
    throw std::runtime_error("cannot decode " + path.string() + ": " + img.message);
  return raw;
}

}  // namespace

std::uint8_t to_byte(float value) {
  const float scaled = std::round((std::clamp(value, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(scaled);
}

float from_byte(std::uint8_t byte) { return static_cast<float>(byte) / 127.5f - 1.0f; }

void write_png(const std::filesystem::path& path, const Image& image) {
  const Index H = image.dim(1), W = image.dim(2), P = H * W;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(3 * P));
  for (Index p = 0; p < P; ++p)
    for (Index c = 0; c < 3; ++c) bytes[static_cast<std::size_t>(3 * p + c)] = to_byte(image[c * P + p]);
  write_raw(path, static_cast<int>(W), static_cast<int>(H), PNG_FORMAT_RGB, bytes);
}

Image read_png(const std::filesystem::path& path) {
  const Raw raw = read_raw(path, PNG_FORMAT_RGB);
  const Index H = raw.height, W = raw.width, P = H * W;
  Image out({3, H, W});
  for (Index p = 0; p < P; ++p)
    for (Index c = 0; c < 3; ++c) out[c * P + p] = from_byte(raw.bytes[static_cast<std::size_t>(3 * p + c)]);
  return out;
}

void write_label_png(const std::filesystem::path& path, const LabelImage& labels) {
  if ((labels < 0).any() || (labels > 255).any())
    throw std::invalid_argument("labels must be in [0, 255] for " + path.string());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(labels.data()[i]);
  write_raw(path, static_cast<int>(labels.cols()), static_cast<int>(labels.rows()), PNG_FORMAT_GRAY, bytes);
}

LabelImage read_label_png(const std::filesystem::path& path) {
  const Raw raw = read_raw(path, PNG_FORMAT_GRAY);
  LabelImage out(raw.height, raw.width);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = raw.bytes[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace semtex
