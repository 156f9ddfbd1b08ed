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

// PNG files. RGB images map [-1, 1] to [0, 255]; label images are 8-bit
// grey with the class index as pixel value.

#pragma once

#include "semtex/image.hpp"

#include <cstdint>
#include <filesystem>

namespace semtex {

std::uint8_t to_byte(float value);
float from_byte(std::uint8_t byte);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

void write_label_png(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_label_png(const std::filesystem::path& path);

}  // namespace semtex
