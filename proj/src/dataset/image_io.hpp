// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace nd {

// Reads binary PGM (P5) or grayscale PNG and returns [H,W] values normalized
// to [0,1] by the format's maximum sample value. Color PNGs are converted to
// luminance.
Tensor read_gray_image(const std::filesystem::path& path);

// Quantizes [0,1] values to 8 bits (round half up, clamped).
std::vector<std::uint8_t> quantize_u8(std::span<const float> values);

// Both writers accept [H,W] or [1,H,W] tensors with values in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& image);
void write_png_gray(const std::filesystem::path& path, const Tensor& image);

std::vector<std::uint8_t> encode_png_gray(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels);

}  // namespace nd
