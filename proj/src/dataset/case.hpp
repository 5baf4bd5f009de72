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

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tensor/tensor.hpp"

namespace nd {

enum class ImageLabel { kCancerous, kNormal, kBenign, kBenignWithoutCallback };

const char* image_label_name(ImageLabel label) noexcept;
ImageLabel parse_image_label(std::string_view name);

// One grayscale scan with its lesion segmentation.
struct Case {
  std::string case_id;
  std::string patient_id;
  Tensor image;        // [1,H,W], values in [0,1]
  Tensor lesion_mask;  // [H,W], 0 or 1
  ImageLabel image_label = ImageLabel::kNormal;

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
};

// Checks mask/image agreement and the normal-label/empty-mask invariant.
void validate_case(const Case& c);

struct PatchRect {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  bool operator==(const PatchRect&) const = default;
};

struct Patch {
  PatchRect rect;
  Tensor pixels;  // [1,s,s]
  bool label = false;
  std::string source_case_id;
  std::string patch_id;  // "caseid:x0,y0"
};

std::string make_patch_id(std::string_view case_id, const PatchRect& rect);

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split) noexcept;
Split parse_split(std::string_view name);

struct SplitAssignment {
  std::map<std::string, Split> by_patient;

  Split of(const std::string& patient_id) const;
};

}  // namespace nd
