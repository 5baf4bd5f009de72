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
#include <cstdint>
#include <vector>

#include "dataset/case.hpp"
#include "tensor/tensor.hpp"

namespace nd {

// 4-connected components of the nonzero pixels of an [H,W] mask. Each
// component stands in for one lesion.
struct LesionComponents {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> label;   // -1 for background, else component index
  std::vector<std::size_t> sizes;    // pixel count per component

  std::size_t count() const noexcept { return sizes.size(); }
};

LesionComponents find_lesions(const Tensor& mask);

// Positive iff at least 30% of some lesion lies inside rect, or at least
// 30% of rect is covered by lesion pixels. Both comparisons are inclusive.
bool label_patch(const PatchRect& rect, const Tensor& mask);
bool label_patch(const PatchRect& rect, const LesionComponents& lesions);

}  // namespace nd
