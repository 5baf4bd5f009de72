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

#include "dataset/lesions.hpp"

#include "common/error.hpp"

namespace nd {

namespace {

// Exact rational threshold: ratio >= 3/10.
constexpr std::size_t kThresholdNum = 3;
constexpr std::size_t kThresholdDen = 10;

bool at_least_threshold(std::size_t part, std::size_t whole) {
  return whole > 0 && part * kThresholdDen >= whole * kThresholdNum;
}

}  // namespace

LesionComponents find_lesions(const Tensor& mask) {
  require(mask.rank() == 2, ErrorCode::kShape, "lesion mask must be [H,W], got " + shape_string(mask.shape()));
  LesionComponents out;
  out.height = mask.dim(0);
  out.width = mask.dim(1);
  out.label.assign(mask.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] == 0.0f || out.label[start] >= 0) continue;
    const auto id = static_cast<std::int32_t>(out.sizes.size());
    std::size_t size = 0;
    stack.push_back(start);
    out.label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t y = p / out.width, x = p % out.width;
      auto visit = [&](std::size_t q) {
        if (mask[q] != 0.0f && out.label[q] < 0) {
          out.label[q] = id;
          stack.push_back(q);
        }
      };
      if (y > 0) visit(p - out.width);
      if (y + 1 < out.height) visit(p + out.width);
      if (x > 0) visit(p - 1);
      if (x + 1 < out.width) visit(p + 1);
    }
    out.sizes.push_back(size);
  }
  return out;
}

bool label_patch(const PatchRect& rect, const LesionComponents& lesions) {
  require(rect.w >= 1 && rect.h >= 1 && rect.x0 + rect.w <= lesions.width && rect.y0 + rect.h <= lesions.height,
          ErrorCode::kInvalidArgument, "label_patch: rect lies outside the mask");
  if (lesions.count() == 0) return false;
  std::vector<std::size_t> inside(lesions.count(), 0);
  std::size_t covered = 0;
  for (std::size_t y = rect.y0; y < rect.y0 + rect.h; ++y) {
    const std::int32_t* row = lesions.label.data() + y * lesions.width;
    for (std::size_t x = rect.x0; x < rect.x0 + rect.w; ++x) {
      if (row[x] >= 0) {
        ++inside[static_cast<std::size_t>(row[x])];
        ++covered;
      }
    }
  }
  if (at_least_threshold(covered, rect.w * rect.h)) return true;
  for (std::size_t i = 0; i < lesions.count(); ++i) {
    if (at_least_threshold(inside[i], lesions.sizes[i])) return true;
  }
  return false;
}

bool label_patch(const PatchRect& rect, const Tensor& mask) {
  return label_patch(rect, find_lesions(mask));
}

}  // namespace nd
