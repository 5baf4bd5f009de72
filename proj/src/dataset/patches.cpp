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

#include "dataset/patches.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "tensor/ops.hpp"

namespace nd {

PatchGrid patch_grid(std::size_t height, std::size_t width, double window_frac, double stride_frac) {
  require(window_frac > 0.0 && window_frac <= 1.0, ErrorCode::kInvalidArgument, "window_frac must be in (0,1]");
  require(stride_frac > 0.0 && stride_frac <= 1.0, ErrorCode::kInvalidArgument, "stride_frac must be in (0,1]");
  PatchGrid grid;
  grid.window = static_cast<std::size_t>(std::floor(window_frac * static_cast<double>(std::min(height, width))));
  require(grid.window >= kMinWindow, ErrorCode::kInvalidArgument,
          "image " + std::to_string(height) + "x" + std::to_string(width) + " is too small: window " +
              std::to_string(grid.window) + " px is below the " + std::to_string(kMinWindow) + " px minimum");
  grid.stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(stride_frac * static_cast<double>(grid.window))));
  for (std::size_t y = 0; y + grid.window <= height; y += grid.stride) {
    for (std::size_t x = 0; x + grid.window <= width; x += grid.stride) {
      grid.rects.push_back({x, y, grid.window, grid.window});
    }
  }
  return grid;
}

Tensor render_patch(const Case& source, const PatchRect& rect, std::size_t size) {
  require(rect.x0 + rect.w <= source.width() && rect.y0 + rect.h <= source.height(), ErrorCode::kInvalidArgument,
          "patch rect lies outside case '" + source.case_id + "'");
  Tensor crop({rect.h, rect.w});
  for (std::size_t y = 0; y < rect.h; ++y) {
    const float* row = source.image.data() + (rect.y0 + y) * source.width() + rect.x0;
    std::copy_n(row, rect.w, crop.data() + y * rect.w);
  }
  return ops::bilinear_upsample(crop, size, size).reshaped({1, size, size});
}

std::vector<Patch> extract_patches(const Case& source, double window_frac, double stride_frac, std::size_t input_size) {
  validate_case(source);
  const PatchGrid grid = patch_grid(source.height(), source.width(), window_frac, stride_frac);
  const LesionComponents lesions = find_lesions(source.lesion_mask);
  std::vector<Patch> patches;
  patches.reserve(grid.rects.size());
  for (const auto& rect : grid.rects) {
    patches.push_back(Patch{rect, render_patch(source, rect, input_size), label_patch(rect, lesions), source.case_id,
                            make_patch_id(source.case_id, rect)});
  }
  return patches;
}

PatchCorpus::PatchCorpus(std::vector<Case> cases, double window_frac, double stride_frac, std::size_t input_size)
    : cases_(std::move(cases)), input_size_(input_size) {
  for (std::size_t ci = 0; ci < cases_.size(); ++ci) {
    const Case& c = cases_[ci];
    validate_case(c);
    const PatchGrid grid = patch_grid(c.height(), c.width(), window_frac, stride_frac);
    const LesionComponents lesions = find_lesions(c.lesion_mask);
    for (const auto& rect : grid.rects) {
      PatchEntry e{ci, rect, label_patch(rect, lesions), make_patch_id(c.case_id, rect)};
      require(by_id_.emplace(e.patch_id, entries_.size()).second, ErrorCode::kInvalidArgument,
              "duplicate patch id '" + e.patch_id + "' (case ids must be unique)");
      entries_.push_back(std::move(e));
    }
  }
}

Tensor PatchCorpus::pixels(std::size_t i) const {
  const PatchEntry& e = entries_.at(i);
  return render_patch(cases_[e.case_index], e.rect, input_size_);
}

std::size_t PatchCorpus::positives() const noexcept {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.label; }));
}

std::size_t PatchCorpus::find(const std::string& patch_id) const {
  const auto it = by_id_.find(patch_id);
  return it == by_id_.end() ? entries_.size() : it->second;
}

}  // namespace nd
