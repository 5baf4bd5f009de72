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
#include <string>
#include <unordered_map>
#include <vector>

#include "dataset/case.hpp"
#include "dataset/lesions.hpp"

namespace nd {

inline constexpr double kDefaultWindowFrac = 0.25;
inline constexpr double kDefaultStrideFrac = 0.5;
inline constexpr std::size_t kDefaultInputSize = 128;
inline constexpr std::size_t kMinWindow = 16;

struct PatchGrid {
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<PatchRect> rects;  // row-major, fully inside the image
};

// Square window of floor(window_frac * min(H,W)) pixels stepped by
// floor(stride_frac * window); no partial windows at the borders.
PatchGrid patch_grid(std::size_t height, std::size_t width, double window_frac = kDefaultWindowFrac,
                     double stride_frac = kDefaultStrideFrac);

// Crops rect and resamples it bilinearly to [1,size,size].
Tensor render_patch(const Case& source, const PatchRect& rect, std::size_t size = kDefaultInputSize);

std::vector<Patch> extract_patches(const Case& source, double window_frac = kDefaultWindowFrac,
                                   double stride_frac = kDefaultStrideFrac, std::size_t input_size = kDefaultInputSize);

struct PatchEntry {
  std::size_t case_index = 0;
  PatchRect rect;
  bool label = false;
  std::string patch_id;
};

// Patch descriptors over a set of cases. Pixels are rendered on demand so a
// corpus of thousands of patches stays small in memory.
class PatchCorpus {
 public:
  PatchCorpus() = default;
  PatchCorpus(std::vector<Case> cases, double window_frac = kDefaultWindowFrac,
              double stride_frac = kDefaultStrideFrac, std::size_t input_size = kDefaultInputSize);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const PatchEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<PatchEntry>& entries() const noexcept { return entries_; }
  const std::vector<Case>& cases() const noexcept { return cases_; }
  const Case& source(std::size_t i) const { return cases_.at(entries_.at(i).case_index); }
  std::size_t input_size() const noexcept { return input_size_; }

  Tensor pixels(std::size_t i) const;
  std::size_t positives() const noexcept;

  // Index of a patch id, or size() if absent.
  std::size_t find(const std::string& patch_id) const;

 private:
  std::vector<Case> cases_;
  std::vector<PatchEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t input_size_ = kDefaultInputSize;
};

}  // namespace nd
