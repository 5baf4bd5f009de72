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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dataset/patches.hpp"
#include "model/model.hpp"

namespace nd {

struct TopEntry {
  float score = 0.0f;
  std::string patch_id;
  std::size_t patch_index = 0;  // position in the probed corpus
  std::uint32_t argmax_row = 0;
  std::uint32_t argmax_col = 0;
  Tensor feature_map;  // [H',W']
};

// Score descending, then patch_id ascending.
bool ranks_before(float score_a, const std::string& id_a, float score_b, const std::string& id_b) noexcept;

// Bounded best-k set under ranks_before. Merging is associative and
// commutative, so partitioned probing gives the same result as a single pass.
class TopK {
 public:
  explicit TopK(std::size_t k = 1) : k_(k) {}

  std::size_t capacity() const noexcept { return k_; }
  std::size_t size() const noexcept { return heap_.size(); }

  // True when an entry with this key would be retained.
  bool admits(float score, const std::string& patch_id) const;
  void offer(TopEntry entry);
  void merge(TopK&& other);

  // Best first.
  std::vector<TopEntry> sorted() &&;

 private:
  std::size_t k_;
  std::vector<TopEntry> heap_;  // worst retained entry at the front
};

// Smallest sample T with (#samples > T) / n <= q.
float compute_threshold(std::vector<float> samples, double q);

struct UnitRecord {
  std::string layer_id;
  std::size_t unit_index = 0;
  float threshold = 0.0f;
  std::vector<TopEntry> top;
  std::size_t top_positives = 0;

  double positive_fraction() const noexcept {
    return top.empty() ? 0.0 : static_cast<double>(top_positives) / static_cast<double>(top.size());
  }
};

enum class ThresholdSource { kPatchMax, kAllSpatial };

struct ProbeOptions {
  std::string layer_id = "conv3";
  std::size_t k = 12;
  double quantile = 0.005;
  ThresholdSource threshold_source = ThresholdSource::kPatchMax;
  unsigned threads = 0;

  void validate() const;
};

struct UnitCatalog {
  std::string model_name;
  std::string layer_id;
  std::size_t k = 0;
  double quantile = 0.0;
  ThresholdSource threshold_source = ThresholdSource::kPatchMax;
  std::vector<UnitRecord> units;
};

// Throws kInvalidArgument unless layer_id names a convolutional layer.
void require_conv_layer(const Model& model, const std::string& layer_id);

// Unit score = max over the spatial positions of the layer's output for one
// patch. Top-k entries and per-unit thresholds are computed over `patches`.
UnitCatalog probe(const Model& model, const PatchCorpus& patches, const ProbeOptions& options);

struct SegmentedPatchView {
  std::string patch_id;
  Tensor mask;     // [s,s], 1 where the upsampled map exceeds T
  Tensor overlay;  // [s,s], masked pixels unchanged, others scaled to 40%
};

inline constexpr float kDimFactor = 0.4f;

SegmentedPatchView segment_patch(const std::string& patch_id, const Tensor& pixels, const Tensor& feature_map,
                                 float threshold);

inline constexpr std::size_t kMontageSeparator = 2;

struct MontageLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

// cols = ceil(sqrt(n)), rows = ceil(n / cols); separators surround every cell.
MontageLayout montage_layout(std::size_t cells, std::size_t cell_size);

using PatchPixels = std::function<Tensor(const TopEntry&)>;

// Grid of segmented top patches in score order; separators are white and
// unused cells black.
Tensor render_montage(const UnitRecord& unit, const PatchPixels& pixels);

// Unit indices by positive fraction of their top-k, descending; ties by
// unit index.
std::vector<std::size_t> rank_units(const std::vector<UnitRecord>& units);

// ceil(n/2) units from the head of the ranking plus floor(n/2) drawn from the
// rest without replacement, returned in seeded random order.
std::vector<std::size_t> select_survey_units(const std::vector<std::size_t>& ranked, std::size_t n,
                                             std::uint64_t seed);

std::string unit_id(const std::string& layer_id, std::size_t unit_index);

}  // namespace nd
