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

#include "dissect/dissect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "tensor/ops.hpp"

namespace nd {

bool ranks_before(float score_a, const std::string& id_a, float score_b, const std::string& id_b) noexcept {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

namespace {

// Heap comparator placing the worst-ranked entry at the front.
bool heap_less(const TopEntry& a, const TopEntry& b) {
  return ranks_before(a.score, a.patch_id, b.score, b.patch_id);
}

}  // namespace

bool TopK::admits(float score, const std::string& patch_id) const {
  if (heap_.size() < k_) return true;
  const TopEntry& worst = heap_.front();
  return ranks_before(score, patch_id, worst.score, worst.patch_id);
}

void TopK::offer(TopEntry entry) {
  if (!admits(entry.score, entry.patch_id)) return;
  if (heap_.size() == k_) {
    std::pop_heap(heap_.begin(), heap_.end(), heap_less);
    heap_.pop_back();
  }
  heap_.push_back(std::move(entry));
  std::push_heap(heap_.begin(), heap_.end(), heap_less);
}

void TopK::merge(TopK&& other) {
  for (auto& e : other.heap_) offer(std::move(e));
  other.heap_.clear();
}

std::vector<TopEntry> TopK::sorted() && {
  std::vector<TopEntry> out = std::move(heap_);
  std::sort(out.begin(), out.end(), heap_less);
  return out;
}

float compute_threshold(std::vector<float> samples, double q) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "threshold: no samples");
  require(q > 0.0 && q < 1.0, ErrorCode::kInvalidArgument, "threshold: quantile must be in (0,1)");
  std::sort(samples.begin(), samples.end());
  require(std::isfinite(samples.front()) && std::isfinite(samples.back()), ErrorCode::kNumeric,
          "threshold: non-finite sample");
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const auto above = static_cast<double>(samples.size() - j);
    if (above / n <= q) return samples[i];
    i = j;
  }
  return samples.back();
}

void ProbeOptions::validate() const {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be >= 1");
  require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile must be in (0,1)");
}

void require_conv_layer(const Model& model, const std::string& layer_id) {
  const LayerDesc* layer = model.find_layer(layer_id);
  require(layer != nullptr, ErrorCode::kNotFound, "model has no layer '" + layer_id + "'");
  if (layer->kind == LayerKind::kFc) {
    fail(ErrorCode::kInvalidArgument,
         "layer '" + layer_id +
             "' is fully connected: dissection applies only to convolutional layers, whose units have spatial "
             "feature maps that can be upsampled and binarized over the input");
  }
  require(layer->kind == LayerKind::kConv, ErrorCode::kInvalidArgument,
          "layer '" + layer_id + "' is " + layer_kind_name(layer->kind) +
              ", not convolutional; dissection targets conv layers");
}

namespace {

struct Partial {
  std::vector<TopK> top;
  std::vector<std::vector<float>> samples;
};

}  // namespace

UnitCatalog probe(const Model& model, const PatchCorpus& patches, const ProbeOptions& options) {
  options.validate();
  require_conv_layer(model, options.layer_id);
  require(!patches.empty(), ErrorCode::kInvalidArgument, "probe: no patches");
  const Shape& out_shape = model.output_shape(model.layer_index(options.layer_id));
  const std::size_t units = out_shape[0], fh = out_shape[1], fw = out_shape[2], plane = fh * fw;

  const unsigned threads = options.threads == 0 ? default_thread_count() : options.threads;
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(patches.size())));
  std::vector<Partial> partials(workers);
  parallel_chunks(patches.size(), workers, [&](unsigned w, std::size_t begin, std::size_t end) {
    Partial& part = partials[w];
    part.top.assign(units, TopK(options.k));
    part.samples.resize(units);
    for (std::size_t i = begin; i < end; ++i) {
      const std::string& pid = patches.entry(i).patch_id;
      const ForwardResult fr = forward(model, adapt_input(model, patches.pixels(i)), {options.layer_id});
      const Tensor& act = fr.captures.at(0).tensor;
      for (std::size_t u = 0; u < units; ++u) {
        const float* map = act.data() + u * plane;
        std::size_t best = 0;
        for (std::size_t p = 1; p < plane; ++p) {
          if (map[p] > map[best]) best = p;
        }
        const float score = map[best];
        require(std::isfinite(score), ErrorCode::kNumeric, "probe: non-finite activation for patch " + pid);
        if (options.threshold_source == ThresholdSource::kPatchMax) {
          part.samples[u].push_back(score);
        } else {
          part.samples[u].insert(part.samples[u].end(), map, map + plane);
        }
        if (part.top[u].admits(score, pid)) {
          TopEntry e;
          e.score = score;
          e.patch_id = pid;
          e.patch_index = i;
          e.argmax_row = static_cast<std::uint32_t>(best / fw);
          e.argmax_col = static_cast<std::uint32_t>(best % fw);
          e.feature_map = Tensor::from_unchecked({fh, fw}, std::vector<float>(map, map + plane));
          part.top[u].offer(std::move(e));
        }
      }
    }
  });

  UnitCatalog catalog;
  catalog.model_name = model.name();
  catalog.layer_id = options.layer_id;
  catalog.k = options.k;
  catalog.quantile = options.quantile;
  catalog.threshold_source = options.threshold_source;
  catalog.units.resize(units);
  for (std::size_t u = 0; u < units; ++u) {
    TopK merged(options.k);
    std::vector<float> samples;
    for (auto& part : partials) {
      if (part.top.empty()) continue;
      merged.merge(std::move(part.top[u]));
      samples.insert(samples.end(), part.samples[u].begin(), part.samples[u].end());
      std::vector<float>().swap(part.samples[u]);
    }
    UnitRecord& rec = catalog.units[u];
    rec.layer_id = options.layer_id;
    rec.unit_index = u;
    rec.threshold = compute_threshold(std::move(samples), options.quantile);
    rec.top = std::move(merged).sorted();
    for (const auto& e : rec.top) rec.top_positives += patches.entry(e.patch_index).label ? 1 : 0;
  }
  return catalog;
}

SegmentedPatchView segment_patch(const std::string& patch_id, const Tensor& pixels, const Tensor& feature_map,
                                 float threshold) {
  require(feature_map.rank() == 2, ErrorCode::kShape, "segment_patch: feature map must be [H,W]");
  require((pixels.rank() == 3 && pixels.dim(0) == 1) || pixels.rank() == 2, ErrorCode::kShape,
          "segment_patch: patch pixels must be [1,s,s] or [s,s]");
  const std::size_t h = pixels.dim(pixels.rank() - 2), w = pixels.dim(pixels.rank() - 1);
  const Tensor up = ops::bilinear_upsample(feature_map, h, w);
  SegmentedPatchView view;
  view.patch_id = patch_id;
  view.mask = Tensor({h, w});
  view.overlay = Tensor({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const bool on = up[i] > threshold;
    view.mask[i] = on ? 1.0f : 0.0f;
    view.overlay[i] = on ? pixels[i] : pixels[i] * kDimFactor;
  }
  return view;
}

MontageLayout montage_layout(std::size_t cells, std::size_t cell_size) {
  require(cells >= 1, ErrorCode::kInvalidArgument, "montage needs at least one cell");
  MontageLayout layout;
  layout.cols = 1;
  while (layout.cols * layout.cols < cells) ++layout.cols;
  layout.rows = (cells + layout.cols - 1) / layout.cols;
  layout.width = layout.cols * cell_size + (layout.cols + 1) * kMontageSeparator;
  layout.height = layout.rows * cell_size + (layout.rows + 1) * kMontageSeparator;
  return layout;
}

Tensor render_montage(const UnitRecord& unit, const PatchPixels& pixels) {
  require(!unit.top.empty(), ErrorCode::kInvalidArgument,
          "montage for " + unit_id(unit.layer_id, unit.unit_index) + ": no top patches");
  std::vector<SegmentedPatchView> views;
  std::size_t cell = 0;
  for (const auto& e : unit.top) {
    const Tensor px = pixels(e);
    require(!px.empty(), ErrorCode::kNotFound, "montage: missing pixels for patch " + e.patch_id);
    views.push_back(segment_patch(e.patch_id, px, e.feature_map, unit.threshold));
    const std::size_t s = views.back().overlay.dim(0);
    require(views.back().overlay.dim(1) == s && (cell == 0 || cell == s), ErrorCode::kShape,
            "montage: patches must share one square size");
    cell = s;
  }
  const MontageLayout layout = montage_layout(views.size(), cell);
  Tensor out({layout.height, layout.width}, 1.0f);
  for (std::size_t r = 0; r < layout.rows; ++r) {
    for (std::size_t c = 0; c < layout.cols; ++c) {
      const std::size_t idx = r * layout.cols + c;
      const std::size_t y0 = kMontageSeparator + r * (cell + kMontageSeparator);
      const std::size_t x0 = kMontageSeparator + c * (cell + kMontageSeparator);
      for (std::size_t y = 0; y < cell; ++y) {
        float* dst = out.data() + (y0 + y) * layout.width + x0;
        if (idx < views.size()) {
          std::copy_n(views[idx].overlay.data() + y * cell, cell, dst);
        } else {
          std::fill_n(dst, cell, 0.0f);
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> rank_units(const std::vector<UnitRecord>& units) {
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const UnitRecord& ua = units[a];
    const UnitRecord& ub = units[b];
    // Exact comparison of pos_a/n_a against pos_b/n_b.
    const std::size_t lhs = ua.top_positives * std::max<std::size_t>(ub.top.size(), 1);
    const std::size_t rhs = ub.top_positives * std::max<std::size_t>(ua.top.size(), 1);
    if (lhs != rhs) return lhs > rhs;
    return ua.unit_index < ub.unit_index;
  });
  return order;
}

std::vector<std::size_t> select_survey_units(const std::vector<std::size_t>& ranked, std::size_t n,
                                             std::uint64_t seed) {
  require(n <= ranked.size(), ErrorCode::kInvalidArgument,
          "survey size " + std::to_string(n) + " exceeds the " + std::to_string(ranked.size()) + " available units");
  const std::size_t head = (n + 1) / 2;
  std::vector<std::size_t> picked(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(head));
  std::vector<std::size_t> rest(ranked.begin() + static_cast<std::ptrdiff_t>(head), ranked.end());
  Rng rng(derive_seed(seed, 0x5E1EC7));
  for (std::size_t i = 0; i < n / 2; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(rest.size()) - 1));
    std::swap(rest[i], rest[j]);
    picked.push_back(rest[i]);
  }
  rng.shuffle(std::span<std::size_t>(picked));
  return picked;
}

std::string unit_id(const std::string& layer_id, std::size_t unit_index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", unit_index);
  return layer_id + "_" + buf;
}

}  // namespace nd
