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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dataset/case.hpp"
#include "dissect/dissect.hpp"

namespace nd {

inline constexpr int kCatalogFormatVersion = 1;
inline constexpr char kCatalogFile[] = "catalog.json";

struct CatalogPatch {
  std::size_t rank = 0;
  float score = 0.0f;
  std::string patch_id;
  std::string case_id;
  PatchRect rect;
  std::uint32_t argmax_row = 0;
  std::uint32_t argmax_col = 0;
  bool label = false;
  std::string overlay;  // path relative to the catalog directory
};

struct CatalogUnit {
  std::string unit_id;
  std::string layer_id;
  std::size_t unit_index = 0;
  float threshold = 0.0f;
  std::size_t top_positives = 0;
  std::string montage;
  std::vector<CatalogPatch> patches;
};

struct CatalogCase {
  std::string case_id;
  std::string patient_id;
  ImageLabel image_label = ImageLabel::kNormal;
  std::size_t width = 0;
  std::size_t height = 0;
  std::string image;  // whole-scan context image, relative path
};

// Everything the survey needs, as written by the dissect stage.
struct Catalog {
  std::string model_name;
  std::string model_fingerprint;
  std::string layer_id;
  std::size_t k = 0;
  double quantile = 0.0;
  std::string threshold_source;  // "patch_max" or "all_spatial"
  std::string split;
  std::uint64_t seed = 0;
  std::size_t patch_count = 0;
  std::size_t feature_height = 0;
  std::size_t feature_width = 0;
  std::vector<CatalogUnit> units;    // unit index order
  std::vector<std::string> survey;   // unit ids in presentation order
  std::map<std::string, CatalogCase> cases;

  const CatalogUnit* find_unit(std::string_view id) const noexcept;
};

std::string format_catalog(const Catalog& catalog);
Catalog parse_catalog(std::string_view text);
Catalog read_catalog(const std::filesystem::path& dir);

// Structural invariants: one record per unit index, top lists sorted by
// (score desc, patch_id asc) and no longer than k, rectangles inside their
// source scans, survey ids known and unique. Throws kInvalidArgument.
void validate_catalog(const Catalog& catalog);

}  // namespace nd
