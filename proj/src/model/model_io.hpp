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
#include <string>
#include <string_view>
#include <vector>

#include "model/model.hpp"

namespace nd {

inline constexpr int kManifestFormatVersion = 1;

struct SerializedModel {
  std::string manifest;              // .netm text
  std::vector<std::uint8_t> blob;    // .netw bytes: little-endian float32, manifest order
};

// Canonical: identical models serialize to identical bytes.
SerializedModel save_model(const Model& model);

// Errors: kParse for malformed manifests, kShape for tensor/layer shape
// disagreements, kBlobTruncated / kBlobTrailing when the blob length does
// not match the manifest exactly.
Model load_model(std::string_view manifest_text, std::span<const std::uint8_t> blob);

void write_model_files(const Model& model, const std::filesystem::path& manifest_path,
                       const std::filesystem::path& weights_path);
Model read_model_files(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path);

// "<prefix>.netm" / "<prefix>.netw" for a path given either as a prefix or
// as either of the two file names.
struct ModelPaths {
  std::filesystem::path manifest;
  std::filesystem::path weights;
};
ModelPaths model_paths(const std::filesystem::path& prefix_or_file);

}  // namespace nd
