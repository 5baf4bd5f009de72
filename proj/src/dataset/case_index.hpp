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
#include <string>
#include <vector>

#include "dataset/case.hpp"

namespace nd {

// One line of index.jsonl. Paths are stored relative to the index file's
// directory when written and resolved against it when read.
struct CaseIndexEntry {
  std::string case_id;
  std::string patient_id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  ImageLabel image_label = ImageLabel::kNormal;
};

std::vector<CaseIndexEntry> parse_case_index(std::string_view text, const std::filesystem::path& base_dir);
std::vector<CaseIndexEntry> read_case_index(const std::filesystem::path& index_path);
std::string format_case_index(const std::vector<CaseIndexEntry>& entries);

struct CaseMetadata {
  std::string case_id;
  std::string patient_id;
  ImageLabel image_label = ImageLabel::kNormal;
};

// Image normalized to [0,1]; mask pixels >= 0.5 after normalization are
// lesion.
Case load_case(const std::filesystem::path& image_path, const std::filesystem::path& mask_path,
               const CaseMetadata& metadata);

std::vector<Case> load_cases(const std::vector<CaseIndexEntry>& entries, unsigned threads = 0);

struct CorpusOptions {
  std::size_t cases = 200;
  double positive_frac = 0.5;
  std::uint64_t seed = 1;
};

struct CorpusSummary {
  std::size_t cases = 0;
  std::size_t positives = 0;
  std::size_t patients = 0;
  std::filesystem::path index_path;
};

// Writes images/, masks/, index.jsonl and corpus.json under out_dir. Exactly
// round(cases * positive_frac) cases are positive; two consecutive cases
// share a patient.
CorpusSummary generate_corpus(const std::filesystem::path& out_dir, const CorpusOptions& options);

}  // namespace nd
