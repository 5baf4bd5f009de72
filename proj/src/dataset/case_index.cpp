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

#include "dataset/case_index.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "common/files.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "dataset/image_io.hpp"
#include "dataset/synthetic.hpp"

namespace nd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string string_field(const json& rec, const char* key, std::size_t line) {
  const auto it = rec.find(key);
  require(it != rec.end() && it->is_string() && !it->get<std::string>().empty(), ErrorCode::kParse,
          "case index line " + std::to_string(line) + ": missing or non-string field '" + key + "'");
  return it->get<std::string>();
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

}  // namespace

std::vector<CaseIndexEntry> parse_case_index(std::string_view text, const fs::path& base_dir) {
  std::vector<CaseIndexEntry> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kParse, "case index line " + std::to_string(line_no) + ": " + e.what());
    }
    require(rec.is_object(), ErrorCode::kParse, "case index line " + std::to_string(line_no) + ": not an object");
    CaseIndexEntry e;
    e.case_id = string_field(rec, "case_id", line_no);
    e.patient_id = string_field(rec, "patient_id", line_no);
    e.image_path = base_dir / string_field(rec, "image_path", line_no);
    e.mask_path = base_dir / string_field(rec, "mask_path", line_no);
    e.image_label = parse_image_label(string_field(rec, "image_label", line_no));
    require(seen.insert(e.case_id).second, ErrorCode::kParse,
            "case index line " + std::to_string(line_no) + ": duplicate case_id '" + e.case_id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CaseIndexEntry> read_case_index(const fs::path& index_path) {
  return parse_case_index(read_file_text(index_path), index_path.parent_path());
}

std::string format_case_index(const std::vector<CaseIndexEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    json rec;
    rec["case_id"] = e.case_id;
    rec["patient_id"] = e.patient_id;
    rec["image_path"] = e.image_path.generic_string();
    rec["mask_path"] = e.mask_path.generic_string();
    rec["image_label"] = image_label_name(e.image_label);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Case load_case(const fs::path& image_path, const fs::path& mask_path, const CaseMetadata& metadata) {
  Tensor image = read_gray_image(image_path);
  const Tensor raw_mask = read_gray_image(mask_path);
  require(raw_mask.shape() == image.shape(), ErrorCode::kShape,
          "case '" + metadata.case_id + "': mask " + shape_string(raw_mask.shape()) + " does not match image " +
              shape_string(image.shape()));
  Case c;
  c.case_id = metadata.case_id;
  c.patient_id = metadata.patient_id;
  c.image_label = metadata.image_label;
  c.image = image.reshaped({1, image.dim(0), image.dim(1)});
  c.lesion_mask = Tensor(raw_mask.shape());
  for (std::size_t i = 0; i < raw_mask.size(); ++i) c.lesion_mask[i] = raw_mask[i] >= 0.5f ? 1.0f : 0.0f;
  validate_case(c);
  return c;
}

std::vector<Case> load_cases(const std::vector<CaseIndexEntry>& entries, unsigned threads) {
  std::vector<Case> cases(entries.size());
  parallel_chunks(entries.size(), threads == 0 ? default_thread_count() : threads,
                  [&](unsigned, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto& e = entries[i];
                      cases[i] = load_case(e.image_path, e.mask_path, {e.case_id, e.patient_id, e.image_label});
                    }
                  });
  return cases;
}

CorpusSummary generate_corpus(const fs::path& out_dir, const CorpusOptions& options) {
  require(options.cases >= 1, ErrorCode::kInvalidArgument, "case count must be at least 1");
  require(options.positive_frac >= 0.0 && options.positive_frac <= 1.0, ErrorCode::kInvalidArgument,
          "positive fraction must be in [0,1]");
  ensure_directory(out_dir / "images");
  ensure_directory(out_dir / "masks");

  const std::size_t n = options.cases;
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.positive_frac));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(options.seed, 0xC0));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<bool> positive(n, false);
  for (std::size_t i = 0; i < n_pos; ++i) positive[order[i]] = true;

  std::vector<CaseIndexEntry> entries(n);
  parallel_chunks(n, default_thread_count(), [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::string case_id = numbered("case", i);
      const Case c = generate_synthetic_case(derive_seed(options.seed, 0x1000 + i), positive[i], case_id,
                                             numbered("patient", i / 2));
      CaseIndexEntry& e = entries[i];
      e.case_id = c.case_id;
      e.patient_id = c.patient_id;
      e.image_label = c.image_label;
      e.image_path = fs::path("images") / (case_id + ".pgm");
      e.mask_path = fs::path("masks") / (case_id + ".pgm");
      write_pgm(out_dir / e.image_path, c.image);
      write_pgm(out_dir / e.mask_path, c.lesion_mask);
    }
  });

  CorpusSummary summary;
  summary.cases = n;
  summary.positives = n_pos;
  summary.patients = (n + 1) / 2;
  summary.index_path = out_dir / "index.jsonl";
  write_file_text(summary.index_path, format_case_index(entries));
  json meta;
  meta["generator"] = "synthetic-v1";
  meta["seed"] = options.seed;
  meta["cases"] = n;
  meta["positive_frac"] = options.positive_frac;
  meta["positives"] = n_pos;
  meta["patients"] = summary.patients;
  meta["image_size"] = kSyntheticSize;
  write_file_text(out_dir / "corpus.json", meta.dump(2) + "\n");
  return summary;
}

}  // namespace nd
