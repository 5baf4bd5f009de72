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

#include <string>
#include <vector>

#include "survey/annotation_log.hpp"
#include "survey/lexicon.hpp"

namespace nd {

inline constexpr std::size_t kSummaryCodepoints = 120;

// First n UTF-8 codepoints of text, verbatim.
std::string truncate_codepoints(const std::string& text, std::size_t n);

struct ReportRow {
  UnitRef unit;
  std::string summary;  // description truncated to 120 codepoints
  std::string reader_id;
  std::string lexicon_category;
  std::string cancer_association;
};

struct GroupReport {
  std::string group;
  std::string display_name;
  std::size_t unit_count = 0;  // distinct units with >= 1 phenomenon in the group
  std::vector<ReportRow> rows;
};

struct LexiconReport {
  std::size_t annotation_count = 0;
  std::size_t annotated_units = 0;
  std::size_t reader_count = 0;
  std::size_t unrecognizable_units = 0;  // units with a recognizable=false annotation
  std::size_t entangled_units = 0;       // units with an annotation naming >= 2 phenomena
  std::vector<GroupReport> groups;       // lexicon group order
  GroupReport uncategorized;             // phenomena with category "none" or unknown to the lexicon
};

// Pure function of the annotation set and the lexicon. Units are keyed by
// (model, layer, unit index), so logs covering several models aggregate
// per unit.
LexiconReport build_report(const AnnotationSet& annotations, const Lexicon& lexicon);

std::string report_to_json(const LexiconReport& report);
std::string report_to_table(const LexiconReport& report);

}  // namespace nd
