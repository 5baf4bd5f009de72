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
#include <string_view>
#include <vector>

#include "survey/lexicon.hpp"

namespace nd {

struct UnitRef {
  std::string model;
  std::string layer;
  std::size_t unit_index = 0;

  std::string key() const;  // "model/layer/index"
  bool operator==(const UnitRef&) const = default;
  auto operator<=>(const UnitRef&) const = default;
};

struct Phenomenon {
  std::string description;
  std::string lexicon_category;    // lexicon id or "none"
  std::string cancer_association;  // benign | malignant | unclear | none

  bool operator==(const Phenomenon&) const = default;
};

struct Annotation {
  std::string annotation_id;
  UnitRef unit_ref;
  std::string reader_id;
  bool recognizable = false;
  std::vector<Phenomenon> phenomena;
  std::string timestamp;  // UTC, RFC 3339

  // Equality on everything except the timestamp; used for replay detection.
  bool same_content(const Annotation& other) const;
};

bool is_uuid(std::string_view text) noexcept;
std::string generate_uuid_v4();
std::string utc_timestamp_now();

// Field-level problem found while validating a submission.
struct ValidationIssue {
  std::string field;
  std::string message;
};

// Parses a POST body. Missing annotation_id and timestamp are left empty for
// the caller to fill; unit_ref, when present, must name `unit`. Returns
// issues instead of throwing so the API can report every field at once.
struct ParsedSubmission {
  Annotation annotation;
  std::vector<ValidationIssue> issues;
};

ParsedSubmission parse_submission(std::string_view body, const UnitRef& unit, const Lexicon& lexicon);

// Checks the record invariants against the lexicon (reader present, the
// recognizable/phenomena rule, known categories and associations).
std::vector<ValidationIssue> validate_annotation(const Annotation& annotation, const Lexicon& lexicon);

// Canonical single-line JSON used both in the log and in API responses.
std::string annotation_to_json(const Annotation& annotation);
// Strict parse of a log record; throws kParse.
Annotation annotation_from_json(std::string_view text);

}  // namespace nd
