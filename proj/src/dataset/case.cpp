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

#include "dataset/case.hpp"

#include "common/error.hpp"

namespace nd {

const char* image_label_name(ImageLabel label) noexcept {
  switch (label) {
    case ImageLabel::kCancerous: return "cancerous";
    case ImageLabel::kNormal: return "normal";
    case ImageLabel::kBenign: return "benign";
    case ImageLabel::kBenignWithoutCallback: return "benign_without_callback";
  }
  return "unknown";
}

ImageLabel parse_image_label(std::string_view name) {
  for (auto label : {ImageLabel::kCancerous, ImageLabel::kNormal, ImageLabel::kBenign,
                     ImageLabel::kBenignWithoutCallback}) {
    if (name == image_label_name(label)) return label;
  }
  fail(ErrorCode::kParse, "unknown image_label '" + std::string(name) + "'");
}

void validate_case(const Case& c) {
  require(c.image.rank() == 3 && c.image.dim(0) == 1, ErrorCode::kShape,
          "case '" + c.case_id + "': image must be [1,H,W], got " + shape_string(c.image.shape()));
  require(c.lesion_mask.rank() == 2 && c.lesion_mask.dim(0) == c.height() && c.lesion_mask.dim(1) == c.width(),
          ErrorCode::kShape,
          "case '" + c.case_id + "': mask shape " + shape_string(c.lesion_mask.shape()) +
              " does not match image shape " + shape_string(c.image.shape()));
  if (c.image_label == ImageLabel::kNormal) {
    for (float v : c.lesion_mask.values()) {
      require(v == 0.0f, ErrorCode::kInvalidArgument,
              "case '" + c.case_id + "': labeled normal but the lesion mask is not empty");
    }
  }
}

std::string make_patch_id(std::string_view case_id, const PatchRect& rect) {
  return std::string(case_id) + ":" + std::to_string(rect.x0) + "," + std::to_string(rect.y0);
}

const char* split_name(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  for (auto s : {Split::kTrain, Split::kVal, Split::kTest}) {
    if (name == split_name(s)) return s;
  }
  fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "' (expected train, val or test)");
}

Split SplitAssignment::of(const std::string& patient_id) const {
  const auto it = by_patient.find(patient_id);
  require(it != by_patient.end(), ErrorCode::kNotFound, "patient '" + patient_id + "' has no split assignment");
  return it->second;
}

}  // namespace nd
