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

#include "common/error.hpp"

namespace nd {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kShape: return "shape_mismatch";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kUnavailable: return "unavailable";
    case ErrorCode::kBlobTruncated: return "blob_truncated";
    case ErrorCode::kBlobTrailing: return "blob_trailing_bytes";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown";
}

}  // namespace nd
