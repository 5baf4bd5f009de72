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
#include <string>

#include "dataset/case.hpp"

namespace nd {

inline constexpr std::size_t kSyntheticSize = 256;

// 256x256 scan with a smooth background. Positive cases carry 1-3 lesions,
// each a bright filled ellipse (mass) or a cluster of small bright dots
// (calcifications). A calcification cluster is masked as the disc that
// encloses its dots, so every lesion is one mask component. Pure function of
// (seed, positive).
Case generate_synthetic_case(std::uint64_t seed, bool positive, std::string case_id = "synthetic",
                             std::string patient_id = "synthetic");

}  // namespace nd
