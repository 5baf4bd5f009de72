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
#include <vector>

#include "dataset/case.hpp"

namespace nd {

inline constexpr std::uint64_t kSplitStream = 0x5350;

// Sorts the distinct patient ids, shuffles them with the seed, then cuts
// floor(0.8 n) train and floor(0.1 n) val patients; the rest are test.
SplitAssignment split_patients(std::vector<std::string> patient_ids, std::uint64_t seed);
SplitAssignment split_dataset(const std::vector<Case>& cases, std::uint64_t seed);

}  // namespace nd
