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

#include "dataset/split.hpp"

#include <algorithm>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace nd {

SplitAssignment split_patients(std::vector<std::string> patient_ids, std::uint64_t seed) {
  std::sort(patient_ids.begin(), patient_ids.end());
  patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()), patient_ids.end());
  const std::size_t n = patient_ids.size();
  require(n >= 3, ErrorCode::kInvalidArgument,
          "split needs at least 3 distinct patients, got " + std::to_string(n));
  Rng rng(derive_seed(seed, kSplitStream));
  rng.shuffle(std::span<std::string>(patient_ids));
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  SplitAssignment out;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    out.by_patient.emplace(patient_ids[i], s);
  }
  return out;
}

SplitAssignment split_dataset(const std::vector<Case>& cases, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(cases.size());
  for (const auto& c : cases) ids.push_back(c.patient_id);
  return split_patients(std::move(ids), seed);
}

}  // namespace nd
