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

namespace nd::detail {

// C[m x n] = A[m x k] * B[k x n], all row-major and densely packed.
// Each C element is accumulated from 0 over k in ascending order.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

// C[m x n] = A[m x k] * B[n x k]^T. Each element is a dot product of two
// contiguous rows reduced with a fixed lane layout, so results do not
// depend on call site or thread.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

}  // namespace nd::detail
