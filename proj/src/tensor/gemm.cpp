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

#include "tensor/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace nd::detail {

namespace {

// Eight-lane float vector; lane arithmetic is elementwise IEEE, so vector and
// scalar paths produce identical per-element results.
typedef float vec8 __attribute__((vector_size(32)));

inline vec8 load8(const float* p) {
  vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(float* p, vec8 v) { std::memcpy(p, &v, sizeof v); }

constexpr std::size_t kRowBlock = 6;
constexpr std::size_t kColBlock = 16;

void block_full(std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  vec8 acc[kRowBlock][2] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const vec8 b0 = load8(b + p * n);
    const vec8 b1 = load8(b + p * n + 8);
    for (std::size_t i = 0; i < kRowBlock; ++i) {
      const float av = a[i * k + p];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  for (std::size_t i = 0; i < kRowBlock; ++i) {
    store8(c + i * n, acc[i][0]);
    store8(c + i * n + 8, acc[i][1]);
  }
}

void block_rows(std::size_t rows, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  vec8 acc[kRowBlock][2] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const vec8 b0 = load8(b + p * n);
    const vec8 b1 = load8(b + p * n + 8);
    for (std::size_t i = 0; i < rows; ++i) {
      const float av = a[i * k + p];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    store8(c + i * n, acc[i][0]);
    store8(c + i * n + 8, acc[i][1]);
  }
}

void block_edge(std::size_t rows, std::size_t cols, std::size_t n, std::size_t k, const float* a, const float* b,
                float* c) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

inline float reduce_lanes(vec8 lanes, float tail) {
  float l[8];
  std::memcpy(l, &lanes, sizeof l);
  for (std::size_t width = 4; width > 0; width /= 2) {
    for (std::size_t j = 0; j < width; ++j) l[j] += l[j + width];
  }
  return l[0] + tail;
}

void dot4(const float* x, const float* y0, const float* y1, const float* y2, const float* y3, std::size_t len,
          float* out) {
  vec8 l0 = {}, l1 = {}, l2 = {}, l3 = {};
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    const vec8 xv = load8(x + i);
    l0 += xv * load8(y0 + i);
    l1 += xv * load8(y1 + i);
    l2 += xv * load8(y2 + i);
    l3 += xv * load8(y3 + i);
  }
  float t0 = 0, t1 = 0, t2 = 0, t3 = 0;
  for (; i < len; ++i) {
    t0 += x[i] * y0[i];
    t1 += x[i] * y1[i];
    t2 += x[i] * y2[i];
    t3 += x[i] * y3[i];
  }
  out[0] = reduce_lanes(l0, t0);
  out[1] = reduce_lanes(l1, t1);
  out[2] = reduce_lanes(l2, t2);
  out[3] = reduce_lanes(l3, t3);
}

float dot1(const float* x, const float* y, std::size_t len) {
  vec8 lanes = {};
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) lanes += load8(x + i) * load8(y + i);
  float tail = 0;
  for (; i < len; ++i) tail += x[i] * y[i];
  return reduce_lanes(lanes, tail);
}

}  // namespace

// Column stripes outermost so each k x 16 stripe of b stays in cache while
// every row block of a passes over it.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  const std::size_t full_cols = n - n % kColBlock;
  for (std::size_t j0 = 0; j0 < full_cols; j0 += kColBlock) {
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, m - i0);
      if (rows == kRowBlock) {
        block_full(n, k, a + i0 * k, b + j0, c + i0 * n + j0);
      } else {
        block_rows(rows, n, k, a + i0 * k, b + j0, c + i0 * n + j0);
      }
    }
  }
  if (full_cols < n) {
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, m - i0);
      block_edge(rows, n - full_cols, n, k, a + i0 * k, b + full_cols, c + i0 * n + full_cols);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const float* b0 = b + j * k;
    for (std::size_t i = 0; i < m; ++i) dot4(a + i * k, b0, b0 + k, b0 + 2 * k, b0 + 3 * k, k, c + i * n + j);
  }
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) c[i * n + j] = dot1(a + i * k, b + j * k, k);
  }
}

}  // namespace nd::detail
