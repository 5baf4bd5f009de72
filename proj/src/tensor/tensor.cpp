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

#include "tensor/tensor.hpp"

#include <cmath>
#include <cstring>

#include "common/error.hpp"

namespace nd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

static void check_dims(const Shape& shape) {
  require(!shape.empty(), ErrorCode::kShape, "tensor shape must have at least one dimension");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    require(shape[i] >= 1, ErrorCode::kShape,
            "tensor dimension " + std::to_string(i) + " is zero in shape " + shape_string(shape));
  }
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor Tensor::from_unchecked(Shape shape, std::vector<float> values) {
  check_dims(shape);
  require(shape_numel(shape) == values.size(), ErrorCode::kShape,
          "tensor of shape " + shape_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
              " values, got " + std::to_string(values.size()));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values) {
  Tensor t = from_unchecked(std::move(shape), std::move(values));
  for (std::size_t i = 0; i < t.data_.size(); ++i) {
    require(std::isfinite(t.data_[i]), ErrorCode::kNumeric,
            "non-finite value at flat index " + std::to_string(i));
  }
  return t;
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::identical(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

Tensor Tensor::reshaped(Shape shape) const {
  return from_unchecked(std::move(shape), data_);
}

}  // namespace nd
