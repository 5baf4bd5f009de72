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
#include <span>
#include <string>
#include <vector>

namespace nd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float32 array. Every dimension is >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);

  // Validates length and rejects NaN/Inf. Use for tensors that enter the
  // system from outside (files, callers).
  static Tensor from_values(Shape shape, std::vector<float> values);

  // Same checks on length only; kernel outputs go through here.
  static Tensor from_unchecked(Shape shape, std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] and [H,W] element access.
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  float& at(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
  float at(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }

  bool all_finite() const noexcept;

  // Bitwise equality of shape and data.
  bool identical(const Tensor& other) const noexcept;

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace nd
