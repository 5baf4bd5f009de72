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
#include <cstdint>
#include <vector>

#include "tensor/tensor.hpp"

namespace nd {

struct ConvSpec {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  void validate() const;
  // Output spatial size for an input of h x w; throws if it would be < 1.
  std::size_t out_h(std::size_t h) const;
  std::size_t out_w(std::size_t w) const;

  bool operator==(const ConvSpec&) const = default;
};

struct ConvGrads {
  Tensor input;    // empty when not requested
  Tensor weights;
  Tensor bias;
};

struct FcGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

// Flat input indices of each pooled maximum, plus the pooled input shape.
struct ArgmaxMap {
  Shape input_shape;
  std::vector<std::uint32_t> indices;
};

struct MaxPoolResult {
  Tensor output;
  ArgmaxMap argmax;
};

struct SoftmaxXent {
  float loss = 0.0f;
  Tensor grad_logits;
};

namespace ops {

// Cross-correlation. Every output element sums over (channel, ky, kx) in
// that order starting from zero, then adds the bias.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec);
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          bool need_input_grad = true);

Tensor relu(const Tensor& input);
// Gradient is zero where input <= 0, including exactly 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// 2x2 stride-2 max. Ties go to the first element in row-major scan order.
MaxPoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Tensor& grad_out, const ArgmaxMap& argmax);

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights);

Tensor global_avgpool(const Tensor& input);
Tensor global_avgpool_backward(const Tensor& grad_out, const Shape& input_shape);

SoftmaxXent softmax_xent(const Tensor& logits, int label);
// Probability of class 1 for a two-logit output.
float positive_probability(const Tensor& logits);

// Align-corners bilinear resampling of an [H,W] map.
Tensor bilinear_upsample(const Tensor& map, std::size_t out_h, std::size_t out_w);

Tensor batchnorm_inference(const Tensor& input, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                           const Tensor& beta, float eps);
// Input gradient with statistics and affine parameters held fixed.
Tensor batchnorm_inference_backward(const Tensor& grad_out, const Tensor& var, const Tensor& gamma, float eps);

}  // namespace ops
}  // namespace nd
