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

#include "tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common/error.hpp"
#include "tensor/gemm.hpp"

namespace nd {

namespace {

std::string dim_mismatch(const char* op, const char* what, std::size_t got, std::size_t want) {
  return std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " + std::to_string(want);
}

void require_rank(const char* op, const char* name, const Tensor& t, std::size_t rank) {
  require(t.rank() == rank, ErrorCode::kShape,
          std::string(op) + ": " + name + " must have rank " + std::to_string(rank) + ", got shape " +
              shape_string(t.shape()));
}

void require_dim(const char* op, const char* what, std::size_t got, std::size_t want) {
  require(got == want, ErrorCode::kShape, dim_mismatch(op, what, got, want));
}

void check_conv_operands(const char* op, const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
  spec.validate();
  require_rank(op, "input", input, 3);
  require_rank(op, "weights", weights, 4);
  require_dim(op, "input channels (dim 0 of input)", input.dim(0), spec.in_channels);
  require_dim(op, "weights dim 0 (out_channels)", weights.dim(0), spec.out_channels);
  require_dim(op, "weights dim 1 (in_channels)", weights.dim(1), spec.in_channels);
  require_dim(op, "weights dim 2 (kernel_h)", weights.dim(2), spec.kernel_h);
  require_dim(op, "weights dim 3 (kernel_w)", weights.dim(3), spec.kernel_w);
}

// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
struct ColumnRange {
  std::size_t lo = 0, hi = 0;
};

ColumnRange valid_columns(std::size_t ow, std::size_t w, std::size_t stride, std::size_t pad, std::size_t kx) {
  // ix = ox*stride + kx - pad >= 0  <=>  ox >= ceil((pad - kx) / stride)
  std::size_t lo = 0;
  if (pad > kx) lo = (pad - kx + stride - 1) / stride;
  // ix < w  <=>  ox*stride < w + pad - kx
  std::size_t hi = 0;
  if (w + pad > kx) hi = std::min(ow, (w + pad - kx + stride - 1) / stride);
  return {std::min(lo, hi), hi};
}

// Per-thread scratch reused across calls; large fresh allocations page-fault
// on every call otherwise.
std::vector<float>& scratch(int slot, std::size_t size) {
  thread_local std::vector<float> buffers[3];
  auto& buf = buffers[slot];
  buf.resize(size);
  return buf;
}

// col[(c*kh + ky)*kw + kx][oy*ow + ox]
const std::vector<float>& im2col(const Tensor& input, const ConvSpec& spec, std::size_t oh, std::size_t ow) {
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t rows = channels * spec.kernel_h * spec.kernel_w;
  std::vector<float>& col = scratch(0, rows * oh * ow);
  const std::size_t stride = spec.stride, pad = spec.padding;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < spec.kernel_w; ++kx, ++row) {
        const ColumnRange cols = valid_columns(ow, w, stride, pad, kx);
        float* dst = col.data() + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::size_t iy_shifted = oy * stride + ky;
          float* out_row = dst + oy * ow;
          if (iy_shifted < pad || iy_shifted - pad >= h) {
            std::fill_n(out_row, ow, 0.0f);
            continue;
          }
          std::fill(out_row, out_row + cols.lo, 0.0f);
          std::fill(out_row + cols.hi, out_row + ow, 0.0f);
          const float* src = input.data() + (c * h + (iy_shifted - pad)) * w;
          if (stride == 1) {
            const std::size_t offset = kx - pad;  // wraps for kx < pad; cols.lo compensates
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] = src[ox + offset];
          } else {
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] = src[ox * stride + kx - pad];
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const std::vector<float>& col, const ConvSpec& spec, std::size_t oh, std::size_t ow, Tensor& grad) {
  const std::size_t channels = grad.dim(0), h = grad.dim(1), w = grad.dim(2);
  const std::size_t stride = spec.stride, pad = spec.padding;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < spec.kernel_w; ++kx, ++row) {
        const ColumnRange cols = valid_columns(ow, w, stride, pad, kx);
        const float* src = col.data() + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::size_t iy_shifted = oy * stride + ky;
          if (iy_shifted < pad || iy_shifted - pad >= h) continue;
          float* dst = grad.data() + (c * h + (iy_shifted - pad)) * w;
          const float* in_row = src + oy * ow;
          if (stride == 1) {
            const std::size_t offset = kx - pad;
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) dst[ox + offset] += in_row[ox];
          } else {
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) dst[ox * stride + kx - pad] += in_row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void ConvSpec::validate() const {
  require(kernel_h >= 1 && kernel_w >= 1, ErrorCode::kInvalidArgument, "conv kernel dimensions must be >= 1");
  require(stride >= 1, ErrorCode::kInvalidArgument, "conv stride must be >= 1");
  require(in_channels >= 1 && out_channels >= 1, ErrorCode::kInvalidArgument, "conv channel counts must be >= 1");
}

std::size_t ConvSpec::out_h(std::size_t h) const {
  require(h + 2 * padding >= kernel_h, ErrorCode::kShape,
          "conv: input height " + std::to_string(h) + " with padding " + std::to_string(padding) +
              " is smaller than kernel_h " + std::to_string(kernel_h));
  return (h + 2 * padding - kernel_h) / stride + 1;
}

std::size_t ConvSpec::out_w(std::size_t w) const {
  require(w + 2 * padding >= kernel_w, ErrorCode::kShape,
          "conv: input width " + std::to_string(w) + " with padding " + std::to_string(padding) +
              " is smaller than kernel_w " + std::to_string(kernel_w));
  return (w + 2 * padding - kernel_w) / stride + 1;
}

namespace ops {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec) {
  check_conv_operands("conv2d_forward", input, weights, spec);
  require_rank("conv2d_forward", "bias", bias, 1);
  require_dim("conv2d_forward", "bias length", bias.dim(0), spec.out_channels);
  const std::size_t oh = spec.out_h(input.dim(1));
  const std::size_t ow = spec.out_w(input.dim(2));
  const std::size_t k = spec.in_channels * spec.kernel_h * spec.kernel_w;
  const std::size_t positions = oh * ow;

  const std::vector<float>& col = im2col(input, spec, oh, ow);
  Tensor out({spec.out_channels, oh, ow});
  detail::gemm_nn(spec.out_channels, positions, k, weights.data(), col.data(), out.data());
  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    float* row = out.data() + co * positions;
    const float b = bias[co];
    for (std::size_t p = 0; p < positions; ++p) row[p] += b;
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          bool need_input_grad) {
  check_conv_operands("conv2d_backward", input, weights, spec);
  const std::size_t oh = spec.out_h(input.dim(1));
  const std::size_t ow = spec.out_w(input.dim(2));
  require_rank("conv2d_backward", "grad_out", grad_out, 3);
  require_dim("conv2d_backward", "grad_out dim 0 (out_channels)", grad_out.dim(0), spec.out_channels);
  require_dim("conv2d_backward", "grad_out dim 1 (output height)", grad_out.dim(1), oh);
  require_dim("conv2d_backward", "grad_out dim 2 (output width)", grad_out.dim(2), ow);

  const std::size_t k = spec.in_channels * spec.kernel_h * spec.kernel_w;
  const std::size_t positions = oh * ow;
  const std::vector<float>& col = im2col(input, spec, oh, ow);

  ConvGrads grads;
  grads.bias = Tensor({spec.out_channels});
  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    const float* g = grad_out.data() + co * positions;
    float sum = 0.0f;
    for (std::size_t p = 0; p < positions; ++p) sum += g[p];
    grads.bias[co] = sum;
  }

  grads.weights = Tensor(weights.shape());
  detail::gemm_nt(spec.out_channels, k, positions, grad_out.data(), col.data(), grads.weights.data());

  if (need_input_grad) {
    std::vector<float>& weights_t = scratch(1, k * spec.out_channels);
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      for (std::size_t r = 0; r < k; ++r) weights_t[r * spec.out_channels + co] = weights[co * k + r];
    }
    std::vector<float>& grad_col = scratch(2, k * positions);
    detail::gemm_nn(k, positions, spec.out_channels, weights_t.data(), grad_out.data(), grad_col.data());
    grads.input = Tensor(input.shape());
    col2im_add(grad_col, spec, oh, ow, grads.input);
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  require(grad_out.shape() == input.shape(), ErrorCode::kShape,
          "relu_backward: grad_out shape " + shape_string(grad_out.shape()) + " differs from input shape " +
              shape_string(input.shape()));
  Tensor grad(input.shape());
  const float* __restrict x = input.data();
  const float* __restrict g = grad_out.data();
  float* __restrict out = grad.data();
  const std::size_t n = input.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
  return grad;
}

MaxPoolResult maxpool2(const Tensor& input) {
  require_rank("maxpool2", "input", input, 3);
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(h % 2 == 0, ErrorCode::kShape, "maxpool2: input height " + std::to_string(h) + " is odd");
  require(w % 2 == 0, ErrorCode::kShape, "maxpool2: input width " + std::to_string(w) + " is odd");
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult result{Tensor({channels, oh, ow}), ArgmaxMap{input.shape(), {}}};
  result.argmax.indices.resize(channels * oh * ow);
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (c * h + 2 * oy) * w + 2 * ox;
        float best_value = input[best];
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : candidates) {
          if (input[idx] > best_value) {
            best_value = input[idx];
            best = idx;
          }
        }
        result.output[o] = best_value;
        result.argmax.indices[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return result;
}

Tensor maxpool2_backward(const Tensor& grad_out, const ArgmaxMap& argmax) {
  require(grad_out.size() == argmax.indices.size(), ErrorCode::kShape,
          "maxpool2_backward: grad_out has " + std::to_string(grad_out.size()) + " elements, argmax map has " +
              std::to_string(argmax.indices.size()));
  Tensor grad(argmax.input_shape);
  for (std::size_t o = 0; o < argmax.indices.size(); ++o) grad[argmax.indices[o]] += grad_out[o];
  return grad;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank("fc_forward", "weights", weights, 2);
  require_rank("fc_forward", "bias", bias, 1);
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  require_dim("fc_forward", "input length", input.size(), n);
  require_dim("fc_forward", "bias length", bias.dim(0), m);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = weights.data() + i * n;
    float acc = 0.0f;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * input[j];
    out[i] = acc + bias[i];
  }
  return out;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights) {
  require_rank("fc_backward", "weights", weights, 2);
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  require_dim("fc_backward", "input length", input.size(), n);
  require_dim("fc_backward", "grad_out length", grad_out.size(), m);
  FcGrads grads{Tensor(input.shape()), Tensor({m, n}), Tensor({m})};
  for (std::size_t i = 0; i < m; ++i) {
    const float g = grad_out[i];
    grads.bias[i] = g;
    for (std::size_t j = 0; j < n; ++j) grads.weights[i * n + j] = g * input[j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < m; ++i) acc += weights[i * n + j] * grad_out[i];
    grads.input[j] = acc;
  }
  return grads;
}

Tensor global_avgpool(const Tensor& input) {
  require_rank("global_avgpool", "input", input, 3);
  const std::size_t channels = input.dim(0), area = input.dim(1) * input.dim(2);
  Tensor out({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = input.data() + c * area;
    double sum = 0.0;
    for (std::size_t i = 0; i < area; ++i) sum += plane[i];
    out[c] = static_cast<float>(sum / static_cast<double>(area));
  }
  return out;
}

Tensor global_avgpool_backward(const Tensor& grad_out, const Shape& input_shape) {
  require(input_shape.size() == 3, ErrorCode::kShape, "global_avgpool_backward: input shape must be [C,H,W]");
  require_dim("global_avgpool_backward", "grad_out length", grad_out.size(), input_shape[0]);
  const std::size_t area = input_shape[1] * input_shape[2];
  Tensor grad(input_shape);
  for (std::size_t c = 0; c < input_shape[0]; ++c) {
    const float share = grad_out[c] / static_cast<float>(area);
    std::fill_n(grad.data() + c * area, area, share);
  }
  return grad;
}

SoftmaxXent softmax_xent(const Tensor& logits, int label) {
  require(logits.size() == 2, ErrorCode::kShape,
          "softmax_xent: expected 2 logits, got " + std::to_string(logits.size()));
  require(label == 0 || label == 1, ErrorCode::kInvalidArgument,
          "softmax_xent: label must be 0 or 1, got " + std::to_string(label));
  const double l0 = logits[0], l1 = logits[1];
  const double top = std::max(l0, l1);
  const double e0 = std::exp(l0 - top), e1 = std::exp(l1 - top);
  const double total = e0 + e1;
  const double lse = top + std::log(total);
  SoftmaxXent result;
  result.loss = static_cast<float>(lse - (label == 1 ? l1 : l0));
  result.grad_logits = Tensor({2});
  result.grad_logits[0] = static_cast<float>(e0 / total - (label == 0 ? 1.0 : 0.0));
  result.grad_logits[1] = static_cast<float>(e1 / total - (label == 1 ? 1.0 : 0.0));
  return result;
}

float positive_probability(const Tensor& logits) {
  require(logits.size() == 2, ErrorCode::kShape, "positive_probability: expected 2 logits");
  const double diff = static_cast<double>(logits[0]) - static_cast<double>(logits[1]);
  return static_cast<float>(1.0 / (1.0 + std::exp(diff)));
}

Tensor bilinear_upsample(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  require_rank("bilinear_upsample", "map", map, 2);
  require(out_h >= 1 && out_w >= 1, ErrorCode::kInvalidArgument, "bilinear_upsample: output dims must be >= 1");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out({out_h, out_w});

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t outn) {
    std::vector<Tap> result(outn);
    for (std::size_t i = 0; i < outn; ++i) {
      const double src = outn == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) /
                                               static_cast<double>(outn - 1);
      auto lo = static_cast<std::size_t>(std::floor(src));
      lo = std::min(lo, in - 1);
      result[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return result;
  };
  const auto ys = taps(h, out_h);
  const auto xs = taps(w, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      const double top = (1.0 - tx.frac) * map.at(ty.lo, tx.lo) + tx.frac * map.at(ty.lo, tx.hi);
      const double bottom = (1.0 - tx.frac) * map.at(ty.hi, tx.lo) + tx.frac * map.at(ty.hi, tx.hi);
      out.at(y, x) = static_cast<float>((1.0 - ty.frac) * top + ty.frac * bottom);
    }
  }
  return out;
}

namespace {

void check_bn_params(const char* op, std::size_t channels, const Tensor& var, const Tensor& gamma, float eps) {
  require_dim(op, "var length", var.size(), channels);
  require_dim(op, "gamma length", gamma.size(), channels);
  require(eps >= 0.0f, ErrorCode::kInvalidArgument, std::string(op) + ": eps must be >= 0");
  for (std::size_t c = 0; c < channels; ++c) {
    require(var[c] >= 0.0f, ErrorCode::kInvalidArgument,
            std::string(op) + ": negative variance at channel " + std::to_string(c));
    require(var[c] + eps > 0.0f, ErrorCode::kInvalidArgument,
            std::string(op) + ": var + eps is zero at channel " + std::to_string(c));
  }
}

}  // namespace

Tensor batchnorm_inference(const Tensor& input, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                           const Tensor& beta, float eps) {
  require_rank("batchnorm_inference", "input", input, 3);
  const std::size_t channels = input.dim(0), area = input.dim(1) * input.dim(2);
  require_dim("batchnorm_inference", "mean length", mean.size(), channels);
  require_dim("batchnorm_inference", "beta length", beta.size(), channels);
  check_bn_params("batchnorm_inference", channels, var, gamma, eps);
  Tensor out(input.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const float inv_std = 1.0f / std::sqrt(var[c] + eps);
    const float* src = input.data() + c * area;
    float* dst = out.data() + c * area;
    for (std::size_t i = 0; i < area; ++i) dst[i] = (src[i] - mean[c]) * inv_std * gamma[c] + beta[c];
  }
  return out;
}

Tensor batchnorm_inference_backward(const Tensor& grad_out, const Tensor& var, const Tensor& gamma, float eps) {
  require_rank("batchnorm_inference_backward", "grad_out", grad_out, 3);
  const std::size_t channels = grad_out.dim(0), area = grad_out.dim(1) * grad_out.dim(2);
  check_bn_params("batchnorm_inference_backward", channels, var, gamma, eps);
  Tensor grad(grad_out.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const float scale = gamma[c] / std::sqrt(var[c] + eps);
    for (std::size_t i = 0; i < area; ++i) grad[c * area + i] = grad_out[c * area + i] * scale;
  }
  return grad;
}

}  // namespace ops
}  // namespace nd
