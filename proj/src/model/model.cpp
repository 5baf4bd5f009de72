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

#include "model/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "common/error.hpp"

namespace nd {

const char* layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2: return "maxpool2";
    case LayerKind::kGlobalAvgPool: return "global_avgpool";
    case LayerKind::kFc: return "fc";
    case LayerKind::kBatchNorm: return "batchnorm";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto kind : {LayerKind::kConv, LayerKind::kRelu, LayerKind::kMaxPool2, LayerKind::kGlobalAvgPool,
                    LayerKind::kFc, LayerKind::kBatchNorm}) {
    if (name == layer_kind_name(kind)) return kind;
  }
  fail(ErrorCode::kParse, "unknown layer kind '" + std::string(name) + "'");
}

std::vector<std::string> required_roles(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kFc: return {"weight", "bias"};
    case LayerKind::kBatchNorm: return {"mean", "var", "gamma", "beta"};
    default: return {};
  }
}

const Tensor& LayerDesc::tensor(std::string_view role) const {
  for (const auto& w : weights) {
    if (w.role == role) return w.value;
  }
  fail(ErrorCode::kNotFound, "layer '" + id + "' has no tensor with role '" + std::string(role) + "'");
}

Tensor& LayerDesc::tensor(std::string_view role) {
  return const_cast<Tensor&>(std::as_const(*this).tensor(role));
}

Model::Model(std::string name, Shape input_shape, std::vector<LayerDesc> layers,
             std::map<std::string, std::string> metadata)
    : name_(std::move(name)),
      input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      metadata_(std::move(metadata)) {
  validate();
}

namespace {

void expect_shape(const LayerDesc& layer, std::string_view role, const Shape& want) {
  const Tensor& t = layer.tensor(role);
  require(t.shape() == want, ErrorCode::kShape,
          "layer '" + layer.id + "': " + std::string(role) + " has shape " + shape_string(t.shape()) +
              ", expected " + shape_string(want));
}

}  // namespace

void Model::validate() {
  require(!layers_.empty(), ErrorCode::kInvalidArgument, "model has no layers (no output layer)");
  require(input_shape_.size() == 3, ErrorCode::kShape,
          "model input_shape must be [C,H,W], got " + shape_string(input_shape_));
  for (auto d : input_shape_) require(d >= 1, ErrorCode::kShape, "model input_shape has a zero dimension");

  std::set<std::string> ids;
  output_shapes_.clear();
  Shape current = input_shape_;
  for (const auto& layer : layers_) {
    require(!layer.id.empty(), ErrorCode::kInvalidArgument, "layer id must not be empty");
    require(ids.insert(layer.id).second, ErrorCode::kInvalidArgument, "duplicate layer id '" + layer.id + "'");

    const auto roles = required_roles(layer.kind);
    require(layer.weights.size() == roles.size(), ErrorCode::kShape,
            "layer '" + layer.id + "' (" + layer_kind_name(layer.kind) + ") needs " + std::to_string(roles.size()) +
                " tensors, has " + std::to_string(layer.weights.size()));
    for (std::size_t i = 0; i < roles.size(); ++i) {
      require(layer.weights[i].role == roles[i], ErrorCode::kShape,
              "layer '" + layer.id + "': tensor " + std::to_string(i) + " must have role '" + roles[i] + "'");
    }

    const std::string where = "layer '" + layer.id + "' (" + layer_kind_name(layer.kind) + "): ";
    switch (layer.kind) {
      case LayerKind::kConv: {
        layer.conv.validate();
        require(current.size() == 3, ErrorCode::kShape, where + "needs a [C,H,W] input, got " + shape_string(current));
        require(current[0] == layer.conv.in_channels, ErrorCode::kShape,
                where + "input channels " + std::to_string(current[0]) + " != in_channels " +
                    std::to_string(layer.conv.in_channels));
        expect_shape(layer, "weight",
                     {layer.conv.out_channels, layer.conv.in_channels, layer.conv.kernel_h, layer.conv.kernel_w});
        expect_shape(layer, "bias", {layer.conv.out_channels});
        current = {layer.conv.out_channels, layer.conv.out_h(current[1]), layer.conv.out_w(current[2])};
        break;
      }
      case LayerKind::kRelu: break;
      case LayerKind::kMaxPool2:
        require(current.size() == 3, ErrorCode::kShape, where + "needs a [C,H,W] input, got " + shape_string(current));
        require(current[1] % 2 == 0 && current[2] % 2 == 0, ErrorCode::kShape,
                where + "input spatial dims must be even, got " + shape_string(current));
        current = {current[0], current[1] / 2, current[2] / 2};
        break;
      case LayerKind::kGlobalAvgPool:
        require(current.size() == 3, ErrorCode::kShape, where + "needs a [C,H,W] input, got " + shape_string(current));
        current = {current[0]};
        break;
      case LayerKind::kFc:
        require(layer.fc_in >= 1 && layer.fc_out >= 1, ErrorCode::kInvalidArgument, where + "features must be >= 1");
        require(shape_numel(current) == layer.fc_in, ErrorCode::kShape,
                where + "input has " + std::to_string(shape_numel(current)) + " elements, in_features is " +
                    std::to_string(layer.fc_in));
        expect_shape(layer, "weight", {layer.fc_out, layer.fc_in});
        expect_shape(layer, "bias", {layer.fc_out});
        current = {layer.fc_out};
        break;
      case LayerKind::kBatchNorm:
        require(current.size() == 3, ErrorCode::kShape, where + "needs a [C,H,W] input, got " + shape_string(current));
        for (const char* role : {"mean", "var", "gamma", "beta"}) expect_shape(layer, role, {current[0]});
        for (float v : layer.tensor("var").values()) {
          require(v >= 0.0f, ErrorCode::kInvalidArgument, where + "negative variance");
        }
        break;
    }
    output_shapes_.push_back(current);
  }
  require(current == Shape{kClassCount}, ErrorCode::kShape,
          "model output must be [2] (positive/negative), got " + shape_string(current));
  input_normalization(*this);
}

std::size_t Model::layer_index(std::string_view id) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id == id) return i;
  }
  fail(ErrorCode::kNotFound, "no layer with id '" + std::string(id) + "'");
}

const LayerDesc* Model::find_layer(std::string_view id) const noexcept {
  for (const auto& layer : layers_) {
    if (layer.id == id) return &layer;
  }
  return nullptr;
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const auto& w : layer.weights) n += w.value.size();
  }
  return n;
}

std::vector<Tensor*> Model::trainable_parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kFc) {
      out.push_back(&layer.tensor("weight"));
      out.push_back(&layer.tensor("bias"));
    }
  }
  return out;
}

std::vector<const Tensor*> Model::trainable_parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kFc) {
      out.push_back(&layer.tensor("weight"));
      out.push_back(&layer.tensor("bias"));
    }
  }
  return out;
}

std::vector<std::string> Model::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& layer : layers_) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kFc) {
      out.push_back(layer.weights[0].name);
      out.push_back(layer.weights[1].name);
    }
  }
  return out;
}

bool Model::identical(const Model& other) const {
  if (name_ != other.name_ || input_shape_ != other.input_shape_ || metadata_ != other.metadata_ ||
      layers_.size() != other.layers_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.id != b.id || a.kind != b.kind || a.weights.size() != b.weights.size()) return false;
    if (a.kind == LayerKind::kConv && !(a.conv == b.conv)) return false;
    if (a.kind == LayerKind::kFc && (a.fc_in != b.fc_in || a.fc_out != b.fc_out)) return false;
    if (a.kind == LayerKind::kBatchNorm && a.bn_eps != b.bn_eps) return false;
    for (std::size_t j = 0; j < a.weights.size(); ++j) {
      if (a.weights[j].role != b.weights[j].role || a.weights[j].name != b.weights[j].name ||
          !a.weights[j].value.identical(b.weights[j].value)) {
        return false;
      }
    }
  }
  return true;
}

namespace {

void check_input(const Model& model, const Tensor& input) {
  require(input.shape() == model.input_shape(), ErrorCode::kShape,
          "forward: input shape " + shape_string(input.shape()) + " differs from model input_shape " +
              shape_string(model.input_shape()));
}

Tensor apply_layer(const LayerDesc& layer, const Tensor& x, ArgmaxMap* argmax) {
  switch (layer.kind) {
    case LayerKind::kConv:
      return ops::conv2d_forward(x, layer.tensor("weight"), layer.tensor("bias"), layer.conv);
    case LayerKind::kRelu: return ops::relu(x);
    case LayerKind::kMaxPool2: {
      auto pooled = ops::maxpool2(x);
      if (argmax) *argmax = std::move(pooled.argmax);
      return std::move(pooled.output);
    }
    case LayerKind::kGlobalAvgPool: return ops::global_avgpool(x);
    case LayerKind::kFc: return ops::fc_forward(x.reshaped({x.size()}), layer.tensor("weight"), layer.tensor("bias"));
    case LayerKind::kBatchNorm:
      return ops::batchnorm_inference(x, layer.tensor("mean"), layer.tensor("var"), layer.tensor("gamma"),
                                      layer.tensor("beta"), layer.bn_eps);
  }
  fail(ErrorCode::kInternal, "unhandled layer kind");
}

}  // namespace

ForwardResult forward(const Model& model, const Tensor& input, const std::vector<std::string>& capture_ids) {
  std::vector<bool> capture(model.layers().size(), false);
  for (const auto& id : capture_ids) capture[model.layer_index(id)] = true;
  check_input(model, input);

  ForwardResult result;
  Tensor x = input;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    x = apply_layer(model.layers()[i], x, nullptr);
    if (capture[i]) result.captures.push_back({model.layers()[i].id, x});
  }
  result.logits = std::move(x);
  return result;
}

ForwardTrace forward_trace(const Model& model, const Tensor& input) {
  check_input(model, input);
  ForwardTrace trace;
  const std::size_t n = model.layers().size();
  trace.activations.reserve(n + 1);
  trace.argmax.resize(n);
  trace.activations.push_back(input);
  for (std::size_t i = 0; i < n; ++i) {
    trace.activations.push_back(apply_layer(model.layers()[i], trace.activations.back(), &trace.argmax[i]));
  }
  return trace;
}

std::vector<Tensor> backward(const Model& model, const ForwardTrace& trace, const Tensor& grad_logits) {
  const auto& layers = model.layers();
  require(trace.activations.size() == layers.size() + 1, ErrorCode::kInvalidArgument,
          "backward: trace does not belong to this model");
  require(grad_logits.shape() == trace.logits().shape(), ErrorCode::kShape,
          "backward: grad_logits shape " + shape_string(grad_logits.shape()) + " differs from logits shape " +
              shape_string(trace.logits().shape()));

  std::size_t trainable = 0;
  for (const auto& layer : layers) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kFc) trainable += 2;
  }
  std::vector<Tensor> grads(trainable);
  std::size_t slot = trainable;

  Tensor grad = grad_logits;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerDesc& layer = layers[i];
    const Tensor& x = trace.activations[i];
    const bool need_input = i > 0;
    switch (layer.kind) {
      case LayerKind::kConv: {
        auto g = ops::conv2d_backward(grad, x, layer.tensor("weight"), layer.conv, need_input);
        grads[--slot] = std::move(g.bias);
        grads[--slot] = std::move(g.weights);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::kFc: {
        auto g = ops::fc_backward(grad, x.reshaped({x.size()}), layer.tensor("weight"));
        grads[--slot] = std::move(g.bias);
        grads[--slot] = std::move(g.weights);
        grad = g.input.reshaped(x.shape());
        break;
      }
      case LayerKind::kRelu: grad = ops::relu_backward(grad, x); break;
      case LayerKind::kMaxPool2: grad = ops::maxpool2_backward(grad, trace.argmax[i]); break;
      case LayerKind::kGlobalAvgPool: grad = ops::global_avgpool_backward(grad, x.shape()); break;
      case LayerKind::kBatchNorm:
        grad = ops::batchnorm_inference_backward(grad, layer.tensor("var"), layer.tensor("gamma"), layer.bn_eps);
        break;
    }
    if (!need_input) break;
  }
  return grads;
}

InputNormalization input_normalization(const Model& model) {
  const auto it = model.metadata().find(kInputNormalizationKey);
  if (it == model.metadata().end() || it->second == "none") return InputNormalization::kNone;
  if (it->second == "per_patch_standardize") return InputNormalization::kPerPatchStandardize;
  fail(ErrorCode::kParse, "unknown input_normalization '" + it->second + "'");
}

Tensor standardize_patch(const Tensor& patch) {
  const std::size_t n = patch.size();
  require(n >= 1, ErrorCode::kShape, "standardize_patch: empty tensor");
  double mean = 0.0;
  for (float v : patch.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : patch.values()) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(n));
  const double scale = 1.0 / std::max(std_dev, 1.0 / std::sqrt(static_cast<double>(n)));
  Tensor out(patch.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>((patch[i] - mean) * scale);
  return out;
}

Tensor adapt_input(const Model& model, const Tensor& patch) {
  const Shape& want = model.input_shape();
  const bool standardize = input_normalization(model) == InputNormalization::kPerPatchStandardize;
  if (patch.shape() == want) return standardize ? standardize_patch(patch) : patch;
  require(patch.rank() == 3 && patch.dim(0) == 1 && patch.dim(1) == want[1] && patch.dim(2) == want[2],
          ErrorCode::kShape,
          "patch shape " + shape_string(patch.shape()) + " cannot feed model input " + shape_string(want));
  const Tensor src = standardize ? standardize_patch(patch) : patch;
  Tensor out(want);
  const std::size_t area = want[1] * want[2];
  for (std::size_t c = 0; c < want[0]; ++c) std::copy_n(src.data(), area, out.data() + c * area);
  return out;
}

}  // namespace nd
