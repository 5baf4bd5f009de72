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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tensor/ops.hpp"
#include "tensor/tensor.hpp"

namespace nd {

enum class LayerKind { kConv, kRelu, kMaxPool2, kGlobalAvgPool, kFc, kBatchNorm };

const char* layer_kind_name(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view name);

// A tensor owned by a layer. `role` is the per-kind slot (weight, bias,
// mean, var, gamma, beta); `name` is the blob-wide reference.
struct WeightRef {
  std::string role;
  std::string name;
  Tensor value;
};

struct LayerDesc {
  std::string id;
  LayerKind kind = LayerKind::kRelu;
  ConvSpec conv;                 // kConv
  std::size_t fc_in = 0;         // kFc
  std::size_t fc_out = 0;        // kFc
  float bn_eps = 1e-5f;          // kBatchNorm
  std::vector<WeightRef> weights;

  const Tensor& tensor(std::string_view role) const;
  Tensor& tensor(std::string_view role);
};

// Roles a layer kind must carry, in serialization order.
std::vector<std::string> required_roles(LayerKind kind);

// Immutable-after-construction chain network with a two-class output.
class Model {
 public:
  static constexpr std::size_t kClassCount = 2;

  Model(std::string name, Shape input_shape, std::vector<LayerDesc> layers,
        std::map<std::string, std::string> metadata = {});

  const std::string& name() const noexcept { return name_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerDesc>& layers() const noexcept { return layers_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
  void set_metadata(const std::string& key, const std::string& value) { metadata_[key] = value; }

  // Output shape of layer i, computed during validation.
  const Shape& output_shape(std::size_t layer_index) const { return output_shapes_.at(layer_index); }
  std::size_t layer_index(std::string_view id) const;  // throws kNotFound
  const LayerDesc* find_layer(std::string_view id) const noexcept;

  std::size_t parameter_count() const noexcept;

  // Conv and fc weight/bias tensors in layer order; batchnorm statistics are
  // frozen and not included.
  std::vector<Tensor*> trainable_parameters();
  std::vector<const Tensor*> trainable_parameters() const;
  std::vector<std::string> trainable_names() const;

  // Bitwise equality of structure, tensors and metadata.
  bool identical(const Model& other) const;

 private:
  void validate();

  std::string name_;
  Shape input_shape_;
  std::vector<LayerDesc> layers_;
  std::map<std::string, std::string> metadata_;
  std::vector<Shape> output_shapes_;
};

struct ActivationCapture {
  std::string layer_id;
  Tensor tensor;
};

struct ForwardResult {
  Tensor logits;
  std::vector<ActivationCapture> captures;  // in layer order
};

// Runs the chain. Unknown capture ids are rejected before any compute.
ForwardResult forward(const Model& model, const Tensor& input, const std::vector<std::string>& capture_ids = {});

// Layer inputs and pooling switches retained for backpropagation.
struct ForwardTrace {
  std::vector<Tensor> activations;  // activations[i] is the input of layer i; back() is the logits
  std::vector<ArgmaxMap> argmax;    // indexed by layer, empty for non-pool layers
  const Tensor& logits() const { return activations.back(); }
};

ForwardTrace forward_trace(const Model& model, const Tensor& input);

// Gradients aligned with Model::trainable_parameters().
std::vector<Tensor> backward(const Model& model, const ForwardTrace& trace, const Tensor& grad_logits);

// Metadata key naming the preprocessing a model expects on its input.
inline constexpr char kInputNormalizationKey[] = "input_normalization";

enum class InputNormalization { kNone, kPerPatchStandardize };

// kParse for unknown values; absent means kNone.
InputNormalization input_normalization(const Model& model);

// Zero mean, unit variance; the deviation is floored at 1/sqrt(N) so flat
// patches map to zeros instead of dividing by zero.
Tensor standardize_patch(const Tensor& patch);

// Turns a single-channel [1,H,W] patch with values in [0,1] into the model's
// input: applies the declared normalization, then replicates the channel when
// the model expects more than one.
Tensor adapt_input(const Model& model, const Tensor& patch);

}  // namespace nd
