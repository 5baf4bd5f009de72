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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dataset/patches.hpp"
#include "model/model.hpp"

namespace nd {

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = hardware concurrency; results do not depend on it

  void validate() const;
};

struct MomentumState {
  std::vector<Tensor> velocity;

  static MomentumState zeros_like(const Model& model);
};

// v <- mu*v + (g + lambda*w);  w <- w - eta*v.
// A non-finite gradient aborts with kNumeric naming the parameter.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, MomentumState& state,
              const TrainConfig& config, std::span<const std::string> names = {});

// Mann-Whitney AUC with half credit for ties.
double evaluate_auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct EvalResult {
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::vector<float> scores;  // positive-class probability per patch, corpus order
};

EvalResult evaluate(const Model& model, const PatchCorpus& patches, unsigned threads = 0);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double val_auc = 0.0;
  bool has_val_auc = false;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  std::vector<EpochMetrics> epochs;
};

// Seeded-shuffled minibatch SGD on the softmax cross-entropy. Per-sample
// gradients are summed in patch_id order, then averaged, so the result does
// not depend on the thread count.
TrainResult train(Model& model, const PatchCorpus& train_set, const TrainConfig& config,
                  const PatchCorpus* val_set = nullptr, const EpochCallback& on_epoch = {});

inline constexpr char kDissectNetName[] = "DissectNet-T";
inline constexpr char kDefaultTargetLayer[] = "conv3";

// conv(3x3,1->8)-relu-pool-conv(3x3,8->16)-relu-pool-conv(3x3,16->32)-relu-
// pool-gap-fc(32->2) on a 1x128x128 input. He-normal conv weights, fc
// weights with std sqrt(1/fan_in), zero biases. Inputs are standardized per
// patch (declared in the model metadata).
Model build_dissectnet_t(std::uint64_t seed, std::size_t input_size = kDefaultInputSize);

}  // namespace nd
