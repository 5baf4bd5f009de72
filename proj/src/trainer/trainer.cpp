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

#include "trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace nd {

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
          "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kInvalidArgument, "momentum must be in [0,1)");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), ErrorCode::kInvalidArgument,
          "weight_decay must be >= 0");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be >= 1");
}

MomentumState MomentumState::zeros_like(const Model& model) {
  MomentumState state;
  for (const Tensor* p : model.trainable_parameters()) state.velocity.emplace_back(p->shape());
  return state;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, MomentumState& state,
              const TrainConfig& config, std::span<const std::string> names) {
  require(grads.size() == params.size() && state.velocity.size() == params.size(), ErrorCode::kShape,
          "sgd_step: parameter, gradient and velocity counts differ");
  auto name_of = [&](std::size_t i) { return i < names.size() ? names[i] : "parameter #" + std::to_string(i); };
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].shape() == params[i]->shape() && state.velocity[i].shape() == params[i]->shape(),
            ErrorCode::kShape, "sgd_step: shape mismatch for " + name_of(i));
    require(grads[i].all_finite(), ErrorCode::kNumeric, "non-finite gradient in " + name_of(i));
  }
  const auto mu = static_cast<float>(config.momentum);
  const auto lambda = static_cast<float>(config.weight_decay);
  const auto eta = static_cast<float>(config.learning_rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* w = params[i]->data();
    float* v = state.velocity[i].data();
    const float* g = grads[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      v[j] = mu * v[j] + (g[j] + lambda * w[j]);
      w[j] = w[j] - eta * v[j];
    }
    require(params[i]->all_finite(), ErrorCode::kNumeric, "parameter " + name_of(i) + " became non-finite");
  }
}

double evaluate_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCode::kInvalidArgument, "AUC: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double credit = 0.0;
  std::size_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      require(std::isfinite(scores[order[j]]), ErrorCode::kNumeric, "AUC: non-finite score");
      (labels[order[j]] ? pos : neg)++;
    }
    credit += static_cast<double>(pos) * static_cast<double>(neg_below) +
              0.5 * static_cast<double>(pos) * static_cast<double>(neg);
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  require(n_pos >= 1 && n_neg >= 1, ErrorCode::kInvalidArgument,
          "AUC needs at least one positive and one negative (got " + std::to_string(n_pos) + " positive, " +
              std::to_string(n_neg) + " negative)");
  return credit / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalResult evaluate(const Model& model, const PatchCorpus& patches, unsigned threads) {
  EvalResult out;
  out.scores.resize(patches.size());
  std::vector<std::uint8_t> labels(patches.size());
  parallel_chunks(patches.size(), threads == 0 ? default_thread_count() : threads,
                  [&](unsigned, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const Tensor logits = forward(model, adapt_input(model, patches.pixels(i))).logits;
                      out.scores[i] = ops::positive_probability(logits);
                    }
                  });
  for (std::size_t i = 0; i < patches.size(); ++i) {
    labels[i] = patches.entry(i).label ? 1 : 0;
    (labels[i] ? out.n_pos : out.n_neg)++;
  }
  out.auc = evaluate_auc(out.scores, labels);
  return out;
}

TrainResult train(Model& model, const PatchCorpus& train_set, const TrainConfig& config, const PatchCorpus* val_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  require(!train_set.empty(), ErrorCode::kInvalidArgument, "training set is empty");
  const std::size_t n_pos = train_set.positives();
  require(n_pos >= 1 && n_pos < train_set.size(), ErrorCode::kInvalidArgument,
          "training set has a single class (" + std::to_string(n_pos) + " positive of " +
              std::to_string(train_set.size()) + " patches)");

  const unsigned threads = config.threads == 0 ? default_thread_count() : config.threads;
  const std::vector<std::string> names = model.trainable_names();
  MomentumState state = MomentumState::zeros_like(model);
  Rng rng(derive_seed(config.seed, 0x7241));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::sort(batch.begin(), batch.end(), [&](std::size_t a, std::size_t b) {
        return train_set.entry(a).patch_id < train_set.entry(b).patch_id;
      });
      std::vector<std::vector<Tensor>> sample_grads(batch.size());
      std::vector<float> sample_loss(batch.size());
      parallel_chunks(batch.size(), threads, [&](unsigned, std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          const std::size_t idx = batch[b];
          const ForwardTrace trace = forward_trace(model, adapt_input(model, train_set.pixels(idx)));
          const SoftmaxXent xent = ops::softmax_xent(trace.logits(), train_set.entry(idx).label ? 1 : 0);
          sample_loss[b] = xent.loss;
          sample_grads[b] = backward(model, trace, xent.grad_logits);
        }
      });
      std::vector<Tensor> grads = std::move(sample_grads[0]);
      for (std::size_t b = 1; b < batch.size(); ++b) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          float* acc = grads[p].data();
          const float* g = sample_grads[b][p].data();
          for (std::size_t j = 0; j < grads[p].size(); ++j) acc[j] += g[j];
        }
      }
      const float inv = 1.0f / static_cast<float>(batch.size());
      for (auto& g : grads) {
        for (auto& v : g.values()) v *= inv;
      }
      for (float l : sample_loss) loss_sum += l;
      const auto params = model.trainable_parameters();
      sgd_step(params, grads, state, config, names);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = loss_sum / static_cast<double>(order.size());
    if (val_set != nullptr && !val_set->empty()) {
      const std::size_t vp = val_set->positives();
      if (vp >= 1 && vp < val_set->size()) {
        m.val_auc = evaluate(model, *val_set, threads).auc;
        m.has_val_auc = true;
      }
    }
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

namespace {

LayerDesc conv_layer(const std::string& id, std::size_t in, std::size_t out, Rng& rng) {
  LayerDesc layer;
  layer.id = id;
  layer.kind = LayerKind::kConv;
  layer.conv = ConvSpec{3, 3, 1, 1, in, out};
  Tensor w({out, in, 3, 3});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in * 9));
  for (auto& v : w.values()) v = static_cast<float>(std_dev * rng.normal());
  layer.weights.push_back({"weight", id + ".weight", std::move(w)});
  layer.weights.push_back({"bias", id + ".bias", Tensor({out})});
  return layer;
}

LayerDesc plain_layer(const std::string& id, LayerKind kind) {
  LayerDesc layer;
  layer.id = id;
  layer.kind = kind;
  return layer;
}

}  // namespace

Model build_dissectnet_t(std::uint64_t seed, std::size_t input_size) {
  Rng rng(derive_seed(seed, 0x1217));
  std::vector<LayerDesc> layers;
  const std::size_t widths[] = {1, 8, 16, 32};
  for (std::size_t i = 1; i <= 3; ++i) {
    const std::string n = std::to_string(i);
    layers.push_back(conv_layer("conv" + n, widths[i - 1], widths[i], rng));
    layers.push_back(plain_layer("relu" + n, LayerKind::kRelu));
    layers.push_back(plain_layer("pool" + n, LayerKind::kMaxPool2));
  }
  layers.push_back(plain_layer("gap", LayerKind::kGlobalAvgPool));
  LayerDesc fc = plain_layer("fc", LayerKind::kFc);
  fc.fc_in = 32;
  fc.fc_out = 2;
  Tensor w({2, 32});
  const double std_dev = std::sqrt(1.0 / 32.0);
  for (auto& v : w.values()) v = static_cast<float>(std_dev * rng.normal());
  fc.weights.push_back({"weight", "fc.weight", std::move(w)});
  fc.weights.push_back({"bias", "fc.bias", Tensor({2})});
  layers.push_back(std::move(fc));
  return Model(kDissectNetName, {1, input_size, input_size}, std::move(layers),
               {{"init_seed", std::to_string(seed)}, {kInputNormalizationKey, "per_patch_standardize"}});
}

}  // namespace nd
