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

#include "netdissect/netdissect.h"

#include <condition_variable>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <new>
#include <string>
#include <thread>

#include "common/error.hpp"
#include "dataset/case_index.hpp"
#include "model/model_io.hpp"
#include "pipeline/pipeline.hpp"
#include "survey/service.hpp"
#include "tensor/ops.hpp"

struct nd_model {
  nd::Model model;
};

struct nd_service {
  std::unique_ptr<nd::SurveyService> service;
  std::thread thread;
  std::mutex mutex;
  std::condition_variable cv;
  bool ready = false;
  bool done = false;
  int port = -1;
  std::string error;
  nd::ErrorCode error_code = nd::ErrorCode::kInternal;
};

namespace {

thread_local std::string g_last_error;

nd_status to_status(nd::ErrorCode code) { return static_cast<nd_status>(code); }

nd_status set_error(nd_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes and the thread's last
// error message.
template <typename Fn>
nd_status guard(Fn&& fn) noexcept {
  try {
    g_last_error.clear();
    fn();
    return ND_OK;
  } catch (const nd::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(ND_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(ND_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(ND_E_INTERNAL, "unknown error");
  }
}

void require_arg(const void* p, const char* name) {
  nd::require(p != nullptr, nd::ErrorCode::kInvalidArgument, std::string(name) + " must not be null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

nd::WarningSink sink(nd_warning_callback warn, void* user) {
  if (!warn) return {};
  return [warn, user](const std::string& message) { warn(message.c_str(), user); };
}

}  // namespace

extern "C" {

const char* nd_version(void) { return "1.0.0"; }

const char* nd_status_name(nd_status status) {
  if (status == ND_OK) return "ok";
  if (status < ND_E_INVALID_ARGUMENT || status > ND_E_INTERNAL) return "unknown";
  return nd::error_code_name(static_cast<nd::ErrorCode>(status));
}

const char* nd_last_error(void) { return g_last_error.c_str(); }

void nd_string_free(char* s) { std::free(s); }

void nd_corpus_options_init(nd_corpus_options* options) {
  if (!options) return;
  const nd::CorpusOptions d;
  *options = {d.cases, d.positive_frac, d.seed};
}

nd_status nd_generate_corpus(const char* out_dir, const nd_corpus_options* options, nd_corpus_summary* summary) {
  return guard([&] {
    require_arg(out_dir, "out_dir");
    require_arg(options, "options");
    const nd::CorpusSummary s = nd::generate_corpus(out_dir, {options->cases, options->positive_frac, options->seed});
    if (summary) *summary = {s.cases, s.positives, s.patients};
  });
}

void nd_train_options_init(nd_train_options* options) {
  if (!options) return;
  const nd::TrainRunOptions d;
  const nd::TrainConfig& c = d.config;
  *options = {c.learning_rate,
              c.momentum,
              c.weight_decay,
              static_cast<uint32_t>(c.epochs),
              static_cast<uint32_t>(c.batch_size),
              c.seed,
              c.threads,
              d.window_frac,
              d.stride_frac,
              static_cast<uint32_t>(d.input_size)};
}

nd_status nd_train(const char* index_path, const nd_train_options* options, const char* manifest_path,
                   const char* weights_path, const char* metrics_path, nd_epoch_callback on_epoch, void* user,
                   nd_train_summary* summary) {
  return guard([&] {
    require_arg(index_path, "index_path");
    require_arg(options, "options");
    require_arg(manifest_path, "manifest_path");
    require_arg(weights_path, "weights_path");
    require_arg(metrics_path, "metrics_path");
    nd::TrainRunOptions o;
    o.config.learning_rate = options->learning_rate;
    o.config.momentum = options->momentum;
    o.config.weight_decay = options->weight_decay;
    o.config.epochs = options->epochs;
    o.config.batch_size = options->batch_size;
    o.config.seed = options->seed;
    o.config.threads = options->threads;
    o.window_frac = options->window_frac;
    o.stride_frac = options->stride_frac;
    o.input_size = options->input_size;
    nd::EpochCallback cb;
    if (on_epoch) {
      cb = [on_epoch, user](const nd::EpochMetrics& m) {
        const nd_epoch_metrics c{static_cast<uint32_t>(m.epoch), m.mean_loss, m.val_auc, m.has_val_auc ? 1 : 0};
        on_epoch(&c, user);
      };
    }
    const nd::TrainRunSummary s = nd::run_training(index_path, o, manifest_path, weights_path, metrics_path, cb);
    if (summary) {
      *summary = {s.train_patches, s.train_positives, s.val_patches, s.val_positives,
                  s.epochs,        s.final_loss,      s.val_auc,     s.has_val_auc ? 1 : 0};
    }
  });
}

void nd_dissect_options_init(nd_dissect_options* options) {
  if (!options) return;
  const nd::ProbeOptions d;
  *options = {};
  options->k = static_cast<uint32_t>(d.k);
  options->quantile = d.quantile;
  options->threshold_source = ND_THRESHOLD_PATCH_MAX;
}

nd_status nd_dissect(const char* manifest_path, const char* weights_path, const char* index_path,
                     const nd_dissect_options* options, const char* out_dir, nd_dissect_summary* summary) {
  return guard([&] {
    require_arg(manifest_path, "manifest_path");
    require_arg(weights_path, "weights_path");
    require_arg(index_path, "index_path");
    require_arg(options, "options");
    require_arg(out_dir, "out_dir");
    nd::DissectRunOptions o;
    if (options->layer) o.probe.layer_id = options->layer;
    o.probe.k = options->k;
    o.probe.quantile = options->quantile;
    switch (options->threshold_source) {
      case ND_THRESHOLD_PATCH_MAX: o.probe.threshold_source = nd::ThresholdSource::kPatchMax; break;
      case ND_THRESHOLD_ALL_SPATIAL: o.probe.threshold_source = nd::ThresholdSource::kAllSpatial; break;
      default: nd::fail(nd::ErrorCode::kInvalidArgument, "unknown threshold source");
    }
    o.probe.threads = options->threads;
    if (options->split) o.split = options->split;
    if (options->has_seed) o.seed = options->seed;
    if (options->has_survey_size) o.survey_n = options->survey_size;
    const nd::DissectRunSummary s = nd::run_dissection(manifest_path, weights_path, index_path, o, out_dir);
    if (summary) {
      *summary = {};
      summary->units = s.units;
      summary->patches = s.patches;
      summary->survey_units = s.survey_units;
      summary->montages = s.montages;
      summary->best_positive_fraction = s.best_positive_fraction;
      std::snprintf(summary->best_unit, sizeof summary->best_unit, "%s", s.best_unit.c_str());
    }
  });
}

nd_status nd_model_load(const char* manifest_path, const char* weights_path, nd_model** out) {
  return guard([&] {
    require_arg(manifest_path, "manifest_path");
    require_arg(weights_path, "weights_path");
    require_arg(out, "out");
    *out = nullptr;
    *out = new nd_model{nd::read_model_files(manifest_path, weights_path)};
  });
}

nd_status nd_model_create_dissectnet(uint64_t seed, uint32_t input_size, nd_model** out) {
  return guard([&] {
    require_arg(out, "out");
    *out = nullptr;
    *out = new nd_model{nd::build_dissectnet_t(seed, input_size)};
  });
}

void nd_model_free(nd_model* model) { delete model; }

nd_status nd_model_save(const nd_model* model, const char* manifest_path, const char* weights_path) {
  return guard([&] {
    require_arg(model, "model");
    require_arg(manifest_path, "manifest_path");
    require_arg(weights_path, "weights_path");
    nd::write_model_files(model->model, manifest_path, weights_path);
  });
}

nd_status nd_model_describe(const nd_model* model, char** json_out) {
  return guard([&] {
    require_arg(model, "model");
    require_arg(json_out, "json_out");
    *json_out = nullptr;
    const nd::Model& m = model->model;
    nlohmann::ordered_json j;
    j["name"] = m.name();
    j["fingerprint"] = nd::model_fingerprint(m);
    j["input_shape"] = m.input_shape();
    j["parameters"] = m.parameter_count();
    j["layers"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
      j["layers"].push_back({{"id", m.layers()[i].id},
                             {"op", nd::layer_kind_name(m.layers()[i].kind)},
                             {"output_shape", m.output_shape(i)}});
    }
    j["metadata"] = m.metadata();
    *json_out = copy_string(j.dump());
  });
}

nd_status nd_model_logit(const nd_model* model, const float* input, size_t count, float* logit) {
  return guard([&] {
    require_arg(model, "model");
    require_arg(input, "input");
    require_arg(logit, "logit");
    const nd::Shape shape = model->model.input_shape();
    nd::Tensor x = nd::Tensor::from_values(shape, std::vector<float>(input, input + count));
    const nd::Tensor logits = nd::forward(model->model, x).logits;
    *logit = logits[1] - logits[0];
  });
}

nd_status nd_auc(const float* scores, const uint8_t* labels, size_t count, double* auc) {
  return guard([&] {
    require_arg(auc, "auc");
    nd::require(count == 0 || (scores && labels), nd::ErrorCode::kInvalidArgument, "scores and labels must not be null");
    *auc = nd::evaluate_auc({scores, count}, {labels, count});
  });
}

nd_status nd_report(const char* log_path, const char* lexicon_path, int format_json, nd_warning_callback warn,
                    void* user, char** out) {
  return guard([&] {
    require_arg(log_path, "log_path");
    require_arg(lexicon_path, "lexicon_path");
    require_arg(out, "out");
    *out = nullptr;
    const nd::ReportOutput r = nd::run_report(log_path, lexicon_path, sink(warn, user));
    *out = copy_string(format_json ? r.json : r.table);
  });
}

nd_status nd_service_open(const char* catalog_dir, const char* log_path, const char* lexicon_path,
                          nd_warning_callback warn, void* user, nd_service** out) {
  return guard([&] {
    require_arg(catalog_dir, "catalog_dir");
    require_arg(log_path, "log_path");
    require_arg(lexicon_path, "lexicon_path");
    require_arg(out, "out");
    *out = nullptr;
    auto s = std::make_unique<nd_service>();
    s->service = std::make_unique<nd::SurveyService>(nd::ServiceConfig{catalog_dir, log_path, lexicon_path},
                                                     sink(warn, user));
    *out = s.release();
  });
}

nd_status nd_service_start(nd_service* service, const char* host, int port, int* bound_port) {
  return guard([&] {
    require_arg(service, "service");
    require_arg(host, "host");
    nd::require(!service->thread.joinable(), nd::ErrorCode::kConflict, "service is already started");
    service->ready = service->done = false;
    std::string h = host;
    service->thread = std::thread([service, h, port] {
      try {
        service->service->listen(h, port, [service](int bound) {
          std::lock_guard lock(service->mutex);
          service->port = bound;
          service->ready = true;
          service->cv.notify_all();
        });
      } catch (const nd::Error& e) {
        std::lock_guard lock(service->mutex);
        service->error = e.what();
        service->error_code = e.code();
      } catch (const std::exception& e) {
        std::lock_guard lock(service->mutex);
        service->error = e.what();
      }
      std::lock_guard lock(service->mutex);
      service->done = true;
      service->cv.notify_all();
    });
    std::unique_lock lock(service->mutex);
    service->cv.wait(lock, [service] { return service->ready || service->done; });
    if (!service->ready) {
      lock.unlock();
      service->thread.join();
      nd::fail(service->error_code, service->error);
    }
    if (bound_port) *bound_port = service->port;
  });
}

nd_status nd_service_stop(nd_service* service) {
  return guard([&] {
    require_arg(service, "service");
    if (!service->thread.joinable()) return;
    service->service->stop();
    service->thread.join();
  });
}

void nd_service_free(nd_service* service) {
  if (!service) return;
  nd_service_stop(service);
  delete service;
}

}  // extern "C"
