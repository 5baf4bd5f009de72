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

/* C interface to the netdissect core. Every fallible call returns an
 * nd_status; on failure nd_last_error() holds a message for the calling
 * thread until its next call into the library. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * nd_string_free(). */
#ifndef NETDISSECT_NETDISSECT_H_
#define NETDISSECT_NETDISSECT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ND_API __declspec(dllexport)
#else
#define ND_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nd_status {
  ND_OK = 0,
  ND_E_INVALID_ARGUMENT = 1,
  ND_E_PARSE = 2,
  ND_E_SHAPE = 3,
  ND_E_NOT_FOUND = 4,
  ND_E_CONFLICT = 5,
  ND_E_IO = 6,
  ND_E_NUMERIC = 7,
  ND_E_UNAVAILABLE = 8,
  ND_E_BLOB_TRUNCATED = 9,
  ND_E_BLOB_TRAILING = 10,
  ND_E_INTERNAL = 11
} nd_status;

typedef struct nd_model nd_model;
typedef struct nd_service nd_service;

typedef void (*nd_warning_callback)(const char* message, void* user);

ND_API const char* nd_version(void);
ND_API const char* nd_status_name(nd_status status);
ND_API const char* nd_last_error(void);
ND_API void nd_string_free(char* s);

/* Synthetic corpus. */
typedef struct nd_corpus_options {
  size_t cases;
  double positive_frac;
  uint64_t seed;
} nd_corpus_options;

typedef struct nd_corpus_summary {
  size_t cases;
  size_t positives;
  size_t patients;
} nd_corpus_summary;

ND_API void nd_corpus_options_init(nd_corpus_options* options);
ND_API nd_status nd_generate_corpus(const char* out_dir, const nd_corpus_options* options,
                                    nd_corpus_summary* summary);

/* Training. */
typedef struct nd_train_options {
  double learning_rate;
  double momentum;
  double weight_decay;
  uint32_t epochs;
  uint32_t batch_size;
  uint64_t seed;
  uint32_t threads; /* 0 = hardware concurrency */
  double window_frac;
  double stride_frac;
  uint32_t input_size;
} nd_train_options;

typedef struct nd_epoch_metrics {
  uint32_t epoch;
  double mean_loss;
  double val_auc;
  int has_val_auc;
} nd_epoch_metrics;

typedef struct nd_train_summary {
  size_t train_patches;
  size_t train_positives;
  size_t val_patches;
  size_t val_positives;
  size_t epochs;
  double final_loss;
  double val_auc;
  int has_val_auc;
} nd_train_summary;

typedef void (*nd_epoch_callback)(const nd_epoch_metrics* metrics, void* user);

ND_API void nd_train_options_init(nd_train_options* options);
ND_API nd_status nd_train(const char* index_path, const nd_train_options* options, const char* manifest_path,
                          const char* weights_path, const char* metrics_path, nd_epoch_callback on_epoch,
                          void* user, nd_train_summary* summary);

/* Dissection. */
typedef enum nd_threshold_source { ND_THRESHOLD_PATCH_MAX = 0, ND_THRESHOLD_ALL_SPATIAL = 1 } nd_threshold_source;

typedef struct nd_dissect_options {
  const char* layer;  /* NULL = "conv3" */
  uint32_t k;
  double quantile;
  nd_threshold_source threshold_source;
  const char* split;  /* train, val, test or all; NULL = "test" */
  int has_seed;       /* otherwise the model's split seed is used */
  uint64_t seed;
  int has_survey_size;
  uint32_t survey_size;
  uint32_t threads;
} nd_dissect_options;

typedef struct nd_dissect_summary {
  size_t units;
  size_t patches;
  size_t survey_units;
  size_t montages;
  double best_positive_fraction;
  char best_unit[64];
} nd_dissect_summary;

ND_API void nd_dissect_options_init(nd_dissect_options* options);
ND_API nd_status nd_dissect(const char* manifest_path, const char* weights_path, const char* index_path,
                            const nd_dissect_options* options, const char* out_dir, nd_dissect_summary* summary);

/* Models. */
ND_API nd_status nd_model_load(const char* manifest_path, const char* weights_path, nd_model** out);
ND_API nd_status nd_model_create_dissectnet(uint64_t seed, uint32_t input_size, nd_model** out);
ND_API void nd_model_free(nd_model* model);
ND_API nd_status nd_model_save(const nd_model* model, const char* manifest_path, const char* weights_path);
/* JSON object: name, fingerprint, input_shape, layers[{id, op, output_shape}]. */
ND_API nd_status nd_model_describe(const nd_model* model, char** json_out);
/* input holds one [C,H,W] image in the model's declared input shape; the
 * model's input adaptation (normalization, channel replication) applies. */
ND_API nd_status nd_model_logit(const nd_model* model, const float* input, size_t count, float* logit);

/* Metrics. */
ND_API nd_status nd_auc(const float* scores, const uint8_t* labels, size_t count, double* auc);

/* Offline report over an annotation log. format_json != 0 selects JSON. */
ND_API nd_status nd_report(const char* log_path, const char* lexicon_path, int format_json,
                           nd_warning_callback warn, void* user, char** out);

/* Survey service. nd_service_start binds, serves on a background thread and
 * returns once the socket is listening. */
ND_API nd_status nd_service_open(const char* catalog_dir, const char* log_path, const char* lexicon_path,
                                 nd_warning_callback warn, void* user, nd_service** out);
ND_API nd_status nd_service_start(nd_service* service, const char* host, int port, int* bound_port);
ND_API nd_status nd_service_stop(nd_service* service);
ND_API void nd_service_free(nd_service* service);

#ifdef __cplusplus
}
#endif

#endif /* NETDISSECT_NETDISSECT_H_ */
