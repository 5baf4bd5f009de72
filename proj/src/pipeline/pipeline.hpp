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
#include <filesystem>
#include <optional>
#include <string>

#include "dissect/dissect.hpp"
#include "survey/annotation_log.hpp"
#include "trainer/trainer.hpp"

namespace nd {

// Model metadata keys written by the train stage and read back by dissect.
inline constexpr char kMetaSplitSeed[] = "split_seed";
inline constexpr char kMetaWindowFrac[] = "window_frac";
inline constexpr char kMetaStrideFrac[] = "stride_frac";

struct TrainRunOptions {
  TrainConfig config;
  double window_frac = kDefaultWindowFrac;
  double stride_frac = kDefaultStrideFrac;
  std::size_t input_size = kDefaultInputSize;
};

struct TrainRunSummary {
  std::size_t train_patches = 0;
  std::size_t train_positives = 0;
  std::size_t val_patches = 0;
  std::size_t val_positives = 0;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  double val_auc = 0.0;
  bool has_val_auc = false;
};

// index -> patient split -> DissectNet-T training. Writes the model pair and
// a metrics file with one {epoch, mean_loss, val_auc} record per line.
TrainRunSummary run_training(const std::filesystem::path& index_path, const TrainRunOptions& options,
                             const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path,
                             const std::filesystem::path& metrics_path, const EpochCallback& on_epoch = {});

struct DissectRunOptions {
  ProbeOptions probe;
  std::string split = "test";          // train, val, test or all
  std::optional<std::uint64_t> seed;   // defaults to the model's split seed
  std::optional<std::size_t> survey_n; // defaults to min(45, unit count)
};

struct DissectRunSummary {
  std::size_t units = 0;
  std::size_t patches = 0;
  std::size_t survey_units = 0;
  std::size_t montages = 0;
  std::string best_unit;
  double best_positive_fraction = 0.0;
};

inline constexpr std::size_t kDefaultSurveySize = 45;

DissectRunSummary run_dissection(const std::filesystem::path& manifest_path,
                                 const std::filesystem::path& weights_path, const std::filesystem::path& index_path,
                                 const DissectRunOptions& options, const std::filesystem::path& out_dir);

struct ReportOutput {
  std::string table;
  std::string json;
};

// Same computation as GET /api/report, from the log alone (read-only).
ReportOutput run_report(const std::filesystem::path& log_path, const std::filesystem::path& lexicon_path,
                        const WarningSink& warn = {});

// FNV-1a 64 over the manifest and weight bytes, as 16 hex digits.
std::string model_fingerprint(const Model& model);

}  // namespace nd
