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

#include "pipeline/pipeline.hpp"

#include <cstdio>
#include <json.hpp>
#include <set>

#include "common/error.hpp"
#include "common/files.hpp"
#include "common/parallel.hpp"
#include "dataset/case_index.hpp"
#include "dataset/image_io.hpp"
#include "dataset/split.hpp"
#include "dissect/catalog.hpp"
#include "model/model_io.hpp"
#include "survey/report.hpp"

namespace nd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_meta(const Model& model, const char* key, double fallback) {
  const auto it = model.metadata().find(key);
  if (it == model.metadata().end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    require(used == it->second.size(), ErrorCode::kParse, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kParse, std::string("model metadata '") + key + "' is not a number: " + it->second);
  }
}

std::vector<Case> cases_in_split(std::vector<Case> cases, const SplitAssignment& split, const std::string& which) {
  if (which == "all") return cases;
  const Split want = parse_split(which);
  std::vector<Case> out;
  for (auto& c : cases) {
    if (split.of(c.patient_id) == want) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::string model_fingerprint(const Model& model) {
  const SerializedModel s = save_model(model);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (char ch : s.manifest) mix(static_cast<unsigned char>(ch));
  for (auto b : s.blob) mix(b);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainRunSummary run_training(const fs::path& index_path, const TrainRunOptions& options,
                             const fs::path& manifest_path, const fs::path& weights_path,
                             const fs::path& metrics_path, const EpochCallback& on_epoch) {
  options.config.validate();
  // Output directories are created before the long part so that an
  // unwritable destination fails fast.
  for (const fs::path* p : {&manifest_path, &weights_path, &metrics_path}) {
    if (!p->empty() && p->has_parent_path()) ensure_directory(p->parent_path());
  }
  std::vector<Case> cases = load_cases(read_case_index(index_path), options.config.threads);
  require(!cases.empty(), ErrorCode::kInvalidArgument, "case index '" + index_path.string() + "' lists no cases");
  const SplitAssignment split = split_dataset(cases, options.config.seed);
  const PatchCorpus train_set(cases_in_split(cases, split, "train"), options.window_frac, options.stride_frac,
                              options.input_size);
  const PatchCorpus val_set(cases_in_split(std::move(cases), split, "val"), options.window_frac,
                            options.stride_frac, options.input_size);

  Model model = build_dissectnet_t(options.config.seed, options.input_size);
  model.set_metadata(kMetaSplitSeed, std::to_string(options.config.seed));
  model.set_metadata(kMetaWindowFrac, format_double(options.window_frac));
  model.set_metadata(kMetaStrideFrac, format_double(options.stride_frac));
  model.set_metadata("learning_rate", format_double(options.config.learning_rate));
  model.set_metadata("momentum", format_double(options.config.momentum));
  model.set_metadata("weight_decay", format_double(options.config.weight_decay));
  model.set_metadata("batch_size", std::to_string(options.config.batch_size));
  model.set_metadata("epochs", std::to_string(options.config.epochs));

  const TrainResult result = train(model, train_set, options.config, &val_set, on_epoch);

  std::string metrics;
  for (const auto& m : result.epochs) {
    json rec;
    rec["epoch"] = m.epoch;
    rec["mean_loss"] = m.mean_loss;
    rec["val_auc"] = m.has_val_auc ? json(m.val_auc) : json(nullptr);
    metrics += rec.dump() + "\n";
  }
  write_model_files(model, manifest_path, weights_path);
  write_file_text(metrics_path, metrics);

  TrainRunSummary s;
  s.train_patches = train_set.size();
  s.train_positives = train_set.positives();
  s.val_patches = val_set.size();
  s.val_positives = val_set.positives();
  s.epochs = result.epochs.size();
  if (!result.epochs.empty()) {
    s.final_loss = result.epochs.back().mean_loss;
    s.val_auc = result.epochs.back().val_auc;
    s.has_val_auc = result.epochs.back().has_val_auc;
  } else {
    const std::size_t vp = val_set.positives();
    if (vp >= 1 && vp < val_set.size()) {
      s.val_auc = evaluate(model, val_set, options.config.threads).auc;
      s.has_val_auc = true;
    }
  }
  return s;
}

DissectRunSummary run_dissection(const fs::path& manifest_path, const fs::path& weights_path,
                                 const fs::path& index_path, const DissectRunOptions& options,
                                 const fs::path& out_dir) {
  options.probe.validate();
  const Model model = read_model_files(manifest_path, weights_path);
  require_conv_layer(model, options.probe.layer_id);
  const Shape& in = model.input_shape();
  require(in[1] == in[2], ErrorCode::kShape, "dissection needs a square model input, got " + shape_string(in));
  if (options.split != "all") parse_split(options.split);

  std::uint64_t seed = 0;
  if (options.seed) {
    seed = *options.seed;
  } else {
    const auto it = model.metadata().find(kMetaSplitSeed);
    require(it != model.metadata().end(), ErrorCode::kInvalidArgument,
            "model carries no split seed; pass the seed used for training");
    seed = std::stoull(it->second);
  }

  std::vector<Case> cases = load_cases(read_case_index(index_path), options.probe.threads);
  std::vector<Case> chosen;
  if (options.split == "all") {
    chosen = std::move(cases);
  } else {
    const SplitAssignment split = split_dataset(cases, seed);
    chosen = cases_in_split(std::move(cases), split, options.split);
  }
  require(!chosen.empty(), ErrorCode::kInvalidArgument, "split '" + options.split + "' holds no cases");
  const PatchCorpus corpus(std::move(chosen), parse_double_meta(model, kMetaWindowFrac, kDefaultWindowFrac),
                           parse_double_meta(model, kMetaStrideFrac, kDefaultStrideFrac), in[1]);

  UnitCatalog units = probe(model, corpus, options.probe);
  const std::size_t n_units = units.units.size();
  const std::size_t survey_n = options.survey_n.value_or(std::min(kDefaultSurveySize, n_units));
  const std::vector<std::size_t> ranked = rank_units(units.units);
  const std::vector<std::size_t> survey = select_survey_units(ranked, survey_n, seed);

  ensure_directory(out_dir);
  ensure_directory(out_dir / "patches");
  ensure_directory(out_dir / "context");

  Catalog cat;
  cat.model_name = model.name();
  cat.model_fingerprint = model_fingerprint(model);
  cat.layer_id = options.probe.layer_id;
  cat.k = options.probe.k;
  cat.quantile = options.probe.quantile;
  cat.threshold_source = options.probe.threshold_source == ThresholdSource::kPatchMax ? "patch_max" : "all_spatial";
  cat.split = options.split;
  cat.seed = seed;
  cat.patch_count = corpus.size();
  const Shape& fshape = model.output_shape(model.layer_index(options.probe.layer_id));
  cat.feature_height = fshape[1];
  cat.feature_width = fshape[2];

  std::set<std::size_t> context_cases;
  for (const auto& u : units.units) {
    CatalogUnit cu;
    cu.unit_id = unit_id(u.layer_id, u.unit_index);
    cu.layer_id = u.layer_id;
    cu.unit_index = u.unit_index;
    cu.threshold = u.threshold;
    cu.top_positives = u.top_positives;
    cu.montage = cu.unit_id + ".png";
    for (std::size_t r = 0; r < u.top.size(); ++r) {
      const TopEntry& e = u.top[r];
      const PatchEntry& pe = corpus.entry(e.patch_index);
      char name[64];
      std::snprintf(name, sizeof name, "_%02zu.png", r);
      cu.patches.push_back({r, e.score, e.patch_id, corpus.source(e.patch_index).case_id, pe.rect, e.argmax_row,
                            e.argmax_col, pe.label, "patches/" + cu.unit_id + name});
      context_cases.insert(pe.case_index);
    }
    cat.units.push_back(std::move(cu));
  }
  for (std::size_t idx : survey) cat.survey.push_back(cat.units[idx].unit_id);
  for (std::size_t ci : context_cases) {
    const Case& c = corpus.cases()[ci];
    cat.cases.emplace(c.case_id, CatalogCase{c.case_id, c.patient_id, c.image_label, c.width(), c.height(),
                                             "context/" + c.case_id + ".png"});
  }
  validate_catalog(cat);

  const unsigned threads = options.probe.threads == 0 ? default_thread_count() : options.probe.threads;
  const PatchPixels pixels = [&](const TopEntry& e) { return corpus.pixels(e.patch_index); };
  parallel_chunks(n_units, threads, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      const UnitRecord& rec = units.units[u];
      write_png_gray(out_dir / cat.units[u].montage, render_montage(rec, pixels));
      for (std::size_t r = 0; r < rec.top.size(); ++r) {
        const SegmentedPatchView view =
            segment_patch(rec.top[r].patch_id, pixels(rec.top[r]), rec.top[r].feature_map, rec.threshold);
        write_png_gray(out_dir / cat.units[u].patches[r].overlay, view.overlay);
      }
    }
  });
  const std::vector<std::size_t> ctx(context_cases.begin(), context_cases.end());
  parallel_chunks(ctx.size(), threads, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Case& c = corpus.cases()[ctx[i]];
      write_png_gray(out_dir / cat.cases.at(c.case_id).image, c.image);
    }
  });
  write_file_text(out_dir / kCatalogFile, format_catalog(cat));

  DissectRunSummary s;
  s.units = n_units;
  s.patches = corpus.size();
  s.survey_units = cat.survey.size();
  s.montages = n_units;
  if (!ranked.empty()) {
    s.best_unit = cat.units[ranked.front()].unit_id;
    s.best_positive_fraction = units.units[ranked.front()].positive_fraction();
  }
  return s;
}

ReportOutput run_report(const fs::path& log_path, const fs::path& lexicon_path, const WarningSink& warn) {
  const Lexicon lexicon = read_lexicon(lexicon_path);
  std::error_code ec;
  require(fs::exists(log_path, ec), ErrorCode::kNotFound, "annotation log '" + log_path.string() + "' does not exist");
  const LogReadResult log = read_annotation_log(log_path, warn);
  const LexiconReport report = build_report(log.set, lexicon);
  return {report_to_table(report), report_to_json(report)};
}

}  // namespace nd
