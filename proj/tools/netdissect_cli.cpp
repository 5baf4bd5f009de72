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

// netdissect command-line front end. Talks to the library only through the
// C API in netdissect/netdissect.h.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "netdissect/netdissect.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int exit_code_for(nd_status status) {
  switch (status) {
    case ND_OK: return kExitOk;
    case ND_E_INVALID_ARGUMENT:
    case ND_E_PARSE:
    case ND_E_NOT_FOUND: return kExitValidation;
    default: return kExitRuntime;
  }
}

int report_failure(const char* stage, nd_status status) {
  std::fprintf(stderr, "netdissect %s: %s: %s\n", stage, nd_status_name(status), nd_last_error());
  return exit_code_for(status);
}

void print_warning(const char* message, void*) { std::fprintf(stderr, "warning: %s\n", message); }

// Accepts a corpus directory or the index file itself.
std::string resolve_index(const std::string& path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return (fs::path(path) / "index.jsonl").string();
  return path;
}

struct ModelPaths {
  std::string manifest;
  std::string weights;
};

// "<prefix>", "<prefix>.netm" and "<prefix>.netw" all name the same pair.
ModelPaths model_paths(const std::string& given) {
  fs::path p(given);
  if (p.extension() == ".netm" || p.extension() == ".netw") p.replace_extension();
  return {p.string() + ".netm", p.string() + ".netw"};
}

struct GenDataArgs {
  std::string out;
  nd_corpus_options opts{};
};

struct TrainArgs {
  std::string index;
  std::string out_model;
  std::string metrics;
  nd_train_options opts{};
};

struct DissectArgs {
  std::string model;
  std::string index;
  std::string out;
  std::string layer = "conv3";
  std::string split = "test";
  std::string threshold_source = "patch_max";
  std::optional<uint64_t> seed;
  std::optional<uint32_t> survey_size;
  nd_dissect_options opts{};
};

struct ServeArgs {
  std::string catalog;
  std::string log;
  std::string lexicon;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct ReportArgs {
  std::string log;
  std::string lexicon;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  nd_corpus_summary s{};
  const nd_status st = nd_generate_corpus(a.out.c_str(), &a.opts, &s);
  if (st != ND_OK) return report_failure("gen-data", st);
  std::printf("cases: %zu\npositives: %zu\npatients: %zu\nseed: %llu\nindex: %s\n", s.cases, s.positives,
              s.patients, static_cast<unsigned long long>(a.opts.seed),
              (fs::path(a.out) / "index.jsonl").string().c_str());
  return kExitOk;
}

void print_epoch(const nd_epoch_metrics* m, void*) {
  if (m->has_val_auc) {
    std::printf("epoch %u  loss %.6f  val_auc %.4f\n", m->epoch, m->mean_loss, m->val_auc);
  } else {
    std::printf("epoch %u  loss %.6f  val_auc n/a\n", m->epoch, m->mean_loss);
  }
  std::fflush(stdout);
}

int run_train(TrainArgs a) {
  const ModelPaths paths = model_paths(a.out_model);
  if (a.metrics.empty()) a.metrics = fs::path(paths.manifest).replace_extension(".metrics.jsonl").string();
  std::printf("seed: %llu\n", static_cast<unsigned long long>(a.opts.seed));
  std::fflush(stdout);
  nd_train_summary s{};
  const nd_status st = nd_train(resolve_index(a.index).c_str(), &a.opts, paths.manifest.c_str(),
                                paths.weights.c_str(), a.metrics.c_str(), print_epoch, nullptr, &s);
  if (st != ND_OK) return report_failure("train", st);
  std::printf("train patches: %zu (%zu positive)\nval patches: %zu (%zu positive)\n", s.train_patches,
              s.train_positives, s.val_patches, s.val_positives);
  if (s.has_val_auc) {
    std::printf("validation AUC: %.4f\n", s.val_auc);
  } else {
    std::printf("validation AUC: n/a (validation split lacks both classes)\n");
  }
  std::printf("model: %s\nweights: %s\nmetrics: %s\n", paths.manifest.c_str(), paths.weights.c_str(),
              a.metrics.c_str());
  return kExitOk;
}

int run_dissect(DissectArgs a) {
  const ModelPaths paths = model_paths(a.model);
  a.opts.layer = a.layer.c_str();
  a.opts.split = a.split.c_str();
  a.opts.threshold_source = a.threshold_source == "all_spatial" ? ND_THRESHOLD_ALL_SPATIAL : ND_THRESHOLD_PATCH_MAX;
  if (a.seed) {
    a.opts.has_seed = 1;
    a.opts.seed = *a.seed;
  }
  if (a.survey_size) {
    a.opts.has_survey_size = 1;
    a.opts.survey_size = *a.survey_size;
  }
  nd_dissect_summary s{};
  const nd_status st = nd_dissect(paths.manifest.c_str(), paths.weights.c_str(), resolve_index(a.index).c_str(),
                                  &a.opts, a.out.c_str(), &s);
  if (st != ND_OK) return report_failure("dissect", st);
  std::printf("units: %zu\npatches probed: %zu (%s split)\nmontages: %zu\nsurvey units: %zu\n", s.units, s.patches,
              a.split.c_str(), s.montages, s.survey_units);
  std::printf("most cancer-selective unit: %s (%.0f%% of top-%u positive)\ncatalog: %s\n", s.best_unit,
              100.0 * s.best_positive_fraction, a.opts.k, (fs::path(a.out) / "catalog.json").string().c_str());
  return kExitOk;
}

int run_serve(const ServeArgs& a) {
  // Block the shutdown signals before any thread starts so that only
  // sigwait below sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  nd_service* service = nullptr;
  nd_status st = nd_service_open(a.catalog.c_str(), a.log.c_str(), a.lexicon.c_str(), print_warning, nullptr, &service);
  if (st != ND_OK) return report_failure("serve", st);
  int port = 0;
  st = nd_service_start(service, a.host.c_str(), a.port, &port);
  if (st != ND_OK) {
    const int code = report_failure("serve", st);
    nd_service_free(service);
    return code;
  }
  std::printf("listening on http://%s:%d\n", a.host.c_str(), port);
  std::fflush(stdout);
  int sig = 0;
  sigwait(&signals, &sig);
  st = nd_service_stop(service);
  nd_service_free(service);
  if (st != ND_OK) return report_failure("serve", st);
  std::printf("stopped\n");
  return kExitOk;
}

int run_report(const ReportArgs& a) {
  char* table = nullptr;
  nd_status st = nd_report(a.log.c_str(), a.lexicon.c_str(), 0, print_warning, nullptr, &table);
  if (st != ND_OK) return report_failure("report", st);
  std::fputs(table, stdout);
  nd_string_free(table);
  if (!a.out.empty()) {
    char* json = nullptr;
    st = nd_report(a.log.c_str(), a.lexicon.c_str(), 1, nullptr, nullptr, &json);
    if (st != ND_OK) return report_failure("report", st);
    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    out << json << '\n';
    nd_string_free(json);
    if (!out.flush()) {
      std::fprintf(stderr, "netdissect report: cannot write '%s'\n", a.out.c_str());
      return kExitRuntime;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unit dissection for mammography patch classifiers"};
  app.set_config("--config", "", "Read flags from a TOML/INI file (command-line flags take precedence)");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nd_version()));

  GenDataArgs gen;
  nd_corpus_options_init(&gen.opts);
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic mammography corpus and its case index");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--cases", gen.opts.cases, "Number of cases")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--positive-frac", gen.opts.positive_frac, "Fraction of cases with lesions")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--seed", gen.opts.seed, "Generator seed")->capture_default_str();

  TrainArgs tr;
  nd_train_options_init(&tr.opts);
  auto* train_cmd = app.add_subcommand("train", "Train DissectNet-T on a case index");
  train_cmd->add_option("--index", tr.index, "Case index file or corpus directory")->required();
  train_cmd->add_option("--out-model", tr.out_model, "Model path prefix (.netm/.netw are appended)")->required();
  train_cmd->add_option("--metrics", tr.metrics, "Per-epoch metrics file (default <out-model>.metrics.jsonl)");
  train_cmd->add_option("--seed", tr.opts.seed, "Split, initialization and shuffling seed")->capture_default_str();
  train_cmd->add_option("--lr", tr.opts.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.opts.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.opts.weight_decay, "L2 weight decay")->capture_default_str();
  train_cmd->add_option("--epochs", tr.opts.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.opts.batch_size, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--window-frac", tr.opts.window_frac, "Patch window as a fraction of the shorter side")
      ->capture_default_str();
  train_cmd->add_option("--stride-frac", tr.opts.stride_frac, "Patch stride as a fraction of the window")
      ->capture_default_str();
  train_cmd->add_option("--input-size", tr.opts.input_size, "Network input side in pixels")->capture_default_str();
  train_cmd->add_option("--threads", tr.opts.threads, "Worker threads (0 = all cores)")->capture_default_str();

  DissectArgs dis;
  nd_dissect_options_init(&dis.opts);
  auto* dissect_cmd = app.add_subcommand("dissect", "Probe a convolutional layer and write the unit catalog");
  dissect_cmd->add_option("--model", dis.model, "Model path prefix or .netm/.netw file")->required();
  dissect_cmd->add_option("--index", dis.index, "Case index file or corpus directory")->required();
  dissect_cmd->add_option("--out", dis.out, "Catalog output directory")->required();
  dissect_cmd->add_option("--layer", dis.layer, "Convolutional layer id")->capture_default_str();
  dissect_cmd->add_option("--k", dis.opts.k, "Top-activating patches per unit")->capture_default_str();
  dissect_cmd->add_option("--quantile", dis.opts.quantile, "Upper-tail fraction defining the unit threshold")
      ->capture_default_str();
  dissect_cmd->add_option("--threshold-source", dis.threshold_source, "Scores feeding the threshold")
      ->capture_default_str()
      ->check(CLI::IsMember({"patch_max", "all_spatial"}));
  dissect_cmd->add_option("--split", dis.split, "Patients to probe")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  dissect_cmd->add_option("--seed", dis.seed, "Split and survey seed (default: the model's training seed)");
  dissect_cmd->add_option("--survey-size", dis.survey_size, "Units offered to readers (default min(45, units))");
  dissect_cmd->add_option("--threads", dis.opts.threads, "Worker threads (0 = all cores)")->capture_default_str();

  ServeArgs srv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the survey HTTP service");
  serve_cmd->add_option("--catalog", srv.catalog, "Catalog directory written by dissect")->required();
  serve_cmd->add_option("--log", srv.log, "Append-only annotation log")->required();
  serve_cmd->add_option("--lexicon", srv.lexicon, "Lexicon JSON file")->required();
  serve_cmd->add_option("--host", srv.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", srv.port, "Port (0 picks a free port)")->capture_default_str()->check(
      CLI::Range(0, 65535));

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Summarize an annotation log against the lexicon");
  report_cmd->add_option("--log", rep.log, "Annotation log")->required();
  report_cmd->add_option("--lexicon", rep.lexicon, "Lexicon JSON file")->required();
  report_cmd->add_option("--out", rep.out, "Also write the report as JSON to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*gen_cmd) return run_gen_data(gen);
  if (*train_cmd) return run_train(tr);
  if (*dissect_cmd) return run_dissect(dis);
  if (*serve_cmd) return run_serve(srv);
  return run_report(rep);
}
