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

// Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. The pipeline criteria drive the real CLI binary.

#include <httplib.h>

#include <json.hpp>

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "dataset/lesions.hpp"
#include "dataset/patches.hpp"
#include "dataset/synthetic.hpp"
#include "dissect/catalog.hpp"
#include "dissect/dissect.hpp"
#include "oracles/brute_force.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/reference_ops.hpp"
#include "tensor/ops.hpp"
#include "trainer/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;
using nd::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- subprocesses ----

struct Child {
  pid_t pid = -1;
  int out_fd = -1;  // stdout and stderr of the child
};

Child spawn(const std::vector<std::string>& args) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    dup2(fds[1], STDERR_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(argv[0], argv.data());
    _exit(127);
  }
  close(fds[1]);
  return {pid, fds[0]};
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), ND_ACCEPTANCE_CLI);
  const Child c = spawn(args);
  RunResult r;
  char buf[4096];
  ssize_t n = 0;
  while ((n = read(c.out_fd, buf, sizeof buf)) > 0) r.output.append(buf, static_cast<std::size_t>(n));
  close(c.out_fd);
  int status = 0;
  waitpid(c.pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void require_ok(const RunResult& r, const std::string& what) {
  if (r.exit_code != 0) throw std::runtime_error(what + " exited with " + std::to_string(r.exit_code) + ":\n" + r.output);
}

// A `serve` process; the constructor returns once the port is known.
class ServeProcess {
 public:
  ServeProcess(const fs::path& catalog, const fs::path& log) {
    child_ = spawn({ND_ACCEPTANCE_CLI, "serve", "--catalog", catalog.string(), "--log", log.string(), "--lexicon",
                    ND_ACCEPTANCE_LEXICON, "--port", "0"});
    const std::regex listening(R"(listening on http://[^:]+:(\d+))");
    const auto deadline = Clock::now() + std::chrono::seconds(20);
    std::smatch m;
    while (!std::regex_search(output_, m, listening)) {
      if (Clock::now() > deadline) throw std::runtime_error("serve did not start:\n" + output_);
      pollfd p{child_.out_fd, POLLIN, 0};
      if (poll(&p, 1, 200) <= 0) continue;
      char buf[1024];
      const ssize_t n = read(child_.out_fd, buf, sizeof buf);
      if (n <= 0) throw std::runtime_error("serve exited early:\n" + output_);
      output_.append(buf, static_cast<std::size_t>(n));
    }
    port_ = std::stoi(m[1].str());
  }
  ~ServeProcess() { kill9(); }
  ServeProcess(const ServeProcess&) = delete;
  ServeProcess& operator=(const ServeProcess&) = delete;

  int port() const { return port_; }

  void kill9() {
    if (child_.pid <= 0) return;
    kill(child_.pid, SIGKILL);
    int status = 0;
    waitpid(child_.pid, &status, 0);
    close(child_.out_fd);
    child_.pid = -1;
  }

 private:
  Child child_;
  std::string output_;
  int port_ = 0;
};

// ---- test-side helpers ----

Tensor random_mask(nd::Rng& rng, std::size_t side) {
  Tensor m({side, side});
  const auto blobs = rng.uniform_int(0, 4);
  for (std::int64_t b = 0; b < blobs; ++b) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 20)), w = static_cast<std::size_t>(rng.uniform_int(1, 20));
    const auto y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(side - h)));
    const auto x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(side - w)));
    for (std::size_t dy = 0; dy < h; ++dy) {
      for (std::size_t dx = 0; dx < w; ++dx) m.at(y + dy, x + dx) = 1.0f;
    }
  }
  const auto salt = rng.uniform_int(0, 30);
  for (std::int64_t s = 0; s < salt; ++s) {
    m[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(side * side - 1)))] = 1.0f;
  }
  return m;
}

// Per-unit spatial max for every patch, straight from a full forward pass.
std::vector<std::vector<oracle::Scored>> all_scores(const nd::Model& m, const nd::PatchCorpus& corpus,
                                                    const std::string& layer) {
  std::vector<std::vector<oracle::Scored>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Tensor act = nd::forward(m, nd::adapt_input(m, corpus.pixels(i)), {layer}).captures[0].tensor;
    const std::size_t units = act.dim(0), plane = act.dim(1) * act.dim(2);
    out.resize(units);
    const auto values = act.values();
    for (std::size_t u = 0; u < units; ++u) {
      const auto begin = values.begin() + static_cast<std::ptrdiff_t>(u * plane);
      out[u].push_back({*std::max_element(begin, begin + static_cast<std::ptrdiff_t>(plane)), corpus.entry(i).patch_id});
    }
  }
  return out;
}

std::vector<fs::path> montages_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- criteria ----

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto reports = oracle::run_gradient_suite(20240611, 20);
  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 30.0;
  std::string detail;
  for (const auto& r : reports) {
    pass = pass && r.pass() && r.trials >= 20;
    detail += fmt("%s %.1e/%.0e (%zu trials); ", r.kernel.c_str(), r.max_rel, r.tolerance, r.trials);
  }
  return {pass, detail + fmt("%.1f s", elapsed)};
}

Outcome oracle_equivalence() {
  std::vector<std::string> failures;

  oracle::GradRng grng(4);
  for (int t = 0; t < 50; ++t) {
    nd::ConvSpec s;
    s.in_channels = grng.index(1, 4);
    s.out_channels = grng.index(1, 9);
    s.kernel_h = s.kernel_w = grng.index(1, 3);
    s.stride = grng.index(1, 2);
    s.padding = grng.index(0, 1);
    const Tensor x = grng.tensor({s.in_channels, grng.index(3, 20), grng.index(3, 20)});
    const Tensor w = grng.tensor({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w});
    const Tensor b = grng.tensor({s.out_channels});
    if (!nd::ops::conv2d_forward(x, w, b, s).identical(oracle::conv2d_loops_float(x, w, b, s))) {
      failures.push_back(fmt("conv2d shape #%d", t));
    }
  }

  std::vector<nd::Case> cases;
  for (std::size_t i = 0; i < 2; ++i) {
    cases.push_back(nd::generate_synthetic_case(300 + i, i == 0, "s" + std::to_string(i), "p" + std::to_string(i)));
  }
  const nd::PatchCorpus corpus(cases, 0.25, 0.5, 16);
  const nd::Model model = nd::build_dissectnet_t(31, 16);
  std::size_t topk_units = 0;
  for (const char* layer : {"conv2", "conv3"}) {
    nd::ProbeOptions opt;
    opt.layer_id = layer;
    opt.k = 12;
    opt.quantile = 0.005;
    opt.threads = 3;
    const nd::UnitCatalog cat = nd::probe(model, corpus, opt);
    const auto scores = all_scores(model, corpus, layer);
    for (std::size_t u = 0; u < scores.size(); ++u) {
      ++topk_units;
      const auto want = oracle::top_k_by_sort(scores[u], 12);
      const auto& got = cat.units[u].top;
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].patch_id == want[i].id && got[i].score == want[i].score;
      }
      if (!same) failures.push_back(fmt("top-k %s unit %zu", layer, u));
    }
  }

  nd::Rng rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const Tensor mask = random_mask(rng, 64);
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 64));
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 64));
    const nd::PatchRect r{static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(64 - w))),
                          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(64 - h))), w, h};
    if (nd::label_patch(r, mask) != oracle::label_by_counting(r, mask)) failures.push_back(fmt("label pair #%d", t));
  }

  nd::Rng arng(77);
  double worst_auc = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = static_cast<std::size_t>(arng.uniform_int(2, 60));
    std::vector<float> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = t % 2 ? static_cast<float>(arng.uniform_int(0, 6)) / 6.0f : static_cast<float>(arng.normal());
      labels[i] = static_cast<std::uint8_t>(i < 2 ? i : arng.uniform_int(0, 1));
    }
    const double diff = std::abs(nd::evaluate_auc(scores, labels) - oracle::auc_by_pairs(scores, labels));
    worst_auc = std::max(worst_auc, diff);
    if (diff > 1e-5) failures.push_back(fmt("auc set #%d", t));
  }

  std::string detail = fmt("conv 50 shapes, top-k %zu units, label 1000 pairs, auc 100 sets (max diff %.1e)",
                           topk_units, worst_auc);
  if (!failures.empty()) detail += "; first mismatch: " + failures.front() + fmt(" (%zu total)", failures.size());
  return {failures.empty(), detail};
}

Outcome labeling_boundary() {
  // 10x100 bar lesion (1000 px); a 30x50 patch over its left end holds 300.
  Tensor bar({200, 200});
  for (std::size_t y = 0; y < 10; ++y) {
    for (std::size_t x = 0; x < 100; ++x) bar.at(y, x) = 1.0f;
  }
  const nd::PatchRect patch{0, 0, 30, 50};
  const bool at_30 = nd::label_patch(patch, bar);
  // Move one lesion pixel outside the patch: still one 1000 px lesion, 299
  // inside (29.9%), patch coverage 299/1500 < 30%.
  Tensor moved = bar;
  moved.at(9, 0) = 0.0f;
  moved.at(10, 99) = 1.0f;
  const nd::LesionComponents lesions = nd::find_lesions(moved);
  const bool construction_ok = lesions.count() == 1 && lesions.sizes[0] == 1000;
  const bool at_299 = nd::label_patch(patch, moved);
  return {at_30 && !at_299 && construction_ok,
          fmt("30.0%% -> %s, 29.9%% (coverage 19.9%%) -> %s", at_30 ? "positive" : "negative",
              at_299 ? "positive" : "negative")};
}

Outcome quantile_sandwich() {
  nd::Rng rng(12);
  std::size_t checks = 0, violations = 0;
  for (int d = 0; d < 10; ++d) {
    std::vector<float> s(static_cast<std::size_t>(rng.uniform_int(50, 5000)));
    const bool coarse = d % 3 == 0;
    for (auto& v : s) v = coarse ? static_cast<float>(rng.uniform_int(0, 5)) : static_cast<float>(rng.normal());
    for (double q : {0.5, 0.05, 0.005}) {
      ++checks;
      const float t = nd::compute_threshold(s, q);
      bool ok = oracle::fraction_above(s, t) <= q;
      const float lower = oracle::next_lower_sample(s, t);
      if (lower < t) ok = ok && oracle::fraction_above(s, lower) > q;
      violations += ok ? 0 : 1;
    }
  }
  return {violations == 0, fmt("%zu distribution/quantile pairs, %zu violations", checks, violations)};
}

struct PipelineRun {
  fs::path root;
  fs::path model_prefix() const { return root / "model" / "dissectnet"; }
  fs::path catalog_dir() const { return root / "dissect"; }
  std::optional<double> val_auc;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const fs::path& root) {
  PipelineRun p;
  p.root = root;
  fs::remove_all(root);
  fs::create_directories(root);
  const auto t0 = Clock::now();
  require_ok(run({"gen-data", "--out", (root / "corpus").string(), "--cases", "200", "--seed", "7"}), "gen-data");
  const RunResult train = run({"train", "--index", (root / "corpus").string(), "--out-model",
                               p.model_prefix().string(), "--seed", "7", "--epochs", "10"});
  require_ok(train, "train");
  std::smatch m;
  if (std::regex_search(train.output, m, std::regex(R"(validation AUC: ([0-9.]+))"))) p.val_auc = std::stod(m[1].str());
  require_ok(run({"dissect", "--model", p.model_prefix().string(), "--index", (root / "corpus").string(), "--out",
                  p.catalog_dir().string(), "--layer", "conv3", "--k", "12", "--quantile", "0.005"}),
             "dissect");
  p.seconds = seconds_since(t0);
  return p;
}

Outcome end_to_end(const PipelineRun& p) {
  std::vector<std::string> problems;
  if (!p.val_auc) problems.push_back("no validation AUC reported");
  if (p.val_auc && *p.val_auc < 0.85) problems.push_back(fmt("validation AUC %.4f < 0.85", *p.val_auc));
  if (p.seconds >= 600.0) problems.push_back(fmt("wall time %.0f s >= 600 s", p.seconds));
  const auto montages = montages_in(p.catalog_dir());
  if (montages.size() != 32) problems.push_back(fmt("%zu montages", montages.size()));
  std::size_t units = 0;
  try {
    const nd::Catalog cat = nd::read_catalog(p.catalog_dir());
    nd::validate_catalog(cat);
    units = cat.units.size();
    if (units != 32) problems.push_back(fmt("%zu catalog units", units));
    for (const auto& u : cat.units) {
      if (u.patches.size() != 12) problems.push_back(u.unit_id + " has " + std::to_string(u.patches.size()) + " patches");
      if (!fs::is_regular_file(p.catalog_dir() / u.montage)) problems.push_back(u.unit_id + " montage missing");
    }
    if (cat.k != 12 || cat.quantile != 0.005 || cat.layer_id != "conv3") problems.push_back("catalog parameters");
  } catch (const std::exception& e) {
    problems.push_back(std::string("catalog invalid: ") + e.what());
  }
  std::string detail = fmt("val AUC %.4f, %zu units, %zu montages, %.0f s", p.val_auc.value_or(-1.0), units,
                           montages.size(), p.seconds);
  if (!problems.empty()) detail += "; " + problems.front();
  return {problems.empty(), detail};
}

Outcome dissection_sanity(const PipelineRun& p) {
  const nd::Catalog cat = nd::read_catalog(p.catalog_dir());
  double best = 0.0;
  std::string best_unit;
  bool consistent = true;
  for (const auto& u : cat.units) {
    std::size_t pos = 0;
    for (const auto& patch : u.patches) pos += patch.label ? 1 : 0;
    consistent = consistent && pos == u.top_positives;
    const double frac = u.patches.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(u.patches.size());
    if (frac > best) {
      best = frac;
      best_unit = u.unit_id;
    }
  }
  return {best >= 0.75 && consistent,
          fmt("best unit %s: %.0f%% of top-%zu cancer-positive (%s split)", best_unit.c_str(), 100.0 * best, cat.k,
              cat.split.c_str())};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  std::vector<std::pair<fs::path, fs::path>> files;
  for (const char* ext : {".netm", ".netw"}) {
    files.push_back({a.model_prefix().string() + ext, b.model_prefix().string() + ext});
  }
  files.push_back({a.catalog_dir() / "catalog.json", b.catalog_dir() / "catalog.json"});
  const auto ma = montages_in(a.catalog_dir());
  for (const auto& m : ma) files.push_back({m, b.catalog_dir() / m.filename()});
  std::size_t differing = 0;
  std::string first;
  for (const auto& [x, y] : files) {
    if (!fs::exists(y) || slurp(x) != slurp(y)) {
      if (differing++ == 0) first = x.filename().string();
    }
  }
  if (montages_in(b.catalog_dir()).size() != ma.size()) ++differing;
  std::string detail = fmt("%zu files compared (model pair, catalog, %zu montages), %zu differ", files.size(),
                           ma.size(), differing);
  if (differing) detail += "; first: " + first;
  return {differing == 0 && !ma.empty(), detail};
}

std::size_t complete_units(httplib::Client& cli, const std::string& reader) {
  auto res = cli.Get(("/api/units?reader=" + reader).c_str());
  if (!res || res->status != 200) throw std::runtime_error("GET /api/units failed");
  const json listed = json::parse(res->body);
  std::size_t n = 0;
  for (const auto& u : listed["units"]) n += u["complete"].get<bool>() ? 1 : 0;
  return n;
}

json live_report(httplib::Client& cli) {
  auto res = cli.Get("/api/report");
  if (!res || res->status != 200) throw std::runtime_error("GET /api/report failed");
  return json::parse(res->body);
}

Outcome durability(const PipelineRun& p) {
  const fs::path log = p.root / "survey" / "annotations.jsonl";
  fs::create_directories(log.parent_path());
  fs::remove(log);
  const nd::Catalog cat = nd::read_catalog(p.catalog_dir());
  if (cat.survey.size() < 2) return {false, "catalog survey lists fewer than two units"};

  const std::string reader = "reader-a";
  const json first{{"reader_id", reader},
                   {"recognizable", true},
                   {"phenomena",
                    {{{"description", "Calcified vessels"},
                      {"lexicon_category", "calcification"},
                      {"cancer_association", "malignant"}}}}};
  const std::string second_id = "3f2b8c1e-9d4a-4e6b-8a1f-2c7d5e9b0a64";
  const json second{{"reader_id", reader}, {"recognizable", false}, {"phenomena", json::array()},
                    {"annotation_id", second_id}};
  const std::string second_path = "/api/units/" + cat.survey[1] + "/annotations";

  json report_before;
  std::string acknowledged;
  {
    ServeProcess server(p.catalog_dir(), log);
    httplib::Client cli("127.0.0.1", server.port());
    auto r1 = cli.Post(("/api/units/" + cat.survey[0] + "/annotations").c_str(), first.dump(), "application/json");
    if (!r1 || r1->status != 201) return {false, "first annotation not accepted"};
    auto r2 = cli.Post(second_path.c_str(), second.dump(), "application/json");
    if (!r2 || r2->status != 201) return {false, "second annotation not accepted"};
    // Killed the moment the 201 is in hand; nothing else runs in between.
    server.kill9();
    acknowledged = r2->body;
  }
  {
    // What the service should report: the offline computation over the log
    // as the killed process left it.
    const RunResult offline = run({"report", "--log", log.string(), "--lexicon", ND_ACCEPTANCE_LEXICON, "--out",
                                   (p.root / "survey" / "report.json").string()});
    require_ok(offline, "report");
    report_before = json::parse(slurp(p.root / "survey" / "report.json"));
  }

  ServeProcess restarted(p.catalog_dir(), log);
  httplib::Client cli("127.0.0.1", restarted.port());
  const std::size_t complete_after = complete_units(cli, reader);
  const json report_after = live_report(cli);
  auto replay = cli.Post(second_path.c_str(), second.dump(), "application/json");
  const bool replay_ok = replay && replay->status == 200 && replay->body == acknowledged;
  const std::size_t expected_complete = 2;
  const bool counts_ok = report_after == report_before && report_after["annotation_count"] == 2 &&
                         report_after["unrecognizable_units"] == 1;
  return {complete_after == expected_complete && replay_ok && counts_ok,
          fmt("after kill -9 and restart: %zu/%zu units complete for the reader, acknowledged annotation %s, report %s",
              complete_after, expected_complete, replay_ok ? "replays identically" : "MISSING",
              counts_ok ? "unchanged" : "CHANGED")};
}

int report_line(const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  return o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  bool keep = false;
  for (int i = 1; i < argc; ++i) keep = keep || std::strcmp(argv[i], "--keep") == 0;
  const fs::path work = fs::temp_directory_path() / ("nd_acceptance_" + std::to_string(getpid()));
  fs::create_directories(work);

  int failures = 0;
  failures += report_line("gradient_correctness", gradient_correctness);
  failures += report_line("oracle_equivalence", oracle_equivalence);
  failures += report_line("labeling_boundary", labeling_boundary);
  failures += report_line("quantile_sandwich", quantile_sandwich);

  std::optional<PipelineRun> first;
  std::string pipeline_error;
  try {
    first = run_pipeline(work / "run1");
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto needs_first = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!first) return {false, "pipeline failed: " + pipeline_error};
      return fn(*first);
    };
  };
  failures += report_line("end_to_end", needs_first(end_to_end));
  failures += report_line("dissection_sanity", needs_first(dissection_sanity));
  failures += report_line("determinism", needs_first([&](const PipelineRun& a) {
                            const PipelineRun b = run_pipeline(work / "run2");
                            return determinism(a, b);
                          }));
  failures += report_line("durability", needs_first(durability));

  if (!keep) fs::remove_all(work);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
