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

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "survey/annotation.hpp"

namespace nd {

using WarningSink = std::function<void(const std::string&)>;

// Immutable view of the log contents; first occurrence of an id wins.
struct AnnotationSet {
  std::vector<Annotation> annotations;  // log order, ids unique
  std::map<std::string, std::size_t> by_id;

  const Annotation* find(const std::string& annotation_id) const;
  bool reader_completed(const std::string& reader_id, const UnitRef& unit) const;
};

struct LogReadResult {
  AnnotationSet set;
  std::size_t valid_bytes = 0;  // length of the prefix made of complete records
  bool torn_tail = false;
};

// Read-only replay. A malformed or unterminated final record is dropped with
// a warning; a malformed record followed by valid ones is a kParse error.
// An absent file is an empty set.
LogReadResult read_annotation_log(const std::filesystem::path& path, const WarningSink& warn = {});

enum class AppendOutcome { kCreated, kReplayed };

struct AppendResult {
  AppendOutcome outcome = AppendOutcome::kCreated;
  Annotation stored;
};

// Single-writer append-only log. Opening truncates a torn tail. Each append
// is written with one write(2) on an O_APPEND descriptor and fsync'd before
// returning. Readers take snapshots that never change underneath them.
class AnnotationLog {
 public:
  explicit AnnotationLog(std::filesystem::path path, const WarningSink& warn = {});
  ~AnnotationLog();
  AnnotationLog(const AnnotationLog&) = delete;
  AnnotationLog& operator=(const AnnotationLog&) = delete;

  // Replaying an existing id with the same content returns the stored record;
  // different content throws kConflict.
  AppendResult append(const Annotation& annotation);

  std::shared_ptr<const AnnotationSet> snapshot() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex write_mutex_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const AnnotationSet> snapshot_;
};

}  // namespace nd
