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

#include "survey/annotation_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "common/error.hpp"
#include "common/files.hpp"

namespace nd {

namespace fs = std::filesystem;

const Annotation* AnnotationSet::find(const std::string& annotation_id) const {
  const auto it = by_id.find(annotation_id);
  return it == by_id.end() ? nullptr : &annotations[it->second];
}

bool AnnotationSet::reader_completed(const std::string& reader_id, const UnitRef& unit) const {
  for (const auto& a : annotations) {
    if (a.reader_id == reader_id && a.unit_ref == unit) return true;
  }
  return false;
}

namespace {

void add_first(AnnotationSet& set, Annotation a) {
  if (set.by_id.count(a.annotation_id) != 0) return;
  set.by_id.emplace(a.annotation_id, set.annotations.size());
  set.annotations.push_back(std::move(a));
}

}  // namespace

LogReadResult read_annotation_log(const fs::path& path, const WarningSink& warn) {
  LogReadResult out;
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  const std::string text = read_file_text(path);
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::size_t end = terminated ? nl : text.size();
    const std::string_view line(text.data() + pos, end - pos);
    const bool last = !terminated || nl + 1 == text.size();
    bool ok = terminated;
    Annotation a;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      ok = terminated;
    } else if (terminated) {
      try {
        a = annotation_from_json(line);
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok) {
      require(last, ErrorCode::kParse,
              "annotation log '" + path.string() + "': corrupt record at line " + std::to_string(line_no) +
                  " followed by further records");
      out.torn_tail = true;
      if (warn) {
        warn("annotation log '" + path.string() + "': dropping incomplete final record at line " +
             std::to_string(line_no) + " (" + std::to_string(text.size() - pos) + " bytes)");
      }
      break;
    }
    if (!a.annotation_id.empty()) add_first(out.set, std::move(a));
    pos = end + 1;
    out.valid_bytes = pos;
  }
  return out;
}

AnnotationLog::AnnotationLog(fs::path path, const WarningSink& warn) : path_(std::move(path)) {
  if (path_.has_parent_path()) ensure_directory(path_.parent_path());
  LogReadResult loaded = read_annotation_log(path_, warn);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  require(fd_ >= 0, ErrorCode::kIo, "cannot open annotation log '" + path_.string() + "': " + std::strerror(errno));
  if (loaded.torn_tail) {
    if (::ftruncate(fd_, static_cast<off_t>(loaded.valid_bytes)) != 0 || ::fsync(fd_) != 0) {
      const std::string reason = std::strerror(errno);
      ::close(fd_);
      fail(ErrorCode::kIo, "cannot truncate torn tail of '" + path_.string() + "': " + reason);
    }
  }
  snapshot_ = std::make_shared<const AnnotationSet>(std::move(loaded.set));
}

AnnotationLog::~AnnotationLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<const AnnotationSet> AnnotationLog::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

AppendResult AnnotationLog::append(const Annotation& annotation) {
  require(is_uuid(annotation.annotation_id), ErrorCode::kInvalidArgument, "annotation_id must be a UUID");
  std::lock_guard lock(write_mutex_);
  const auto current = snapshot();
  if (const Annotation* existing = current->find(annotation.annotation_id)) {
    require(existing->same_content(annotation), ErrorCode::kConflict,
            "annotation " + annotation.annotation_id + " already exists with different content");
    return {AppendOutcome::kReplayed, *existing};
  }
  const std::string line = annotation_to_json(annotation) + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    require(n > 0, ErrorCode::kIo, "annotation log write failed: " + std::string(std::strerror(errno)));
    written += static_cast<std::size_t>(n);
  }
  require(::fsync(fd_) == 0, ErrorCode::kIo, "annotation log fsync failed: " + std::string(std::strerror(errno)));
  auto next = std::make_shared<AnnotationSet>(*current);
  add_first(*next, annotation);
  {
    std::lock_guard slock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }
  return {AppendOutcome::kCreated, annotation};
}

}  // namespace nd
