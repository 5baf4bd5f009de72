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

#include "survey/annotation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <json.hpp>
#include <mutex>
#include <random>

#include "common/error.hpp"

namespace nd {

using json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 4> kAssociations = {"benign", "malignant", "unclear", "none"};
constexpr std::size_t kMaxReaderId = 128;
constexpr std::size_t kMaxDescription = 4000;

bool known_association(std::string_view s) {
  for (auto a : kAssociations) {
    if (a == s) return true;
  }
  return false;
}

json to_json(const Annotation& a) {
  json phenomena = json::array();
  for (const auto& p : a.phenomena) {
    phenomena.push_back({{"description", p.description},
                         {"lexicon_category", p.lexicon_category},
                         {"cancer_association", p.cancer_association}});
  }
  return json{{"annotation_id", a.annotation_id},
              {"unit_ref", {{"model", a.unit_ref.model}, {"layer", a.unit_ref.layer}, {"unit_index", a.unit_ref.unit_index}}},
              {"reader_id", a.reader_id},
              {"recognizable", a.recognizable},
              {"phenomena", std::move(phenomena)},
              {"timestamp", a.timestamp}};
}

}  // namespace

std::string UnitRef::key() const { return model + "/" + layer + "/" + std::to_string(unit_index); }

bool Annotation::same_content(const Annotation& o) const {
  return annotation_id == o.annotation_id && unit_ref == o.unit_ref && reader_id == o.reader_id &&
         recognizable == o.recognizable && phenomena == o.phenomena;
}

bool is_uuid(std::string_view t) noexcept {
  if (t.size() != 36) return false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool dash = i == 8 || i == 13 || i == 18 || i == 23;
    if (dash ? t[i] != '-' : !std::isxdigit(static_cast<unsigned char>(t[i]))) return false;
  }
  return true;
}

std::string generate_uuid_v4() {
  static std::mutex mutex;
  static std::mt19937_64 engine{std::random_device{}()};
  std::uint64_t hi, lo;
  {
    std::lock_guard lock(mutex);
    hi = engine();
    lo = engine();
  }
  hi = (hi & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;
  lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::vector<ValidationIssue> validate_annotation(const Annotation& a, const Lexicon& lexicon) {
  std::vector<ValidationIssue> issues;
  if (a.reader_id.empty() || a.reader_id.size() > kMaxReaderId) {
    issues.push_back({"reader_id", "must be a non-empty string of at most 128 bytes"});
  }
  if (!a.annotation_id.empty() && !is_uuid(a.annotation_id)) {
    issues.push_back({"annotation_id", "must be a UUID string"});
  }
  if (!a.recognizable && !a.phenomena.empty()) {
    issues.push_back({"phenomena", "must be empty when recognizable is false"});
  }
  if (a.recognizable && a.phenomena.empty()) {
    issues.push_back({"phenomena", "at least one phenomenon is required when recognizable is true"});
  }
  for (std::size_t i = 0; i < a.phenomena.size(); ++i) {
    const Phenomenon& p = a.phenomena[i];
    const std::string at = "phenomena[" + std::to_string(i) + "].";
    if (p.description.find_first_not_of(" \t\r\n") == std::string::npos || p.description.size() > kMaxDescription) {
      issues.push_back({at + "description", "must be non-empty text of at most 4000 bytes"});
    }
    if (p.lexicon_category != Lexicon::kNone && !lexicon.contains(p.lexicon_category)) {
      issues.push_back({at + "lexicon_category", "unknown lexicon category '" + p.lexicon_category + "'"});
    }
    if (!known_association(p.cancer_association)) {
      issues.push_back({at + "cancer_association", "must be one of benign, malignant, unclear, none"});
    }
  }
  return issues;
}

ParsedSubmission parse_submission(std::string_view body, const UnitRef& unit, const Lexicon& lexicon) {
  ParsedSubmission out;
  auto issue = [&](std::string field, std::string msg) { out.issues.push_back({std::move(field), std::move(msg)}); };
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    issue("body", "not valid JSON");
    return out;
  }
  if (!doc.is_object()) {
    issue("body", "must be a JSON object");
    return out;
  }
  Annotation& a = out.annotation;
  a.unit_ref = unit;
  for (const auto& [key, value] : doc.items()) {
    if (key == "annotation_id") {
      if (value.is_string()) a.annotation_id = value.get<std::string>();
      if (!value.is_string() || !is_uuid(a.annotation_id)) issue(key, "must be a UUID string");
    } else if (key == "reader_id") {
      if (value.is_string()) a.reader_id = value.get<std::string>();
      else issue(key, "must be a string");
    } else if (key == "recognizable") {
      if (value.is_boolean()) a.recognizable = value.get<bool>();
      else issue(key, "must be a boolean");
    } else if (key == "timestamp") {
      if (value.is_string() && !value.get<std::string>().empty() && value.get<std::string>().size() <= 64) {
        a.timestamp = value.get<std::string>();
      } else {
        issue(key, "must be a non-empty string");
      }
    } else if (key == "unit_ref") {
      const bool ok = value.is_object() && value.value("model", "") == unit.model &&
                      value.value("layer", "") == unit.layer && value.contains("unit_index") &&
                      value["unit_index"].is_number_unsigned() &&
                      value["unit_index"].get<std::size_t>() == unit.unit_index;
      if (!ok) issue(key, "does not match the unit in the request path");
    } else if (key == "phenomena") {
      if (!value.is_array()) {
        issue(key, "must be an array");
        continue;
      }
      for (std::size_t i = 0; i < value.size(); ++i) {
        const json& p = value[i];
        const std::string at = "phenomena[" + std::to_string(i) + "]";
        if (!p.is_object()) {
          issue(at, "must be an object");
          continue;
        }
        Phenomenon ph;
        for (const auto& [pk, pv] : p.items()) {
          std::string* slot = pk == "description"          ? &ph.description
                              : pk == "lexicon_category"   ? &ph.lexicon_category
                              : pk == "cancer_association" ? &ph.cancer_association
                                                           : nullptr;
          if (slot == nullptr) {
            issue(at + "." + pk, "unknown field");
          } else if (!pv.is_string()) {
            issue(at + "." + pk, "must be a string");
          } else {
            *slot = pv.get<std::string>();
          }
        }
        if (!p.contains("lexicon_category")) ph.lexicon_category = std::string(Lexicon::kNone);
        if (!p.contains("cancer_association")) issue(at + ".cancer_association", "is required");
        a.phenomena.push_back(std::move(ph));
      }
    } else {
      issue(key, "unknown field");
    }
  }
  if (!doc.contains("reader_id")) issue("reader_id", "is required");
  if (!doc.contains("recognizable")) issue("recognizable", "is required");
  for (auto& i : validate_annotation(a, lexicon)) {
    const bool duplicate = std::any_of(out.issues.begin(), out.issues.end(),
                                       [&](const ValidationIssue& seen) { return seen.field == i.field; });
    if (!duplicate) out.issues.push_back(std::move(i));
  }
  return out;
}

std::string annotation_to_json(const Annotation& a) { return to_json(a).dump(); }

Annotation annotation_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    Annotation a;
    a.annotation_id = doc.at("annotation_id").get<std::string>();
    const json& ref = doc.at("unit_ref");
    a.unit_ref = {ref.at("model").get<std::string>(), ref.at("layer").get<std::string>(),
                  ref.at("unit_index").get<std::size_t>()};
    a.reader_id = doc.at("reader_id").get<std::string>();
    a.recognizable = doc.at("recognizable").get<bool>();
    for (const auto& p : doc.at("phenomena")) {
      a.phenomena.push_back({p.at("description").get<std::string>(), p.at("lexicon_category").get<std::string>(),
                             p.at("cancer_association").get<std::string>()});
    }
    a.timestamp = doc.value("timestamp", "");
    require(!a.annotation_id.empty() && !a.reader_id.empty(), ErrorCode::kParse, "annotation record: empty id");
    return a;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("annotation record: ") + e.what());
  }
}

}  // namespace nd
