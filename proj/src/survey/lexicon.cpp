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

#include "survey/lexicon.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "common/error.hpp"
#include "common/files.hpp"

namespace nd {

using json = nlohmann::ordered_json;

Lexicon::Lexicon(std::vector<LexiconCategory> categories) : categories_(std::move(categories)) {
  std::set<std::string> ids;
  for (const auto& c : categories_) {
    require(!c.id.empty() && !c.group.empty(), ErrorCode::kInvalidArgument, "lexicon: empty id or group");
    require(c.id != kNone, ErrorCode::kInvalidArgument, "lexicon: 'none' is reserved");
    require(ids.insert(c.id).second, ErrorCode::kInvalidArgument, "lexicon: duplicate id '" + c.id + "'");
    if (std::find(groups_.begin(), groups_.end(), c.group) == groups_.end()) groups_.push_back(c.group);
  }
}

const LexiconCategory* Lexicon::find(std::string_view id) const noexcept {
  for (const auto& c : categories_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::string Lexicon::group_display_name(std::string_view group) const {
  const LexiconCategory* c = find(group);
  return c != nullptr && c->group == group ? c->display_name : std::string(group);
}

Lexicon parse_lexicon(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("lexicon: ") + e.what());
  }
  require(doc.is_array(), ErrorCode::kParse, "lexicon: expected a JSON array of categories");
  std::vector<LexiconCategory> cats;
  for (const auto& item : doc) {
    require(item.is_object() && item.contains("id") && item["id"].is_string() && item.contains("group") &&
                item["group"].is_string(),
            ErrorCode::kParse, "lexicon: every entry needs string id and group");
    LexiconCategory c;
    c.id = item["id"].get<std::string>();
    c.group = item["group"].get<std::string>();
    c.display_name = item.contains("display_name") && item["display_name"].is_string()
                         ? item["display_name"].get<std::string>()
                         : c.id;
    cats.push_back(std::move(c));
  }
  return Lexicon(std::move(cats));
}

Lexicon read_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file_text(path)); }

std::string format_lexicon(const Lexicon& lexicon) {
  json out = json::array();
  for (const auto& c : lexicon.categories()) {
    out.push_back({{"id", c.id}, {"display_name", c.display_name}, {"group", c.group}});
  }
  return out.dump();
}

}  // namespace nd
