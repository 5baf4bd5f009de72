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
#include <string>
#include <string_view>
#include <vector>

namespace nd {

struct LexiconCategory {
  std::string id;
  std::string display_name;
  std::string group;
};

// Ordered BI-RADS-style vocabulary. Each group is listed in order of first
// appearance; a category whose id equals its group names the group itself.
class Lexicon {
 public:
  static constexpr std::string_view kNone = "none";

  Lexicon() = default;
  explicit Lexicon(std::vector<LexiconCategory> categories);

  const std::vector<LexiconCategory>& categories() const noexcept { return categories_; }
  const std::vector<std::string>& groups() const noexcept { return groups_; }
  const LexiconCategory* find(std::string_view id) const noexcept;
  bool contains(std::string_view id) const noexcept { return find(id) != nullptr; }
  std::string group_display_name(std::string_view group) const;

 private:
  std::vector<LexiconCategory> categories_;
  std::vector<std::string> groups_;
};

// JSON array of {id, display_name, group}.
Lexicon parse_lexicon(std::string_view text);
Lexicon read_lexicon(const std::filesystem::path& path);
std::string format_lexicon(const Lexicon& lexicon);

}  // namespace nd
