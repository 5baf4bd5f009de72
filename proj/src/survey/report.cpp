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

#include "survey/report.hpp"

#include <cstdio>
#include <json.hpp>
#include <map>
#include <set>

namespace nd {

using json = nlohmann::ordered_json;

std::string truncate_codepoints(const std::string& text, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if ((byte & 0xC0) != 0x80) {
      if (count == n) return text.substr(0, i);
      ++count;
    }
  }
  return text;
}

LexiconReport build_report(const AnnotationSet& set, const Lexicon& lexicon) {
  LexiconReport report;
  std::map<std::string, std::size_t> group_index;
  for (const auto& g : lexicon.groups()) {
    group_index.emplace(g, report.groups.size());
    report.groups.push_back({g, lexicon.group_display_name(g), 0, {}});
  }
  report.uncategorized = {"uncategorized", "No lexicon category", 0, {}};

  std::vector<std::set<UnitRef>> group_units(report.groups.size());
  std::set<UnitRef> uncategorized_units, units, unrecognizable, entangled;
  std::set<std::string> readers;
  for (const auto& a : set.annotations) {
    units.insert(a.unit_ref);
    readers.insert(a.reader_id);
    if (!a.recognizable) unrecognizable.insert(a.unit_ref);
    if (a.phenomena.size() >= 2) entangled.insert(a.unit_ref);
    for (const auto& p : a.phenomena) {
      ReportRow row{a.unit_ref, truncate_codepoints(p.description, kSummaryCodepoints), a.reader_id,
                    p.lexicon_category, p.cancer_association};
      const LexiconCategory* cat = lexicon.find(p.lexicon_category);
      if (cat == nullptr) {
        uncategorized_units.insert(a.unit_ref);
        report.uncategorized.rows.push_back(std::move(row));
      } else {
        const std::size_t g = group_index.at(cat->group);
        group_units[g].insert(a.unit_ref);
        report.groups[g].rows.push_back(std::move(row));
      }
    }
  }
  for (std::size_t g = 0; g < report.groups.size(); ++g) report.groups[g].unit_count = group_units[g].size();
  report.uncategorized.unit_count = uncategorized_units.size();
  report.annotation_count = set.annotations.size();
  report.annotated_units = units.size();
  report.reader_count = readers.size();
  report.unrecognizable_units = unrecognizable.size();
  report.entangled_units = entangled.size();
  return report;
}

namespace {

json group_json(const GroupReport& g) {
  json rows = json::array();
  for (const auto& r : g.rows) {
    rows.push_back({{"unit", r.unit.key()},
                    {"unit_ref", {{"model", r.unit.model}, {"layer", r.unit.layer}, {"unit_index", r.unit.unit_index}}},
                    {"summary", r.summary},
                    {"reader_id", r.reader_id},
                    {"lexicon_category", r.lexicon_category},
                    {"cancer_association", r.cancer_association}});
  }
  return {{"group", g.group}, {"display_name", g.display_name}, {"unit_count", g.unit_count}, {"rows", rows}};
}

}  // namespace

std::string report_to_json(const LexiconReport& r) {
  json doc;
  doc["annotation_count"] = r.annotation_count;
  doc["annotated_units"] = r.annotated_units;
  doc["reader_count"] = r.reader_count;
  doc["unrecognizable_units"] = r.unrecognizable_units;
  doc["entangled_units"] = r.entangled_units;
  json groups = json::array();
  for (const auto& g : r.groups) groups.push_back(group_json(g));
  doc["groups"] = std::move(groups);
  doc["uncategorized"] = group_json(r.uncategorized);
  return doc.dump(2) + "\n";
}

std::string report_to_table(const LexiconReport& r) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "annotations: %zu   annotated units: %zu   readers: %zu\n", r.annotation_count,
                r.annotated_units, r.reader_count);
  out += line;
  std::snprintf(line, sizeof line, "unrecognizable units: %zu   entangled units: %zu\n\n", r.unrecognizable_units,
                r.entangled_units);
  out += line;
  std::snprintf(line, sizeof line, "%-32s %6s\n", "group", "units");
  out += line;
  auto count_line = [&](const GroupReport& g) {
    std::snprintf(line, sizeof line, "%-32s %6zu\n", g.display_name.c_str(), g.unit_count);
    out += line;
  };
  for (const auto& g : r.groups) count_line(g);
  count_line(r.uncategorized);
  auto rows = [&](const GroupReport& g) {
    if (g.rows.empty()) return;
    out += "\n[" + g.display_name + "]\n";
    std::snprintf(line, sizeof line, "%-28s %-16s %-10s %s\n", "unit", "reader", "cancer", "description");
    out += line;
    for (const auto& row : g.rows) {
      std::snprintf(line, sizeof line, "%-28s %-16s %-10s ", row.unit.key().c_str(), row.reader_id.c_str(),
                    row.cancer_association.c_str());
      out += line;
      out += row.summary;
      out += '\n';
    }
  };
  for (const auto& g : r.groups) rows(g);
  rows(r.uncategorized);
  return out;
}

}  // namespace nd
