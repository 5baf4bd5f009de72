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

#include "dissect/catalog.hpp"

#include <json.hpp>
#include <set>

#include "common/error.hpp"
#include "common/files.hpp"

namespace nd {

using json = nlohmann::ordered_json;

const CatalogUnit* Catalog::find_unit(std::string_view id) const noexcept {
  for (const auto& u : units) {
    if (u.unit_id == id) return &u;
  }
  return nullptr;
}

std::string format_catalog(const Catalog& c) {
  json doc;
  doc["format_version"] = kCatalogFormatVersion;
  doc["model"] = {{"name", c.model_name}, {"fingerprint", c.model_fingerprint}};
  doc["layer"] = c.layer_id;
  doc["k"] = c.k;
  doc["quantile"] = c.quantile;
  doc["threshold_source"] = c.threshold_source;
  doc["split"] = c.split;
  doc["seed"] = c.seed;
  doc["patch_count"] = c.patch_count;
  doc["feature_shape"] = {c.feature_height, c.feature_width};
  json units = json::array();
  for (const auto& u : c.units) {
    json patches = json::array();
    for (const auto& p : u.patches) {
      patches.push_back({{"rank", p.rank},
                         {"score", p.score},
                         {"patch_id", p.patch_id},
                         {"case_id", p.case_id},
                         {"rect", {{"x0", p.rect.x0}, {"y0", p.rect.y0}, {"w", p.rect.w}, {"h", p.rect.h}}},
                         {"argmax", {{"row", p.argmax_row}, {"col", p.argmax_col}}},
                         {"label", p.label},
                         {"overlay", p.overlay}});
    }
    units.push_back({{"id", u.unit_id},
                     {"layer", u.layer_id},
                     {"unit_index", u.unit_index},
                     {"threshold", u.threshold},
                     {"top_positives", u.top_positives},
                     {"montage", u.montage},
                     {"patches", std::move(patches)}});
  }
  doc["units"] = std::move(units);
  doc["survey"] = c.survey;
  json cases = json::object();
  for (const auto& [id, cs] : c.cases) {
    cases[id] = {{"patient_id", cs.patient_id},
                 {"image_label", image_label_name(cs.image_label)},
                 {"width", cs.width},
                 {"height", cs.height},
                 {"image", cs.image}};
  }
  doc["cases"] = std::move(cases);
  return doc.dump(2) + "\n";
}

Catalog parse_catalog(std::string_view text) {
  try {
    const json doc = json::parse(text);
    require(doc.value("format_version", 0) == kCatalogFormatVersion, ErrorCode::kParse,
            "catalog: unsupported format_version");
    Catalog c;
    c.model_name = doc.at("model").at("name").get<std::string>();
    c.model_fingerprint = doc.at("model").value("fingerprint", "");
    c.layer_id = doc.at("layer").get<std::string>();
    c.k = doc.at("k").get<std::size_t>();
    c.quantile = doc.at("quantile").get<double>();
    c.threshold_source = doc.at("threshold_source").get<std::string>();
    c.split = doc.at("split").get<std::string>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.patch_count = doc.at("patch_count").get<std::size_t>();
    c.feature_height = doc.at("feature_shape").at(0).get<std::size_t>();
    c.feature_width = doc.at("feature_shape").at(1).get<std::size_t>();
    for (const auto& ju : doc.at("units")) {
      CatalogUnit u;
      u.unit_id = ju.at("id").get<std::string>();
      u.layer_id = ju.at("layer").get<std::string>();
      u.unit_index = ju.at("unit_index").get<std::size_t>();
      u.threshold = ju.at("threshold").get<float>();
      u.top_positives = ju.at("top_positives").get<std::size_t>();
      u.montage = ju.at("montage").get<std::string>();
      for (const auto& jp : ju.at("patches")) {
        CatalogPatch p;
        p.rank = jp.at("rank").get<std::size_t>();
        p.score = jp.at("score").get<float>();
        p.patch_id = jp.at("patch_id").get<std::string>();
        p.case_id = jp.at("case_id").get<std::string>();
        const json& r = jp.at("rect");
        p.rect = {r.at("x0").get<std::size_t>(), r.at("y0").get<std::size_t>(), r.at("w").get<std::size_t>(),
                  r.at("h").get<std::size_t>()};
        p.argmax_row = jp.at("argmax").at("row").get<std::uint32_t>();
        p.argmax_col = jp.at("argmax").at("col").get<std::uint32_t>();
        p.label = jp.at("label").get<bool>();
        p.overlay = jp.at("overlay").get<std::string>();
        u.patches.push_back(std::move(p));
      }
      c.units.push_back(std::move(u));
    }
    c.survey = doc.at("survey").get<std::vector<std::string>>();
    for (const auto& [id, jc] : doc.at("cases").items()) {
      CatalogCase cs;
      cs.case_id = id;
      cs.patient_id = jc.at("patient_id").get<std::string>();
      cs.image_label = parse_image_label(jc.at("image_label").get<std::string>());
      cs.width = jc.at("width").get<std::size_t>();
      cs.height = jc.at("height").get<std::size_t>();
      cs.image = jc.at("image").get<std::string>();
      c.cases.emplace(id, std::move(cs));
    }
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("catalog: ") + e.what());
  }
}

Catalog read_catalog(const std::filesystem::path& dir) {
  Catalog c = parse_catalog(read_file_text(dir / kCatalogFile));
  validate_catalog(c);
  return c;
}

void validate_catalog(const Catalog& c) {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::kInvalidArgument, "catalog: " + msg); };
  check(c.k >= 1, "k must be >= 1");
  check(c.quantile > 0.0 && c.quantile < 1.0, "quantile must be in (0,1)");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < c.units.size(); ++i) {
    const CatalogUnit& u = c.units[i];
    check(u.unit_index == i, "unit records must cover indices 0..n-1 in order");
    check(u.layer_id == c.layer_id, "unit " + u.unit_id + " belongs to another layer");
    check(u.unit_id == unit_id(u.layer_id, u.unit_index), "unit id '" + u.unit_id + "' does not match its index");
    check(ids.insert(u.unit_id).second, "duplicate unit id " + u.unit_id);
    check(!u.patches.empty() && u.patches.size() <= c.k, "unit " + u.unit_id + " has an invalid top-k size");
    std::size_t positives = 0;
    for (std::size_t r = 0; r < u.patches.size(); ++r) {
      const CatalogPatch& p = u.patches[r];
      check(p.rank == r, "unit " + u.unit_id + ": ranks must be consecutive");
      if (r > 0) {
        const CatalogPatch& prev = u.patches[r - 1];
        check(ranks_before(prev.score, prev.patch_id, p.score, p.patch_id),
              "unit " + u.unit_id + ": top patches out of order at rank " + std::to_string(r));
      }
      const auto it = c.cases.find(p.case_id);
      check(it != c.cases.end(), "patch " + p.patch_id + " references unknown case " + p.case_id);
      check(p.rect.w >= 1 && p.rect.h >= 1 && p.rect.x0 + p.rect.w <= it->second.width &&
                p.rect.y0 + p.rect.h <= it->second.height,
            "patch " + p.patch_id + " lies outside its source scan");
      check(p.patch_id == make_patch_id(p.case_id, p.rect), "patch id " + p.patch_id + " does not match its rect");
      check(p.argmax_row < c.feature_height && p.argmax_col < c.feature_width,
            "patch " + p.patch_id + ": argmax outside the feature map");
      positives += p.label ? 1 : 0;
    }
    check(positives == u.top_positives, "unit " + u.unit_id + ": positive count disagrees with patch labels");
  }
  std::set<std::string> seen;
  for (const auto& id : c.survey) {
    check(ids.count(id) == 1, "survey lists unknown unit " + id);
    check(seen.insert(id).second, "survey lists unit " + id + " twice");
  }
}

}  // namespace nd
