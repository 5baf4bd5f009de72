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

#include "survey/service.hpp"

#include <httplib.h>

#include <algorithm>

#include <json.hpp>

#include "common/error.hpp"
#include "survey/report.hpp"

namespace nd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct SurveyService::Server {
  httplib::Server http;
};

namespace {

constexpr char kJson[] = "application/json";

SurveyService::Response error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

std::string asset_url(const std::string& relative) { return "/assets/" + relative; }

UnitRef unit_ref_of(const Catalog& c, const CatalogUnit& u) { return {c.model_name, u.layer_id, u.unit_index}; }

bool in_survey(const Catalog& c, const std::string& id) {
  return std::find(c.survey.begin(), c.survey.end(), id) != c.survey.end();
}

json annotation_json(const Annotation& a) { return json::parse(annotation_to_json(a)); }

}  // namespace

SurveyService::SurveyService(ServiceConfig config, WarningSink warn)
    : config_(std::move(config)), warn_(std::move(warn)) {
  std::error_code ec;
  require(fs::is_regular_file(config_.lexicon_path, ec), ErrorCode::kNotFound,
          "lexicon file '" + config_.lexicon_path.string() + "' does not exist");
  lexicon_ = read_lexicon(config_.lexicon_path);
  require(fs::is_directory(config_.catalog_dir, ec), ErrorCode::kNotFound,
          "catalog directory '" + config_.catalog_dir.string() + "' does not exist");
  log_ = std::make_unique<AnnotationLog>(config_.log_path, warn_);
  catalog();
}

SurveyService::~SurveyService() = default;

std::shared_ptr<const Catalog> SurveyService::catalog() {
  std::lock_guard lock(catalog_mutex_);
  if (catalog_) return catalog_;
  std::error_code ec;
  if (!fs::exists(config_.catalog_dir / kCatalogFile, ec)) return nullptr;
  try {
    catalog_ = std::make_shared<const Catalog>(read_catalog(config_.catalog_dir));
  } catch (const Error& e) {
    if (catalog_error_ != e.what() && warn_) warn_(std::string("catalog not loaded: ") + e.what());
    catalog_error_ = e.what();
  }
  return catalog_;
}

SurveyService::Response SurveyService::get_health() {
  const auto c = catalog();
  json body{{"status", "ok"},
            {"catalog_loaded", c != nullptr},
            {"units", c ? c->units.size() : 0},
            {"survey_units", c ? c->survey.size() : 0},
            {"annotations", log_->snapshot()->annotations.size()}};
  return {200, body.dump()};
}

SurveyService::Response SurveyService::get_units(const std::string& reader) {
  const auto c = catalog();
  if (!c) return error_response(503, "catalog not loaded");
  const auto snap = log_->snapshot();
  json units = json::array();
  for (const auto& id : c->survey) {
    const CatalogUnit& u = *c->find_unit(id);
    const bool complete = !reader.empty() && snap->reader_completed(reader, unit_ref_of(*c, u));
    units.push_back({{"id", u.unit_id},
                     {"layer", u.layer_id},
                     {"unit_index", u.unit_index},
                     {"montage", asset_url(u.montage)},
                     {"complete", complete}});
  }
  json body{{"model", c->model_name}, {"reader", reader}, {"units", std::move(units)}};
  return {200, body.dump()};
}

SurveyService::Response SurveyService::get_unit(const std::string& id, const std::string& reader) {
  const auto c = catalog();
  if (!c) return error_response(503, "catalog not loaded");
  if (!in_survey(*c, id)) return error_response(404, "unit '" + id + "' is not part of the survey");
  const CatalogUnit& u = *c->find_unit(id);
  const UnitRef ref = unit_ref_of(*c, u);
  json patches = json::array();
  for (const auto& p : u.patches) {
    const CatalogCase& cs = c->cases.at(p.case_id);
    patches.push_back({{"rank", p.rank},
                       {"score", p.score},
                       {"patch_id", p.patch_id},
                       {"case_id", p.case_id},
                       {"rect", {{"x0", p.rect.x0}, {"y0", p.rect.y0}, {"w", p.rect.w}, {"h", p.rect.h}}},
                       {"argmax", {{"row", p.argmax_row}, {"col", p.argmax_col}}},
                       {"overlay", asset_url(p.overlay)},
                       {"context", {{"image", asset_url(cs.image)}, {"width", cs.width}, {"height", cs.height}}}});
  }
  const auto snap = log_->snapshot();
  json mine = json::array();
  if (!reader.empty()) {
    for (const auto& a : snap->annotations) {
      if (a.reader_id == reader && a.unit_ref == ref) mine.push_back(annotation_json(a));
    }
  }
  json body{{"id", u.unit_id},
            {"unit_ref", {{"model", ref.model}, {"layer", ref.layer}, {"unit_index", ref.unit_index}}},
            {"threshold", u.threshold},
            {"montage", asset_url(u.montage)},
            {"patches", std::move(patches)},
            {"complete", !mine.empty()},
            {"annotations", std::move(mine)}};
  return {200, body.dump()};
}

SurveyService::Response SurveyService::get_lexicon() {
  json groups = json::array();
  for (const auto& g : lexicon_.groups()) groups.push_back({{"id", g}, {"display_name", lexicon_.group_display_name(g)}});
  json body{{"groups", std::move(groups)}, {"categories", json::parse(format_lexicon(lexicon_))}};
  return {200, body.dump()};
}

SurveyService::Response SurveyService::get_report() {
  return {200, report_to_json(build_report(*log_->snapshot(), lexicon_))};
}

SurveyService::Response SurveyService::post_annotation(const std::string& id, const std::string& body) {
  const auto c = catalog();
  if (!c) return error_response(503, "catalog not loaded");
  if (!in_survey(*c, id)) return error_response(404, "unit '" + id + "' is not part of the survey");
  const UnitRef ref = unit_ref_of(*c, *c->find_unit(id));
  ParsedSubmission parsed = parse_submission(body, ref, lexicon_);
  if (!parsed.issues.empty()) {
    json issues = json::array();
    for (const auto& i : parsed.issues) issues.push_back({{"field", i.field}, {"message", i.message}});
    return {400, json{{"error", "invalid annotation"}, {"issues", std::move(issues)}}.dump()};
  }
  Annotation& a = parsed.annotation;
  if (a.annotation_id.empty()) a.annotation_id = generate_uuid_v4();
  if (a.timestamp.empty()) a.timestamp = utc_timestamp_now();
  try {
    const AppendResult result = log_->append(a);
    return {result.outcome == AppendOutcome::kCreated ? 201 : 200, annotation_to_json(result.stored)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConflict) return error_response(409, e.what());
    return error_response(500, e.what());
  }
}

void SurveyService::listen(const std::string& host, int port, const std::function<void(int)>& on_ready) {
  require(port >= 0 && port <= 65535, ErrorCode::kInvalidArgument, "port must be in [0, 65535]");
  server_ = std::make_unique<Server>();
  httplib::Server& http = server_->http;
  http.set_payload_max_length(1 << 20);
  require(http.set_mount_point("/assets", config_.catalog_dir.string()), ErrorCode::kIo,
          "cannot serve assets from '" + config_.catalog_dir.string() + "'");
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, kJson);
  };
  auto guarded = [this, send](auto&& fn) {
    return [this, send, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        send(res, fn(req));
      } catch (const std::exception& e) {
        if (warn_) warn_(std::string("request failed: ") + e.what());
        send(res, error_response(500, e.what()));
      }
    };
  };
  auto reader_of = [](const httplib::Request& req) {
    return req.has_param("reader") ? req.get_param_value("reader") : std::string();
  };
  http.Get("/api/health", guarded([this](const httplib::Request&) { return get_health(); }));
  http.Get("/api/units", guarded([this, reader_of](const httplib::Request& req) { return get_units(reader_of(req)); }));
  http.Get(R"(/api/units/([^/]+))", guarded([this, reader_of](const httplib::Request& req) {
             return get_unit(req.matches[1], reader_of(req));
           }));
  http.Post(R"(/api/units/([^/]+)/annotations)", guarded([this](const httplib::Request& req) {
              return post_annotation(req.matches[1], req.body);
            }));
  http.Get("/api/lexicon", guarded([this](const httplib::Request&) { return get_lexicon(); }));
  http.Get("/api/report", guarded([this](const httplib::Request&) { return get_report(); }));
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty() && req.path.rfind("/api/", 0) == 0) {
      res.set_content(json{{"error", "not found"}}.dump(), kJson);
    }
  });

  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  require(bound > 0, ErrorCode::kUnavailable,
          "cannot listen on " + host + ":" + std::to_string(port) + " (port in use or address unavailable)");
  if (on_ready) on_ready(bound);
  http.listen_after_bind();
}

void SurveyService::stop() {
  if (!server_) return;
  // A stop issued between bind and accept would otherwise be lost.
  server_->http.wait_until_ready();
  server_->http.stop();
}

}  // namespace nd
