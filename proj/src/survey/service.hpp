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
#include <memory>
#include <string>

#include "dissect/catalog.hpp"
#include "survey/annotation_log.hpp"
#include "survey/lexicon.hpp"

namespace nd {

struct ServiceConfig {
  std::filesystem::path catalog_dir;
  std::filesystem::path log_path;
  std::filesystem::path lexicon_path;
};

// HTTP/JSON survey backend. The lexicon and the catalog directory must exist
// at construction; catalog.json may appear later, and until it does the
// catalog endpoints answer 503.
class SurveyService {
 public:
  SurveyService(ServiceConfig config, WarningSink warn = {});
  ~SurveyService();
  SurveyService(const SurveyService&) = delete;
  SurveyService& operator=(const SurveyService&) = delete;

  // Blocks until stop(). on_ready receives the bound port (useful with port 0).
  void listen(const std::string& host, int port, const std::function<void(int)>& on_ready = {});
  void stop();

  const AnnotationLog& log() const noexcept { return *log_; }
  const Lexicon& lexicon() const noexcept { return lexicon_; }

  struct Response {
    int status = 200;
    std::string body;
  };

  // Route handlers, exposed so they can be exercised without sockets.
  Response get_health();
  Response get_units(const std::string& reader);
  Response get_unit(const std::string& id, const std::string& reader);
  Response get_lexicon();
  Response get_report();
  Response post_annotation(const std::string& id, const std::string& body);

 private:
  std::shared_ptr<const Catalog> catalog();

  ServiceConfig config_;
  WarningSink warn_;
  Lexicon lexicon_;
  std::unique_ptr<AnnotationLog> log_;
  std::mutex catalog_mutex_;
  std::shared_ptr<const Catalog> catalog_;
  std::string catalog_error_;
  struct Server;
  std::unique_ptr<Server> server_;
};

}  // namespace nd
