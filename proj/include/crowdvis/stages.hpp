/*
 * Copyright 2026 The crowdvis Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "crowdvis/pipeline.hpp"

// The CLI subcommands as library calls. Each stage re-reads its inputs from the
// config and the output directory, so stages can run separately or in order.
namespace crowdvis::pipeline {

struct StageContext {
  PipelineConfig config;
  std::shared_ptr<HttpTransport> http;  // null: uncached URLs fail instead of downloading
  std::function<void(const std::string&)> log;
  std::optional<int> variable_set;        // --set: restricts train, picks the pdp model
  std::optional<models::Learner> learner;  // --model: same
  std::function<void(std::chrono::milliseconds)> sleep;  // fetch backoff; defaults to a real sleep
};

struct IngestSummary {
  std::size_t records = 0;
  std::size_t rejects = 0;
};

IngestSummary run_ingest(const StageContext& ctx);
FetchStats run_fetch(const StageContext& ctx);
/// Returns the number of provider calls (0 over a warm cache).
std::size_t run_annotate(const StageContext& ctx);
/// Returns the number of logged failures.
std::size_t run_extract(const StageContext& ctx);
TrainingGrid run_train(const StageContext& ctx);
void run_importance(const StageContext& ctx);
void run_pdp(const StageContext& ctx);
void run_report(const StageContext& ctx);
/// Every stage in order.
void run_all(const StageContext& ctx);

}  // namespace crowdvis::pipeline
