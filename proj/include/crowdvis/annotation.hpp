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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdvis/http.hpp"

namespace crowdvis::annotation {

enum class Provider { google, azure, fixture };

std::string provider_name(Provider p);
Provider parse_provider(const std::string& name);

struct Label {
  std::string label;
  double confidence = 0.0;
  bool operator==(const Label&) const = default;
};

struct AnnotationSet {
  Provider provider = Provider::fixture;
  std::string image_key;  // hex SHA-256 of the image bytes
  std::vector<Label> labels;
  bool unannotated = false;  // the provider had nothing for this image
  bool operator==(const AnnotationSet&) const = default;
};

/// Canonical JSON text; equal sets serialize to identical bytes.
std::string to_json(const AnnotationSet& set);
AnnotationSet from_json(const std::string& text);

class AnnotationProvider {
 public:
  virtual ~AnnotationProvider() = default;
  virtual Provider kind() const = 0;
  virtual AnnotationSet annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) = 0;
};

/// Offline provider backed by a JSON object {sha256: [{label, confidence}]}.
class FixtureProvider : public AnnotationProvider {
 public:
  explicit FixtureProvider(const std::filesystem::path& fixture_file);
  explicit FixtureProvider(std::map<std::string, std::vector<Label>> entries);
  Provider kind() const override { return Provider::fixture; }
  AnnotationSet annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) override;

 private:
  std::map<std::string, std::vector<Label>> entries_;
};

/// Label detection through the Cloud Vision REST API.
class GoogleVisionProvider : public AnnotationProvider {
 public:
  GoogleVisionProvider(std::string api_key, std::shared_ptr<HttpTransport> http,
                       std::string endpoint = "https://vision.googleapis.com");
  Provider kind() const override { return Provider::google; }
  AnnotationSet annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) override;

 private:
  std::string key_;
  std::shared_ptr<HttpTransport> http_;
  std::string endpoint_;
};

/// Image tagging through the Azure Computer Vision REST API.
class AzureVisionProvider : public AnnotationProvider {
 public:
  AzureVisionProvider(std::string api_key, std::string endpoint, std::shared_ptr<HttpTransport> http);
  Provider kind() const override { return Provider::azure; }
  AnnotationSet annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) override;

 private:
  std::string key_;
  std::string endpoint_;
  std::shared_ptr<HttpTransport> http_;
};

/// Reads VISION_KEY_GOOGLE / VISION_KEY_AZURE. Throws AuthError when unset.
std::string credential_from_env(Provider p);

struct ClientOptions {
  std::optional<std::filesystem::path> cache_root;  // <root>/annotations/<cache_name>/<hash>.json
  std::string cache_name;                           // defaults to the provider name
  int max_in_flight = 4;
  int max_tries = 5;
  std::chrono::milliseconds base_delay{1000};
  double backoff_factor = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

/// Caching, retrying front end to one provider. Thread-safe; identical bytes
/// reach the provider at most once per client.
class AnnotationClient {
 public:
  AnnotationClient(std::shared_ptr<AnnotationProvider> provider, ClientOptions options = {});

  AnnotationSet annotate(std::span<const std::uint8_t> bytes);
  /// Results in input order; at most `max_in_flight` provider calls run at once.
  std::vector<AnnotationSet> annotate_many(const std::vector<std::vector<std::uint8_t>>& images);

  std::size_t provider_calls() const noexcept { return calls_.load(); }
  std::filesystem::path cache_path(const std::string& image_key) const;

 private:
  AnnotationSet fetch(std::span<const std::uint8_t> bytes, const std::string& key);
  AnnotationSet call_with_retry(std::span<const std::uint8_t> bytes, const std::string& key);

  std::shared_ptr<AnnotationProvider> provider_;
  ClientOptions options_;
  std::mutex mutex_;
  std::map<std::string, std::string> memory_;  // key -> canonical JSON
  std::map<std::string, std::shared_future<std::string>> pending_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace crowdvis::annotation
