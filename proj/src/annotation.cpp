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

#include "crowdvis/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "crowdvis/error.hpp"
#include "crowdvis/hash.hpp"
#include "json.hpp"

namespace crowdvis::annotation {
namespace {

using nlohmann::json;

std::vector<Label> parse_labels(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError("expected an array of labels for " + where);
  std::vector<Label> out;
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("label") || !item.contains("confidence") || !item["label"].is_string() ||
        !item["confidence"].is_number()) {
      throw ParseError("label entries need string 'label' and numeric 'confidence' (" + where + ")");
    }
    const double c = item["confidence"].get<double>();
    if (!(c >= 0.0 && c <= 1.0)) throw ParseError("confidence outside [0,1] for " + where);
    out.push_back({item["label"].get<std::string>(), c});
  }
  return out;
}

void check_status(const HttpResponse& r, const std::string& service) {
  if (r.status >= 200 && r.status < 300) return;
  const std::string msg = service + " returned HTTP " + std::to_string(r.status);
  if (r.status == 401 || r.status == 403) throw AuthError(msg + ": credentials rejected");
  if (r.status == 429) throw RateLimitError(msg + ": rate limited");
  if (r.status >= 500) throw NetworkError(msg + ": server error");
  throw ServiceError(msg + ": " + r.body.substr(0, 200));
}

json parse_body(const HttpResponse& r, const std::string& service) {
  try {
    return json::parse(r.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(service + " returned malformed JSON: " + e.what());
  }
}

std::string trim_slash(std::string s) {
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

}  // namespace

std::string provider_name(Provider p) {
  switch (p) {
    case Provider::google: return "google";
    case Provider::azure: return "azure";
    case Provider::fixture: return "fixture";
  }
  return "fixture";
}

Provider parse_provider(const std::string& name) {
  if (name == "google") return Provider::google;
  if (name == "azure") return Provider::azure;
  if (name == "fixture") return Provider::fixture;
  throw InvalidArgument("unknown annotation provider '" + name + "' (expected google, azure or fixture)");
}

std::string to_json(const AnnotationSet& set) {
  json labels = json::array();
  for (const auto& l : set.labels) labels.push_back({{"confidence", l.confidence}, {"label", l.label}});
  const json doc = {{"image_key", set.image_key},
                    {"labels", labels},
                    {"provider", provider_name(set.provider)},
                    {"unannotated", set.unannotated}};
  return doc.dump();
}

AnnotationSet from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed annotation JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("annotation JSON must be an object");
  AnnotationSet out;
  try {
    out.provider = parse_provider(doc.at("provider").get<std::string>());
    out.image_key = doc.at("image_key").get<std::string>();
    out.unannotated = doc.value("unannotated", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("annotation JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  out.labels = parse_labels(doc.contains("labels") ? doc["labels"] : json::array(), "annotation " + out.image_key);
  return out;
}

// --- fixture -------------------------------------------------------------------

FixtureProvider::FixtureProvider(const std::filesystem::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in) throw ConfigError("cannot open annotation fixture " + fixture_file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed annotation fixture " + fixture_file.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("annotation fixture must map hashes to label arrays");
  for (const auto& [hash, arr] : doc.items()) entries_[hash] = parse_labels(arr, hash);
}

FixtureProvider::FixtureProvider(std::map<std::string, std::vector<Label>> entries) : entries_(std::move(entries)) {}

AnnotationSet FixtureProvider::annotate(std::span<const std::uint8_t>, const std::string& image_key) {
  AnnotationSet out{Provider::fixture, image_key, {}, false};
  const auto it = entries_.find(image_key);
  if (it == entries_.end()) {
    out.unannotated = true;
  } else {
    out.labels = it->second;
  }
  return out;
}

// --- Google --------------------------------------------------------------------

GoogleVisionProvider::GoogleVisionProvider(std::string api_key, std::shared_ptr<HttpTransport> http,
                                           std::string endpoint)
    : key_(std::move(api_key)), http_(std::move(http)), endpoint_(trim_slash(std::move(endpoint))) {
  if (key_.empty()) throw AuthError("empty Google Vision API key");
}

AnnotationSet GoogleVisionProvider::annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) {
  const json request = {
      {"requests",
       json::array({{{"image", {{"content", base64_encode(bytes)}}},
                     {"features", json::array({{{"type", "LABEL_DETECTION"}, {"maxResults", 50}}})}}})}};
  const auto resp =
      http_->post(endpoint_ + "/v1/images:annotate?key=" + key_, {}, request.dump(), "application/json");
  check_status(resp, "Cloud Vision");
  const json body = parse_body(resp, "Cloud Vision");
  AnnotationSet out{Provider::google, image_key, {}, false};
  const auto& responses = body.value("responses", json::array());
  if (responses.empty()) return out;
  const auto& first = responses.front();
  if (first.contains("error")) {
    throw ServiceError("Cloud Vision error: " + first["error"].value("message", std::string("unknown")));
  }
  for (const auto& a : first.value("labelAnnotations", json::array())) {
    out.labels.push_back({a.value("description", std::string()), std::clamp(a.value("score", 0.0), 0.0, 1.0)});
  }
  return out;
}

// --- Azure ---------------------------------------------------------------------

AzureVisionProvider::AzureVisionProvider(std::string api_key, std::string endpoint,
                                         std::shared_ptr<HttpTransport> http)
    : key_(std::move(api_key)), endpoint_(trim_slash(std::move(endpoint))), http_(std::move(http)) {
  if (key_.empty()) throw AuthError("empty Azure Computer Vision key");
  if (endpoint_.empty()) throw ConfigError("Azure Computer Vision needs an endpoint URL");
}

AnnotationSet AzureVisionProvider::annotate(std::span<const std::uint8_t> bytes, const std::string& image_key) {
  const std::string payload(bytes.begin(), bytes.end());
  const auto resp = http_->post(endpoint_ + "/vision/v3.2/tag", {{"Ocp-Apim-Subscription-Key", key_}}, payload,
                                "application/octet-stream");
  check_status(resp, "Azure Computer Vision");
  const json body = parse_body(resp, "Azure Computer Vision");
  AnnotationSet out{Provider::azure, image_key, {}, false};
  for (const auto& t : body.value("tags", json::array())) {
    out.labels.push_back({t.value("name", std::string()), std::clamp(t.value("confidence", 0.0), 0.0, 1.0)});
  }
  return out;
}

std::string credential_from_env(Provider p) {
  const char* var = p == Provider::google ? "VISION_KEY_GOOGLE" : p == Provider::azure ? "VISION_KEY_AZURE" : nullptr;
  if (var == nullptr) return {};
  const char* v = std::getenv(var);
  if (v == nullptr || *v == '\0') throw AuthError(std::string("environment variable ") + var + " is not set");
  return v;
}

// --- client --------------------------------------------------------------------

AnnotationClient::AnnotationClient(std::shared_ptr<AnnotationProvider> provider, ClientOptions options)
    : provider_(std::move(provider)), options_(std::move(options)) {
  if (!provider_) throw InvalidArgument("annotation client needs a provider");
  if (options_.max_in_flight < 1) throw InvalidArgument("max_in_flight must be >= 1");
  if (options_.max_tries < 1) throw InvalidArgument("max_tries must be >= 1");
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::filesystem::path AnnotationClient::cache_path(const std::string& image_key) const {
  if (!options_.cache_root) return {};
  const auto dir = options_.cache_name.empty() ? provider_name(provider_->kind()) : options_.cache_name;
  return *options_.cache_root / "annotations" / dir / (image_key + ".json");
}

AnnotationSet AnnotationClient::call_with_retry(std::span<const std::uint8_t> bytes, const std::string& key) {
  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    AnnotationClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->slots_mutex_);
        --self->in_flight_;
      }
      self->slots_cv_.notify_one();
    }
  } release{this};

  auto delay = options_.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      ++calls_;
      return provider_->annotate(bytes, key);
    } catch (const RateLimitError&) {
      if (attempt >= options_.max_tries) throw;
    }
    options_.sleep(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(std::llround(delay.count() * options_.backoff_factor)));
  }
}

AnnotationSet AnnotationClient::fetch(std::span<const std::uint8_t> bytes, const std::string& key) {
  std::promise<std::string> promise;
  std::shared_future<std::string> waiting;
  {
    std::lock_guard lock(mutex_);
    if (const auto it = memory_.find(key); it != memory_.end()) return from_json(it->second);
    if (const auto it = pending_.find(key); it != pending_.end()) {
      waiting = it->second;
    } else {
      pending_[key] = promise.get_future().share();
    }
  }
  if (waiting.valid()) return from_json(waiting.get());

  try {
    std::string text;
    const auto path = cache_path(key);
    if (!path.empty() && std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
      from_json(text);  // reject corrupt cache entries early
    } else {
      text = to_json(call_with_retry(bytes, key));
      if (!path.empty()) {
        std::filesystem::create_directories(path.parent_path());
        const auto tmp = path.string() + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          out << text;
        }
        std::filesystem::rename(tmp, path);
      }
    }
    {
      std::lock_guard lock(mutex_);
      memory_[key] = text;
      pending_.erase(key);
    }
    promise.set_value(text);
    return from_json(text);
  } catch (...) {
    {
      std::lock_guard lock(mutex_);
      pending_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

AnnotationSet AnnotationClient::annotate(std::span<const std::uint8_t> bytes) { return fetch(bytes, sha256_hex(bytes)); }

std::vector<AnnotationSet> AnnotationClient::annotate_many(const std::vector<std::vector<std::uint8_t>>& images) {
  std::vector<AnnotationSet> out(images.size());
  // The slot limit inside call_with_retry bounds provider concurrency.
  const std::size_t workers = std::min<std::size_t>(images.size(), static_cast<std::size_t>(options_.max_in_flight));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(images.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < images.size(); i = next++) {
        try {
          out[i] = annotate(images[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace crowdvis::annotation
