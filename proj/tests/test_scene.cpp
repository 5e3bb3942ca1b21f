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

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "crowdvis/error.hpp"
#include "crowdvis/hash.hpp"
#include "crowdvis/random.hpp"
#include "crowdvis/scene.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"

using namespace crowdvis;
using namespace crowdvis::scene;
using namespace crowdvis::annotation;
using crowdvis::testing::data_path;
using crowdvis::testing::solid;

namespace {

const CascadeClassifier& frontal() {
  static const auto c = load_cascade(data_path("cascades/haarcascade_frontalface_default.xml"));
  return c;
}

// Hand-annotated face box in the astronaut fixture.
constexpr Rect kAstronautFace{175, 70, 100, 115};

std::string tiny_cascade_xml(const std::string& rects, int width = 4, int height = 4) {
  return R"(<?xml version="1.0"?>
<opencv_storage>
<cascade>
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>)" + std::to_string(height) + R"(</height>
  <width>)" + std::to_string(width) + R"(</width>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.1</internalNodes>
          <leafValues>0.0 1.0</leafValues></_></weakClassifiers></_>
  </stages>
  <features>
    <_>
      <rects>
        )" + rects + R"(</rects></_>
  </features>
</cascade>
</opencv_storage>
)";
}

CascadeClassifier parse_text(const std::string& xml) {
  std::istringstream in(xml);
  return parse_cascade(in, "inline");
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("crowdvis_scene_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

class CountingProvider : public AnnotationProvider {
 public:
  explicit CountingProvider(int rate_limited_first = 0) : rate_limited_(rate_limited_first) {}
  Provider kind() const override { return Provider::google; }
  AnnotationSet annotate(std::span<const std::uint8_t> bytes, const std::string& key) override {
    ++calls;
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    --active;
    if (rate_limited_.fetch_sub(1) > 0) throw RateLimitError("slow down");
    return {Provider::google, key, {{"bytes", static_cast<double>(bytes.size() % 100) / 100.0}, {"cat", 0.97}}, false};
  }
  std::atomic<int> calls{0}, active{0}, peak{0};
  int delay_ms = 0;

 private:
  std::atomic<int> rate_limited_;
};

class FakeHttp : public HttpTransport {
 public:
  HttpResponse get(const std::string&) override { return {404, "", ""}; }
  HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers, const std::string& body,
                    const std::string& content_type) override {
    last_url = url;
    last_headers = headers;
    last_body = body;
    last_type = content_type;
    return response;
  }
  HttpResponse response;
  std::string last_url, last_body, last_type;
  std::map<std::string, std::string> last_headers;
};

}  // namespace

// --- cascade loading -----------------------------------------------------------

TEST_CASE("bundled frontal cascade loads with all its stages") {
  const auto& c = frontal();
  CHECK(c.window_width == 24);
  CHECK(c.window_height == 24);
  CHECK(c.stages.size() > 10);
  CHECK(c.stages.size() == 25);  // read from the bundled file
  CHECK(c.features.size() == 2913);
  CHECK_NOTHROW(validate_cascade(c));
}

TEST_CASE("empty or malformed cascade files are parse errors") {
  CHECK_THROWS_AS(parse_text(""), ParseError);
  CHECK_THROWS_AS(parse_text("<opencv_storage><cascade>"), ParseError);
  CHECK_THROWS_AS(parse_text("<opencv_storage></opencv_storage>"), ParseError);
  CHECK_THROWS_AS(load_cascade(data_path("cascades/does_not_exist.xml")), ParseError);
  try {
    parse_text("<opencv_storage>\n<cascade>\n<width>4</width>\n<oops>\n</cascade>");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() > 0);
  }
}

TEST_CASE("feature rectangle outside the window fails validation") {
  CHECK_NOTHROW(parse_text(tiny_cascade_xml("<_>0 0 2 4 -1.</_><_>2 0 2 4 1.</_>")));
  CHECK_THROWS_AS(parse_text(tiny_cascade_xml("<_>0 0 2 4 -1.</_><_>3 0 2 4 1.</_>")), ParseError);
  CHECK_THROWS_AS(parse_text(tiny_cascade_xml("<_>0 1 2 4 1.</_>")), ParseError);
}

TEST_CASE("validation rejects empty cascades and dangling feature indices") {
  auto c = parse_text(tiny_cascade_xml("<_>0 0 2 4 -1.</_><_>2 0 2 4 1.</_>"));
  auto no_stages = c;
  no_stages.stages.clear();
  CHECK_THROWS_AS(validate_cascade(no_stages), ParseError);
  auto dangling = c;
  dangling.stages[0].weak[0].feature = 7;
  CHECK_THROWS_AS(validate_cascade(dangling), ParseError);
  auto empty_stage = c;
  empty_stage.stages[0].weak.clear();
  CHECK_THROWS_AS(validate_cascade(empty_stage), ParseError);
}

// --- detection -----------------------------------------------------------------

TEST_CASE("integral-image window test matches direct summation") {
  // One stump on a left/right edge feature over a 6x6 window, single scale.
  auto c = parse_text(tiny_cascade_xml("<_>0 0 3 6 -1.</_><_>3 0 3 6 1.</_>", 6, 6));
  DetectParams p;
  p.scale_factor = 1000.0;
  p.step = 1;
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ImageBuffer img(20, 17, 3);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
    const auto gray = to_grayscale(img);
    std::vector<Rect> expected;
    for (int y = 0; y + 6 <= 17; ++y) {
      for (int x = 0; x + 6 <= 20; ++x) {
        double s = 0, q = 0;
        for (int yy = y + 1; yy < y + 5; ++yy)
          for (int xx = x + 1; xx < x + 5; ++xx) {
            const double v = 255.0 * gray.at(xx, yy);
            s += v;
            q += v * v;
          }
        const double nf2 = 16 * q - s * s;
        if (!(nf2 > 1e-9 * 256)) continue;
        double left = 0, right = 0;
        for (int yy = y; yy < y + 6; ++yy)
          for (int xx = x; xx < x + 6; ++xx) (xx < x + 3 ? left : right) += 255.0 * gray.at(xx, yy);
        const double value = (right - left) / std::sqrt(nf2);
        if ((value < 0.1 ? 0.0 : 1.0) >= 0.5) expected.push_back({x, y, 6, 6});
      }
    }
    CHECK(raw_detections(img, c, p) == expected);
  }
}

TEST_CASE("constant-color images have no faces") {
  CHECK(detect_faces(solid(200, 200, 0, 0, 0), frontal()).empty());
  CHECK(detect_faces(solid(160, 120, 200, 180, 150), frontal()).empty());
  CHECK(raw_detections(solid(64, 64, 255, 255, 255), frontal()).empty());
}

TEST_CASE("astronaut fixture yields exactly one face on the annotated box") {
  const auto img = decode_image(data_path("fixtures/astronaut.png"));
  const auto faces = detect_faces(img, frontal());
  REQUIRE(faces.size() == 1);
  CHECK(iou(faces[0], kAstronautFace) >= 0.5);
}

TEST_CASE("rotated astronaut has no upright faces") {
  auto img = decode_image(data_path("fixtures/astronaut.png"));
  for (int quarter = 1; quarter <= 3; ++quarter) {
    img = rotate90(img);
    CAPTURE(quarter);
    CHECK(detect_faces(img, frontal()).empty());
  }
}

TEST_CASE("fixtures without people have no faces") {
  for (const char* name : {"chelsea.png", "coffee.png", "rocket.jpg"}) {
    CAPTURE(name);
    CHECK(detect_faces(decode_image(data_path(std::string("fixtures/") + name)), frontal()).empty());
  }
}

TEST_CASE("detection is deterministic and results are sorted") {
  const auto img = decode_image(data_path("fixtures/astronaut.png"));
  const auto a = raw_detections(img, frontal());
  const auto b = raw_detections(img, frontal());
  CHECK(a == b);
  CHECK(std::is_sorted(a.begin(), a.end(), [](const Rect& l, const Rect& r) {
    return std::tie(l.y, l.x, l.width, l.height) < std::tie(r.y, r.x, r.width, r.height);
  }));
  CHECK(detect_faces(img, frontal()) == detect_faces(img, frontal()));
}

TEST_CASE("grouping needs min_neighbors plus one overlapping windows") {
  const auto img = decode_image(data_path("fixtures/astronaut.png"));
  DetectParams strict;
  strict.min_neighbors = 1000;
  CHECK(detect_faces(img, frontal(), strict).empty());
  DetectParams loose;
  loose.min_neighbors = 0;
  CHECK(detect_faces(img, frontal(), loose).size() >= 1);
  DetectParams bad;
  bad.scale_factor = 1.0;
  CHECK_THROWS_AS(raw_detections(img, frontal(), bad), InvalidArgument);
}

TEST_CASE("iou basics") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1.0));
  CHECK(iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
}

// --- scene features ----------------------------------------------------------

TEST_CASE("evoked concepts count labels at or above the threshold") {
  AnnotationSet empty;
  CHECK(num_evoked_concepts(empty) == 0);
  AnnotationSet s{Provider::fixture, "k", {{"cat", 0.97}, {"ball", 0.62}, {"whiskers", 0.41}}, false};
  CHECK(num_evoked_concepts(s) == 2);
  CHECK(num_evoked_concepts(s, 0.0) == 3);
  CHECK(num_evoked_concepts(s, 0.62) == 2);
  CHECK(num_evoked_concepts(s, 0.99) == 0);
}

TEST_CASE("ease of identification is the maximum confidence") {
  CHECK_FALSE(ease_of_concept_identification(AnnotationSet{}).has_value());
  AnnotationSet s{Provider::fixture, "k", {{"cat", 0.97}, {"ball", 0.62}}, false};
  CHECK(*ease_of_concept_identification(s) == 0.97);
  AnnotationSet one{Provider::fixture, "k", {{"x", 0.33}}, false};
  CHECK(*ease_of_concept_identification(one) == 0.33);
}

TEST_CASE("concept count is nonincreasing in tau; ease bounds every label") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    AnnotationSet s;
    const auto n = rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) s.labels.push_back({"l" + std::to_string(i), rng.uniform()});
    int prev = num_evoked_concepts(s, 0.0);
    CHECK(prev == static_cast<int>(n));
    for (int t = 1; t <= 20; ++t) {
      const int cur = num_evoked_concepts(s, t / 20.0);
      CHECK(cur <= prev);
      prev = cur;
    }
    const auto ease = ease_of_concept_identification(s);
    CHECK(ease.has_value() == !s.labels.empty());
    for (const auto& l : s.labels) CHECK(*ease >= l.confidence);
  }
}

// --- annotation ----------------------------------------------------------------

TEST_CASE("fixture provider passes labels through verbatim") {
  const auto img = bytes_of("image-one");
  const std::string key = sha256_hex(std::span<const std::uint8_t>(img));
  std::vector<Label> labels{{"Dog", 0.91}, {"Grass", 0.66}, {"Leash", 0.12}};
  AnnotationClient client(std::make_shared<FixtureProvider>(std::map<std::string, std::vector<Label>>{{key, labels}}));
  const auto got = client.annotate(img);
  CHECK(got.labels == labels);
  CHECK(got.image_key == key);
  CHECK_FALSE(got.unannotated);
  CHECK(got.provider == Provider::fixture);
}

TEST_CASE("fixture provider flags unknown images as unannotated") {
  AnnotationClient client(std::make_shared<FixtureProvider>(std::map<std::string, std::vector<Label>>{}));
  const auto got = client.annotate(bytes_of("never seen"));
  CHECK(got.labels.empty());
  CHECK(got.unannotated);
}

TEST_CASE("fixture file loads and rejects out-of-range confidences") {
  const auto dir = scratch_dir("fixture_file");
  {
    std::ofstream(dir / "ok.json") << R"({"abc": [{"label": "cat", "confidence": 0.5}]})";
    std::ofstream(dir / "bad.json") << R"({"abc": [{"label": "cat", "confidence": 1.5}]})";
    std::ofstream(dir / "broken.json") << R"({"abc": [)";
  }
  FixtureProvider ok(dir / "ok.json");
  CHECK(ok.annotate({}, "abc").labels == std::vector<Label>{{"cat", 0.5}});
  CHECK_THROWS_AS(FixtureProvider(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(FixtureProvider(dir / "broken.json"), ParseError);
  CHECK_THROWS_AS(FixtureProvider(dir / "missing.json"), ConfigError);
}

TEST_CASE("annotation JSON round-trips canonically") {
  AnnotationSet s{Provider::azure, "ff00", {{"b", 0.25}, {"a", 1.0}}, false};
  const auto text = to_json(s);
  CHECK(from_json(text) == s);
  CHECK(to_json(from_json(text)) == text);
  CHECK_THROWS_AS(from_json("{}"), ParseError);
  CHECK_THROWS_AS(from_json(R"({"provider":"bing","image_key":"x"})"), ParseError);
}

TEST_CASE("cache hit returns an identical set without calling the provider") {
  const auto dir = scratch_dir("cache");
  auto provider = std::make_shared<CountingProvider>();
  ClientOptions opts;
  opts.cache_root = dir;
  const auto img = bytes_of("some image bytes");
  const auto key = sha256_hex(std::span<const std::uint8_t>(img));

  AnnotationClient first(provider, opts);
  const auto a = first.annotate(img);
  const auto b = first.annotate(img);
  CHECK(provider->calls == 1);
  CHECK(a == b);
  CHECK(to_json(a) == to_json(b));
  const auto path = first.cache_path(key);
  CHECK(path == dir / "annotations" / "google" / (key + ".json"));
  REQUIRE(std::filesystem::exists(path));

  // A fresh client reads the on-disk entry.
  AnnotationClient second(provider, opts);
  const auto c = second.annotate(img);
  CHECK(provider->calls == 1);
  CHECK(to_json(c) == to_json(a));
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == to_json(a));
}

TEST_CASE("rate limits are retried with exponential backoff") {
  std::vector<std::chrono::milliseconds> slept;
  ClientOptions opts;
  opts.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d); };

  auto recovers = std::make_shared<CountingProvider>(3);
  AnnotationClient ok(recovers, opts);
  CHECK(ok.annotate(bytes_of("x")).labels.size() == 2);
  CHECK(recovers->calls == 4);
  REQUIRE(slept.size() == 3);
  CHECK(slept[0].count() == 1000);
  CHECK(slept[1].count() == 2000);
  CHECK(slept[2].count() == 4000);

  slept.clear();
  auto stuck = std::make_shared<CountingProvider>(100);
  AnnotationClient failing(stuck, opts);
  CHECK_THROWS_AS(failing.annotate(bytes_of("y")), RateLimitError);
  CHECK(stuck->calls == 5);
  CHECK(slept.size() == 4);
  // Failures are not cached.
  CHECK_THROWS_AS(failing.annotate(bytes_of("y")), RateLimitError);
  CHECK(stuck->calls == 10);
}

TEST_CASE("concurrent annotation stays within the in-flight bound and keeps order") {
  auto provider = std::make_shared<CountingProvider>();
  provider->delay_ms = 5;
  ClientOptions opts;
  opts.max_in_flight = 3;
  AnnotationClient client(provider, opts);
  std::vector<std::vector<std::uint8_t>> images;
  for (int i = 0; i < 24; ++i) images.push_back(bytes_of("img" + std::to_string(i % 12)));
  const auto out = client.annotate_many(images);
  REQUIRE(out.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(out[i].image_key == sha256_hex(std::span<const std::uint8_t>(images[i])));
  }
  CHECK(provider->peak <= 3);
  CHECK(provider->calls == 12);  // duplicates collapse onto one call
}

TEST_CASE("Google provider builds a label request and parses scores") {
  auto http = std::make_shared<FakeHttp>();
  http->response = {200, R"({"responses":[{"labelAnnotations":[{"description":"Cat","score":0.97},
                                                             {"description":"Ball","score":0.62}]}]})",
                    "application/json"};
  GoogleVisionProvider g("KEY", http, "https://vision.example/");
  const auto img = bytes_of("abc");
  const auto set = g.annotate(img, "h");
  CHECK(http->last_url == "https://vision.example/v1/images:annotate?key=KEY");
  const auto req = nlohmann::json::parse(http->last_body);
  CHECK(req["requests"][0]["image"]["content"] == "YWJj");
  CHECK(req["requests"][0]["features"][0]["type"] == "LABEL_DETECTION");
  CHECK(set.labels == std::vector<Label>{{"Cat", 0.97}, {"Ball", 0.62}});

  http->response = {401, "{}", ""};
  CHECK_THROWS_AS(g.annotate(img, "h"), AuthError);
  http->response = {429, "{}", ""};
  CHECK_THROWS_AS(g.annotate(img, "h"), RateLimitError);
  http->response = {503, "{}", ""};
  CHECK_THROWS_AS(g.annotate(img, "h"), NetworkError);
}

TEST_CASE("Azure provider posts raw bytes with the subscription key") {
  auto http = std::make_shared<FakeHttp>();
  http->response = {200, R"({"tags":[{"name":"grass","confidence":0.99},{"name":"dog","confidence":0.4}]})", ""};
  AzureVisionProvider a("AK", "https://az.example", http);
  const auto set = a.annotate(bytes_of("raw"), "h");
  CHECK(http->last_url == "https://az.example/vision/v3.2/tag");
  CHECK(http->last_headers.at("Ocp-Apim-Subscription-Key") == "AK");
  CHECK(http->last_body == "raw");
  CHECK(http->last_type == "application/octet-stream");
  CHECK(set.provider == Provider::azure);
  CHECK(set.labels == std::vector<Label>{{"grass", 0.99}, {"dog", 0.4}});
  http->response = {403, "", ""};
  CHECK_THROWS_AS(a.annotate(bytes_of("raw"), "h"), AuthError);
}

TEST_CASE("credentials come from the environment") {
  ::unsetenv("VISION_KEY_AZURE");
  CHECK_THROWS_AS(credential_from_env(Provider::azure), AuthError);
  ::setenv("VISION_KEY_AZURE", "secret", 1);
  CHECK(credential_from_env(Provider::azure) == "secret");
  ::unsetenv("VISION_KEY_AZURE");
  CHECK(parse_provider("google") == Provider::google);
  CHECK_THROWS_AS(parse_provider("bing"), InvalidArgument);
}
