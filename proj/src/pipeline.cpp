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

#include "crowdvis/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "crowdvis/color.hpp"
#include "crowdvis/error.hpp"
#include "crowdvis/hash.hpp"
#include "crowdvis/imaging.hpp"
#include "crowdvis/text.hpp"
#include "json.hpp"

namespace crowdvis::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// --- config reader ------------------------------------------------------------------

// Wraps one JSON object; every key read is recorded so leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path, fs::path base) : j_(j), path_(std::move(path)), base_(std::move(base)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  Section section(const std::string& key) {
    static const json empty = json::object();
    const json* v = raw(key);
    return Section(v ? *v : empty, name(key), base_);
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(name(key) + " must be true or false");
    return v->get<bool>();
  }

  long long integer(const std::string& key, long long fallback, long long lo, long long hi) {
    const json* v = raw(key);
    return v ? integer_value(*v, name(key), lo, hi) : fallback;
  }

  double number(const std::string& key, double fallback, double lo, double hi) {
    const json* v = raw(key);
    return v ? number_value(*v, name(key), lo, hi) : fallback;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(name(key) + " must be a string");
    return v->get<std::string>();
  }

  std::optional<fs::path> path(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_string() || v->get<std::string>().empty()) throw ConfigError(name(key) + " must be a path");
    return resolve(v->get<std::string>());
  }

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : (base_ / p).lexically_normal(); }

  template <class T, class F>
  std::optional<std::vector<T>> list(const std::string& key, F&& item) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_array() || v->empty()) throw ConfigError(name(key) + " must be a non-empty array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(item(v->at(i), name(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::optional<std::vector<double>> numbers(const std::string& key, double lo, double hi) {
    return list<double>(key, [&](const json& e, const std::string& at) { return number_value(e, at, lo, hi); });
  }

  std::optional<std::vector<int>> integers(const std::string& key, long long lo, long long hi) {
    return list<int>(key, [&](const json& e, const std::string& at) {
      return static_cast<int>(integer_value(e, at, lo, hi));
    });
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) {
    return list<std::string>(key, [&](const json& e, const std::string& at) {
      if (!e.is_string()) throw ConfigError(at + " must be a string");
      return e.get<std::string>();
    });
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }
  const fs::path& base() const { return base_; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError("unknown config key '" + name(key) + "'");
    }
  }

 private:
  static long long integer_value(const json& v, const std::string& at, long long lo, long long hi) {
    if (!v.is_number_integer()) throw ConfigError(at + " must be an integer");
    const bool huge = v.is_number_unsigned() &&
                      v.get<unsigned long long>() > static_cast<unsigned long long>(std::numeric_limits<long long>::max());
    const long long x = huge ? 0 : v.get<long long>();
    if (huge || x < lo || x > hi) {
      throw ConfigError(at + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  static double number_value(const json& v, const std::string& at, double lo, double hi) {
    if (!v.is_number()) throw ConfigError(at + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi) {
      throw ConfigError(at + " must lie in [" + dataset::format_number(lo) + ", " + dataset::format_number(hi) + "]");
    }
    return x;
  }

  const json& j_;
  std::string path_;
  fs::path base_;
  std::set<std::string> used_;
};

constexpr long long kIntMax = std::numeric_limits<int>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();

models::BartParams read_bart_scalars(Section& s, models::BartParams p) {
  p.nu = s.number("nu", p.nu, 1e-9, kInf);
  p.q = s.number("q", p.q, 1e-9, 1 - 1e-9);
  p.alpha = s.number("alpha", p.alpha, 1e-9, 1 - 1e-9);
  p.beta = s.number("beta", p.beta, 0, kInf);
  p.n_burn = static_cast<int>(s.integer("n_burn", p.n_burn, 0, kIntMax));
  p.n_post = static_cast<int>(s.integer("n_post", p.n_post, 1, kIntMax));
  return p;
}

dataset::Tag tag_value(const std::string& name, const std::string& at) {
  try {
    return dataset::parse_tag(name);
  } catch (const std::exception&) {
    throw ConfigError(at + ": unknown variable tag '" + name + "'");
  }
}

models::Learner learner_value(const std::string& name, const std::string& at) {
  try {
    return models::parse_learner(name);
  } catch (const std::exception&) {
    throw ConfigError(at + ": unknown learner '" + name + "'");
  }
}

void read_config(Section& root, PipelineConfig& c) {
  {
    auto s = root.section("input");
    const auto p = s.path("path");
    if (!p) throw ConfigError("input.path is required");
    c.input = *p;
    const auto fmt = s.string("format", "");
    if (fmt == "csv") c.input_format = dataset::Format::csv;
    else if (fmt == "jsonl") c.input_format = dataset::Format::jsonl;
    else if (!fmt.empty()) throw ConfigError("input.format must be csv or jsonl");
    s.finish();
  }
  {
    auto s = root.section("images");
    const auto src = s.string("source", "local");
    if (src == "local") c.image_source = ImageSource::local;
    else if (src == "url") c.image_source = ImageSource::url;
    else throw ConfigError("images.source must be local or url");
    c.image_dir = s.path("dir").value_or(s.resolve("images"));
    c.fetch_in_flight = static_cast<int>(s.integer("max_in_flight", c.fetch_in_flight, 1, 256));
    c.fetch_tries = static_cast<int>(s.integer("max_tries", c.fetch_tries, 1, 100));
    c.fetch_base_delay = std::chrono::milliseconds(s.integer("base_delay_ms", c.fetch_base_delay.count(), 0, 600000));
    c.max_side = static_cast<int>(s.integer("max_side", c.max_side, 0, 1 << 16));
    if (c.max_side != 0 && c.max_side < 16) throw ConfigError("images.max_side must be 0 or at least 16");
    s.finish();
  }
  c.cache_dir = root.path("cache_dir").value_or(root.resolve("cache"));
  c.output_dir = root.path("output_dir").value_or(root.resolve("out"));
  const auto seed = static_cast<std::uint64_t>(root.integer("seed", 0, 0, std::numeric_limits<long long>::max()));
  {
    auto s = root.section("features");
    c.features.color = s.boolean("color", true);
    c.features.composition = s.boolean("composition", true);
    c.features.figure_ground = s.boolean("figure_ground", true);
    c.features.faces = s.boolean("faces", true);
    c.features.annotations = s.boolean("annotations", true);
    c.features.text = s.boolean("text", true);
    s.finish();
  }
  {
    auto s = root.section("color");
    c.quality_model = s.path("quality_model");
    s.finish();
  }
  {
    auto s = root.section("composition");
    auto& p = c.composition;
    p.slic_k = static_cast<int>(s.integer("slic_k", p.slic_k, 1, 1 << 20));
    p.slic_compactness = s.number("slic_compactness", p.slic_compactness, 1e-9, kInf);
    p.slic_iterations = static_cast<int>(s.integer("slic_iterations", p.slic_iterations, 1, 1000));
    const auto mode = s.string("segment_mode", "components");
    if (mode == "components") p.segment_mode = composition::SegmentCountMode::components;
    else if (mode == "edge_changes") p.segment_mode = composition::SegmentCountMode::edge_changes;
    else throw ConfigError("composition.segment_mode must be components or edge_changes");
    s.finish();
  }
  {
    auto s = root.section("figure_ground");
    auto& p = c.figure_ground;
    p.border_margin = s.number("border_margin", p.border_margin, 1e-9, 0.49);
    p.gmm_components = static_cast<int>(s.integer("gmm_components", p.gmm_components, 1, 64));
    p.gamma = s.number("gamma", p.gamma, 0, kInf);
    p.max_iterations = static_cast<int>(s.integer("max_iterations", p.max_iterations, 1, 1000));
    p.min_change_fraction = s.number("min_change_fraction", p.min_change_fraction, 0, 1);
    s.finish();
  }
  {
    auto s = root.section("faces");
    c.cascade = s.path("cascade").value_or(fs::path(CROWDVIS_DATA_DIR) / "cascades" /
                                            "haarcascade_frontalface_default.xml");
    auto& d = c.detect;
    d.scale_factor = s.number("scale_factor", d.scale_factor, 1.0 + 1e-9, 10);
    d.step = static_cast<int>(s.integer("step", d.step, 1, 64));
    d.group_iou = s.number("group_iou", d.group_iou, 0, 1);
    d.min_neighbors = static_cast<int>(s.integer("min_neighbors", d.min_neighbors, 0, 1000));
    s.finish();
  }
  {
    auto s = root.section("annotation");
    c.annotation_in_flight = static_cast<int>(s.integer("max_in_flight", c.annotation_in_flight, 1, 256));
    const fs::path base = s.base();
    auto sources = s.list<AnnotationSource>("sources", [&](const json& e, const std::string& at) {
      Section src(e, at, base);
      AnnotationSource a;
      a.name = src.string("name", "");
      if (a.name.empty() || !std::all_of(a.name.begin(), a.name.end(), [](char ch) {
            return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
          })) {
        throw ConfigError(at + ".name must be a non-empty [a-z0-9_] identifier");
      }
      const auto provider = src.string("provider", "fixture");
      try {
        a.provider = annotation::parse_provider(provider);
      } catch (const std::exception&) {
        throw ConfigError(at + ".provider must be google, azure or fixture");
      }
      if (auto f = src.path("fixture")) a.fixture = *f;
      if (a.provider == annotation::Provider::fixture && a.fixture.empty()) {
        throw ConfigError(at + ".fixture is required for the fixture provider");
      }
      a.endpoint = src.string("endpoint", "");
      if (a.provider == annotation::Provider::azure && a.endpoint.empty()) {
        throw ConfigError(at + ".endpoint is required for the azure provider");
      }
      a.tau = src.number("tau", a.tau, 0, 1);
      src.finish();
      return a;
    });
    if (sources) c.annotation_sources = std::move(*sources);
    std::set<std::string> names;
    for (const auto& a : c.annotation_sources) {
      if (!names.insert(a.name).second) throw ConfigError("annotation.sources: duplicate name '" + a.name + "'");
    }
    s.finish();
  }
  {
    auto s = root.section("text");
    auto paths = [&](const std::string& key) {
      std::vector<fs::path> out;
      if (auto names = s.strings(key)) {
        for (const auto& n : *names) out.push_back(s.resolve(n));
      }
      return out;
    };
    c.text_dictionaries = paths("dictionaries");
    c.blurb_dictionaries = paths("blurb_dictionaries");
    s.finish();
  }
  {
    auto s = root.section("models");
    if (auto names = s.strings("learners")) {
      c.learners.clear();
      for (std::size_t i = 0; i < names->size(); ++i) {
        c.learners.push_back(learner_value((*names)[i], s.name("learners")));
      }
    }
    if (auto sets = s.integers("variable_sets", 1, 5)) c.variable_sets = *sets;
    c.train_fraction = s.number("train_fraction", c.train_fraction, 1e-9, 1 - 1e-9);
    auto& t = c.train;
    t.folds = static_cast<int>(s.integer("folds", t.folds, 2, 1000));
    t.knn_k = static_cast<int>(s.integer("knn_k", t.knn_k, 1, 1000));
    {
      auto r = s.section("ridge");
      t.ridge_grid_points = static_cast<int>(r.integer("grid_points", t.ridge_grid_points, 1, 10000));
      t.ridge_lambda_min = r.number("lambda_min", t.ridge_lambda_min, 1e-300, kInf);
      t.ridge_lambda_max = r.number("lambda_max", t.ridge_lambda_max, t.ridge_lambda_min, kInf);
      r.finish();
    }
    {
      auto l = s.section("lasso");
      t.lasso_grid_points = static_cast<int>(l.integer("grid_points", t.lasso_grid_points, 1, 10000));
      t.lasso_min_ratio = l.number("min_ratio", t.lasso_min_ratio, 1e-300, 1);
      l.finish();
    }
    {
      auto g = s.section("gbt");
      const auto etas = g.numbers("eta", 1e-9, 1).value_or(std::vector<double>{0.1, 0.3});
      const auto depths = g.integers("max_depth", 1, 64).value_or(std::vector<int>{2, 4, 6});
      const auto subs = g.numbers("subsample", 1e-9, 1).value_or(std::vector<double>{1.0});
      const auto cols = g.numbers("colsample_bytree", 1e-9, 1).value_or(std::vector<double>{1.0});
      models::GbtParams base;
      base.n_rounds = static_cast<int>(g.integer("n_rounds", 200, 1, 100000));
      base.early_stopping_rounds = static_cast<int>(g.integer("early_stopping_rounds", 10, 0, 100000));
      base.gamma = g.number("gamma", base.gamma, 0, kInf);
      base.lambda = g.number("lambda", base.lambda, 0, kInf);
      t.gbt_impute = g.boolean("impute", false);
      g.finish();
      t.gbt_grid.clear();
      for (int d : depths)
        for (double e : etas)
          for (double sub : subs)
            for (double col : cols) {
              auto p = base;
              p.max_depth = d;
              p.eta = e;
              p.subsample = sub;
              p.colsample_bytree = col;
              t.gbt_grid.push_back(p);
            }
    }
    {
      auto b = s.section("bart");
      const auto ms = b.integers("m", 1, 100000).value_or(std::vector<int>{50, 200});
      const auto ks = b.numbers("k", 1e-9, kInf).value_or(std::vector<double>{1, 2, 3});
      const auto base = read_bart_scalars(b, models::BartParams{});
      b.finish();
      t.bart_grid.clear();
      for (int m : ms)
        for (double k : ks) {
          auto p = base;
          p.m = m;
          p.k = k;
          t.bart_grid.push_back(p);
        }
    }
    s.finish();
  }
  {
    auto s = root.section("interpret");
    auto& in = c.interpret;
    in.variable_set = static_cast<int>(s.integer("variable_set", in.variable_set, 1, 5));
    in.replicates = static_cast<int>(s.integer("replicates", in.replicates, 1, 10000));
    {
      auto b = s.section("bart");
      auto p = read_bart_scalars(b, in.bart);
      p.m = static_cast<int>(b.integer("m", in.bart.m, 1, 100000));
      p.k = b.number("k", in.bart.k, 1e-9, kInf);
      b.finish();
      in.bart = p;
    }
    if (auto vars = s.strings("pdp_variables")) in.pdp_variables = *vars;
    const fs::path base = s.base();
    auto tests = s.list<NullSubset>("null_tests", [&](const json& e, const std::string& at) {
      Section t(e, at, base);
      NullSubset n;
      n.name = t.string("name", "");
      if (n.name.empty() || n.name.find_first_of("/\\ ") != std::string::npos) {
        throw ConfigError(at + ".name must be a non-empty file-name-safe string");
      }
      if (auto cols = t.strings("columns")) n.columns = *cols;
      if (auto tags = t.strings("tags")) {
        for (const auto& name : *tags) n.tags.push_back(tag_value(name, t.name("tags")));
      }
      if (n.columns.empty() && n.tags.empty()) throw ConfigError(at + " needs columns or tags");
      t.finish();
      return n;
    });
    if (tests) in.null_tests = std::move(*tests);
    in.null_resamples = static_cast<int>(s.integer("null_resamples", in.null_resamples, 1, 100000));
    const auto mode = s.string("null_mode", "permute");
    if (mode == "permute") in.null_mode = interpret::NullMode::permute;
    else if (mode == "drop") in.null_mode = interpret::NullMode::drop;
    else throw ConfigError("interpret.null_mode must be permute or drop");
    in.null_learner = learner_value(s.string("null_learner", "bart"), s.name("null_learner"));
    s.finish();
  }
  root.finish();
  set_seed(c, seed);
}

// --- small helpers -------------------------------------------------------------------------

template <class F>
void run_pool(std::size_t n, int workers, F&& task) {
  const int threads = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sniff_extension(std::span<const std::uint8_t> b) {
  if (b.size() >= 8 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G') return "png";
  if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return "jpg";
  return "bin";
}

std::atomic<std::uint64_t> temp_counter{0};

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp" + std::to_string(temp_counter++);
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Stores bytes under their digest; an existing entry is left alone.
ImageRef store_image(const std::string& id, std::span<const std::uint8_t> bytes, const fs::path& cache) {
  ImageRef ref{id, std::nullopt, sha256_hex(bytes), ""};
  const fs::path path = cache / "images" / (ref.key + "." + sniff_extension(bytes));
  if (!fs::exists(path)) write_bytes(path, bytes);
  ref.path = path;
  return ref;
}

struct Download {
  std::optional<ImageRef> image;
  std::string error;
};

Download fetch_url(const std::string& url, const PipelineConfig& config, HttpTransport& http,
                   std::atomic<std::size_t>& requests,
                   const std::function<void(std::chrono::milliseconds)>& sleep) {
  std::string last;
  for (int attempt = 0; attempt < config.fetch_tries; ++attempt) {
    if (attempt > 0) sleep(config.fetch_base_delay * (1 << std::min(attempt - 1, 16)));
    bool retry = false;
    try {
      ++requests;
      const auto resp = http.get(url);
      if (resp.status == 200) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(resp.body.data());
        return {store_image("", std::span(p, resp.body.size()), config.cache_dir), ""};
      }
      last = "HTTP " + std::to_string(resp.status);
      retry = resp.status == 429 || resp.status >= 500;
    } catch (const NetworkError& e) {
      last = e.what();
      retry = true;
    }
    if (!retry) break;
  }
  return {std::nullopt, last.empty() ? "download failed" : last};
}

fs::path url_ref_path(const fs::path& cache, const std::string& url) {
  return cache / "images" / "by-url" / (sha256_hex(url) + ".ref");
}

std::optional<fs::path> read_ref(const fs::path& cache, const std::string& url) {
  std::ifstream in(url_ref_path(cache, url));
  std::string name;
  if (!(in >> name)) return std::nullopt;
  const fs::path target = cache / "images" / name;
  if (!fs::exists(target)) return std::nullopt;
  return target;
}

void note(std::vector<Failure>& log, const std::string& id, const std::string& stage, const std::string& why) {
  log.push_back({id, stage, why});
}

double opt(const std::optional<double>& v) { return v ? *v : kNaN; }

}  // namespace

// --- configuration ----------------------------------------------------------------------

PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section root(j, "", base_dir);
  read_config(root, c);
  return c;
}

void set_seed(PipelineConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.train.seed = seed;
  config.interpret.bart.seed = seed;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path());
}

// --- images ---------------------------------------------------------------------------------

std::vector<ImageRef> resolve_images(const std::vector<dataset::ProjectRecord>& records, const PipelineConfig& config,
                                     HttpTransport* http, FetchStats* stats,
                                     const std::function<void(std::chrono::milliseconds)>& sleep_fn) {
  std::vector<ImageRef> out(records.size());
  FetchStats local_stats;
  FetchStats& st = stats ? *stats : local_stats;
  st = {};

  if (config.image_source == ImageSource::local) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      out[i].id = records[i].id;
      std::optional<fs::path> found;
      for (const char* ext : {".png", ".jpg", ".jpeg"}) {
        const fs::path candidate = config.image_dir / (records[i].id + ext);
        if (fs::exists(candidate)) {
          found = candidate;
          break;
        }
      }
      if (!found) {
        out[i].error = "no " + records[i].id + ".png, .jpg or .jpeg in the image directory";
        ++st.failures;
        continue;
      }
      try {
        const auto bytes = read_bytes(*found);
        out[i] = store_image(records[i].id, bytes, config.cache_dir);
        ++st.cache_hits;
      } catch (const std::exception& e) {
        out[i].error = e.what();
        ++st.failures;
      }
    }
    return out;
  }

  // URL mode: each distinct URL is resolved once.
  std::map<std::string, std::vector<std::size_t>> by_url;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i].id = records[i].id;
    if (!records[i].image_url || records[i].image_url->empty()) {
      out[i].error = "no image url";
      ++st.failures;
      continue;
    }
    by_url[*records[i].image_url].push_back(i);
  }
  std::vector<std::string> urls;
  for (const auto& [url, _] : by_url) urls.push_back(url);
  std::vector<Download> results(urls.size());
  std::vector<char> hit(urls.size(), 0);
  std::atomic<std::size_t> requests{0};
  const auto sleep = sleep_fn ? sleep_fn : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  run_pool(urls.size(), config.fetch_in_flight, [&](std::size_t u) {
    if (auto cached = read_ref(config.cache_dir, urls[u])) {
      hit[u] = 1;
      try {
        const auto bytes = read_bytes(*cached);
        results[u].image = ImageRef{"", cached, sha256_hex(bytes), ""};
      } catch (const std::exception& e) {
        results[u].error = e.what();
      }
      return;
    }
    if (!http) {
      results[u].error = "image not cached and no HTTP transport available";
      return;
    }
    try {
      results[u] = fetch_url(urls[u], config, *http, requests, sleep);
      if (results[u].image) {
        const std::string name = results[u].image->path->filename().string() + "\n";
        write_bytes(url_ref_path(config.cache_dir, urls[u]),
                    std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
      }
    } catch (const std::exception& e) {
      results[u] = {std::nullopt, e.what()};
    }
  });

  st.downloads = requests.load();
  for (std::size_t u = 0; u < urls.size(); ++u) {
    for (std::size_t i : by_url[urls[u]]) {
      if (results[u].image) {
        out[i] = *results[u].image;
        out[i].id = records[i].id;
        if (hit[u]) ++st.cache_hits;
      } else {
        out[i].error = results[u].error;
        ++st.failures;
      }
    }
  }
  return out;
}

// --- extraction ---------------------------------------------------------------------------

std::vector<std::string> image_feature_columns(const PipelineConfig& config) {
  std::vector<std::string> cols;
  if (config.features.color) {
    for (const char* n : {"color_brightness", "color_saturation", "color_colorfulness", "color_contrast",
                          "color_warm_hue", "color_clarity", "color_blur"}) {
      cols.emplace_back(n);
    }
    if (config.quality_model) cols.emplace_back("color_quality");
  }
  if (config.features.composition) {
    for (const char* n : {"comp_diagonal_dominance", "comp_rule_of_thirds", "comp_balance_vertical",
                          "comp_balance_horizontal", "comp_color_balance_vertical", "comp_color_balance_horizontal",
                          "comp_n_segments"}) {
      cols.emplace_back(n);
    }
  }
  if (config.features.figure_ground) {
    for (const char* n : {"fg_size_difference", "fg_color_difference", "fg_texture_difference"}) cols.emplace_back(n);
  }
  if (config.features.faces) cols.emplace_back("scene_n_faces");
  if (config.features.annotations) {
    for (const auto& s : config.annotation_sources) {
      cols.push_back("scene_" + s.name + "_n_concepts");
      cols.push_back("scene_" + s.name + "_ease");
    }
  }
  return cols;
}

std::vector<std::shared_ptr<annotation::AnnotationClient>> make_annotation_clients(
    const PipelineConfig& config, std::shared_ptr<HttpTransport> http) {
  std::vector<std::shared_ptr<annotation::AnnotationClient>> clients;
  if (!config.features.annotations) return clients;
  for (const auto& src : config.annotation_sources) {
    std::shared_ptr<annotation::AnnotationProvider> provider;
    switch (src.provider) {
      case annotation::Provider::fixture:
        provider = std::make_shared<annotation::FixtureProvider>(src.fixture);
        break;
      case annotation::Provider::google:
        provider = std::make_shared<annotation::GoogleVisionProvider>(
            annotation::credential_from_env(annotation::Provider::google), http);
        break;
      case annotation::Provider::azure:
        provider = std::make_shared<annotation::AzureVisionProvider>(
            annotation::credential_from_env(annotation::Provider::azure), src.endpoint, http);
        break;
    }
    annotation::ClientOptions opts;
    opts.cache_root = config.cache_dir;
    opts.cache_name = src.name;
    opts.max_in_flight = config.annotation_in_flight;
    clients.push_back(std::make_shared<annotation::AnnotationClient>(provider, opts));
  }
  return clients;
}

std::vector<Failure> annotate_images(const std::vector<ImageRef>& images,
                                     const std::vector<std::shared_ptr<annotation::AnnotationClient>>& clients) {
  // Distinct images only, in key order.
  std::map<std::string, fs::path> unique;
  for (const auto& im : images) {
    if (im.path) unique.emplace(im.key, *im.path);
  }
  std::vector<std::pair<std::string, fs::path>> todo(unique.begin(), unique.end());
  std::vector<Failure> failures;
  std::mutex mu;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    run_pool(todo.size(), 4, [&](std::size_t i) {
      try {
        const auto bytes = read_bytes(todo[i].second);
        clients[c]->annotate(bytes);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        failures.push_back({todo[i].first, "annotation:" + std::to_string(c + 1), e.what()});
      }
    });
  }
  std::sort(failures.begin(), failures.end(),
            [](const Failure& a, const Failure& b) { return std::tie(a.id, a.stage) < std::tie(b.id, b.stage); });
  return failures;
}

Extraction extract_features(const std::vector<dataset::ProjectRecord>& records, const std::vector<ImageRef>& images,
                            const PipelineConfig& config,
                            const std::vector<std::shared_ptr<annotation::AnnotationClient>>& clients) {
  if (images.size() != records.size()) throw InvalidArgument("one image reference per record expected");
  Extraction ex;
  const auto columns = image_feature_columns(config);
  const bool any_image_feature = !columns.empty();

  std::optional<color::QualityModel> quality;
  if (config.features.color && config.quality_model) quality = color::QualityModel::load(*config.quality_model);
  std::optional<scene::CascadeClassifier> cascade;
  if (config.features.faces) cascade = scene::load_cascade(config.cascade);
  if (config.features.annotations && clients.size() != config.annotation_sources.size()) {
    throw InvalidArgument("one annotation client per configured source expected");
  }

  // Work is per distinct image; records sharing bytes share the row.
  std::map<std::string, fs::path> unique;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (images[i].path) unique.emplace(images[i].key, *images[i].path);
    else note(ex.failures, records[i].id, "image", images[i].error.empty() ? "no image" : images[i].error);
  }
  std::vector<std::pair<std::string, fs::path>> todo(unique.begin(), unique.end());
  std::vector<std::vector<double>> rows(todo.size(), std::vector<double>(columns.size(), kNaN));
  std::vector<std::vector<std::pair<std::string, std::string>>> errors(todo.size());

  if (any_image_feature) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t t = 0; t < todo.size(); ++t) {
      auto& row = rows[t];
      auto& err = errors[t];
      std::size_t col = 0;
      auto guarded = [&](const char* stage, std::size_t width, auto&& body) {
        try {
          body(row.data() + col);
        } catch (const std::exception& e) {
          std::fill_n(row.begin() + static_cast<std::ptrdiff_t>(col), width, kNaN);
          err.emplace_back(stage, e.what());
        }
        col += width;
      };
      std::vector<std::uint8_t> bytes;
      ImageBuffer img;
      try {
        bytes = read_bytes(todo[t].second);
        img = decode_image_bytes(bytes, todo[t].second.filename().string());
        if (config.max_side > 0) img = resize_bilinear(img, config.max_side);
      } catch (const std::exception& e) {
        err.emplace_back("image", e.what());
        continue;
      }
      if (config.features.color) {
        const std::size_t width = quality ? 8 : 7;
        guarded("color", width, [&](double* out) {
          const auto f = color::extract(img, quality ? &*quality : nullptr);
          const double v[] = {f.brightness, f.saturation, f.colorfulness, f.contrast, f.warm_hue,
                              f.clarity,    f.blur_metric, opt(f.quality_score)};
          std::copy_n(v, width, out);
        });
      }
      if (config.features.composition) {
        guarded("composition", 7, [&](double* out) {
          const auto f = composition::extract(img, config.composition);
          const double v[] = {opt(f.diagonal_dominance),   opt(f.rule_of_thirds),        opt(f.balance_vertical),
                              opt(f.balance_horizontal),   f.color_balance_vertical,     f.color_balance_horizontal,
                              static_cast<double>(f.n_segments)};
          std::copy_n(v, 7, out);
        });
      }
      if (config.features.figure_ground) {
        guarded("figure_ground", 3, [&](double* out) {
          const auto f = figure_ground::extract(img, config.figure_ground);
          out[0] = opt(f.size_difference);
          out[1] = opt(f.color_difference);
          out[2] = opt(f.texture_difference);
        });
      }
      if (config.features.faces) {
        guarded("faces", 1, [&](double* out) {
          out[0] = static_cast<double>(scene::detect_faces(img, *cascade, config.detect).size());
        });
      }
      if (config.features.annotations) {
        for (std::size_t s = 0; s < clients.size(); ++s) {
          const auto& src = config.annotation_sources[s];
          guarded(("annotation:" + src.name).c_str(), 2, [&](double* out) {
            const auto set = clients[s]->annotate(bytes);
            out[0] = scene::num_evoked_concepts(set, src.tau);
            out[1] = opt(scene::ease_of_concept_identification(set));
          });
        }
      }
    }
  }

  std::map<std::string, std::size_t> row_of;
  for (std::size_t t = 0; t < todo.size(); ++t) row_of[todo[t].first] = t;
  if (any_image_feature) {
    dataset::FeatureBlock block{dataset::Tag::image_detail, columns, {}};
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!images[i].path) continue;
      const std::size_t t = row_of.at(images[i].key);
      block.rows[records[i].id] = rows[t];
      for (const auto& [stage, why] : errors[t]) note(ex.failures, records[i].id, stage, why);
    }
    ex.blocks.push_back(std::move(block));
  }

  if (config.features.text) {
    std::vector<text::Dictionary> full, blurb;
    for (const auto& p : config.text_dictionaries) full.push_back(text::load_dictionary(p));
    for (const auto& p : config.blurb_dictionaries) blurb.push_back(text::load_dictionary(p));
    ex.blocks.push_back(dataset::text_block(records, full, blurb));
  }
  std::stable_sort(ex.failures.begin(), ex.failures.end(),
                   [](const Failure& a, const Failure& b) { return std::tie(a.id, a.stage) < std::tie(b.id, b.stage); });
  return ex;
}

std::string failures_jsonl(const std::vector<Failure>& failures) {
  std::string out;
  for (const auto& f : failures) {
    out += json{{"id", f.id}, {"stage", f.stage}, {"reason", f.reason}}.dump();
    out += '\n';
  }
  return out;
}

// --- training grid -------------------------------------------------------------------------

TrainingGrid train_grid(const dataset::FeatureTable& table, const PipelineConfig& config) {
  TrainingGrid grid;
  std::tie(grid.train, grid.test) = dataset::split(table, config.train_fraction, config.seed);
  auto sets = config.variable_sets;
  std::sort(sets.begin(), sets.end());
  sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
  for (auto learner : config.learners) {
    for (int set : sets) {
      GridCell cell;
      cell.variable_set = set;
      cell.learner = learner;
      cell.outcome = models::train(grid.train.select_set(set), learner, config.train);
      const auto& model = cell.outcome.model;
      cell.in_sample = models::evaluate(model, cell.outcome.train_input, models::Scope::in_sample, set);
      const auto test = models::prepare_input(model, grid.test.select_set(set), cell.outcome.train_input,
                                              config.train.knn_k);
      cell.out_of_sample = models::evaluate(model, test, models::Scope::out_of_sample, set);
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

std::string variable_set_label(int set) {
  switch (set) {
    case 1: return "1) Base";
    case 2: return "2) Base + Text details";
    case 3: return "3) Base + Visual counts";
    case 4: return "4) Base + Image details";
    case 5: return "5) All";
  }
  throw InvalidArgument("variable set must be 1..5");
}

namespace {

std::string display_name(models::Learner l) {
  switch (l) {
    case models::Learner::ridge: return "Ridge";
    case models::Learner::lasso: return "Lasso";
    case models::Learner::gbt: return "GBT";
    case models::Learner::bart: return "BART";
  }
  return "";
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string grid_csv(const TrainingGrid& grid) {
  std::string out = "model,variable_set,in_rmse,in_mae,out_rmse,out_mae\n";
  for (const auto& c : grid.cells) {
    out += models::learner_name(c.learner) + "," + std::to_string(c.variable_set) + "," +
           dataset::format_number(c.in_sample.rmse) + "," + dataset::format_number(c.in_sample.mae) + "," +
           dataset::format_number(c.out_of_sample.rmse) + "," + dataset::format_number(c.out_of_sample.mae) + "\n";
  }
  return out;
}

std::string grid_markdown(const TrainingGrid& grid) {
  std::string out =
      "| Model | Variable sets | In-sample RMSE | In-sample MAE | Out-of-sample RMSE | Out-of-sample MAE |\n"
      "|---|---|---:|---:|---:|---:|\n";
  std::optional<models::Learner> previous;
  for (const auto& c : grid.cells) {
    const std::string model = previous == c.learner ? "" : display_name(c.learner);
    previous = c.learner;
    out += "| " + model + " | " + variable_set_label(c.variable_set) + " | " + fixed4(c.in_sample.rmse) + " | " +
           fixed4(c.in_sample.mae) + " | " + fixed4(c.out_of_sample.rmse) + " | " + fixed4(c.out_of_sample.mae) +
           " |\n";
  }
  out += "\nTrain rows: " + std::to_string(grid.train.rows()) + ", test rows: " + std::to_string(grid.test.rows()) +
         ".\n";
  return out;
}

// --- files --------------------------------------------------------------------------------

fs::path Layout::model(int set, models::Learner l) const {
  return root / "models" / ("set" + std::to_string(set) + "_" + models::learner_name(l) + ".json");
}

void write_file(const fs::path& path, const std::string& content) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
}

std::string read_file(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

std::string images_csv(const std::vector<ImageRef>& images) {
  std::string out = "id,sha256,file,error\n";
  for (const auto& im : images) {
    out += dataset::csv_escape(im.id) + "," + im.key + "," + (im.path ? im.path->filename().string() : "") + "," +
           dataset::csv_escape(im.error) + "\n";
  }
  return out;
}

std::vector<std::string> subset_columns(const dataset::FeatureTable& table, const NullSubset& subset) {
  std::vector<std::string> out;
  for (const auto& name : subset.columns) {
    if (!table.column_index(name)) throw ConfigError("null test '" + subset.name + "': no column '" + name + "'");
  }
  for (const auto& c : table.columns) {
    const bool named = std::find(subset.columns.begin(), subset.columns.end(), c.name) != subset.columns.end();
    const bool tagged = std::find(subset.tags.begin(), subset.tags.end(), c.tag) != subset.tags.end();
    if (named || tagged) out.push_back(c.name);
  }
  if (out.empty()) throw ConfigError("null test '" + subset.name + "' selects no columns");
  return out;
}

}  // namespace crowdvis::pipeline
