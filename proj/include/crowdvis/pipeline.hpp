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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crowdvis/annotation.hpp"
#include "crowdvis/composition.hpp"
#include "crowdvis/dataset.hpp"
#include "crowdvis/figure_ground.hpp"
#include "crowdvis/http.hpp"
#include "crowdvis/interpret.hpp"
#include "crowdvis/models.hpp"
#include "crowdvis/scene.hpp"

namespace crowdvis::pipeline {

// --- configuration ----------------------------------------------------------------

enum class ImageSource { local, url };

struct AnnotationSource {
  std::string name;  // column infix and cache directory: scene_<name>_n_concepts
  annotation::Provider provider = annotation::Provider::fixture;
  std::filesystem::path fixture;  // fixture provider only
  std::string endpoint;           // azure only
  double tau = 0.5;
};

struct FeatureToggles {
  bool color = true;
  bool composition = true;
  bool figure_ground = true;
  bool faces = true;
  bool annotations = true;
  bool text = true;
};

struct NullSubset {
  std::string name;
  std::vector<std::string> columns;  // explicit names
  std::vector<dataset::Tag> tags;    // or every column with one of these tags
};

struct InterpretSettings {
  int variable_set = 5;
  int replicates = 10;
  models::BartParams bart{.m = 50, .n_burn = 250, .n_post = 500};
  std::vector<std::string> pdp_variables;  // empty: n_images, n_videos when present
  std::vector<NullSubset> null_tests;
  int null_resamples = 100;
  interpret::NullMode null_mode = interpret::NullMode::permute;
  models::Learner null_learner = models::Learner::bart;
};

struct PipelineConfig {
  std::filesystem::path input;
  std::optional<dataset::Format> input_format;  // from the extension when unset

  ImageSource image_source = ImageSource::local;
  std::filesystem::path image_dir;  // local: <dir>/<id>.png|.jpg|.jpeg
  int fetch_in_flight = 8;
  int fetch_tries = 3;
  std::chrono::milliseconds fetch_base_delay{500};
  int max_side = 512;  // images are downscaled to this before extraction; 0 keeps size

  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  FeatureToggles features;
  std::optional<std::filesystem::path> quality_model;  // no color_quality column without one
  composition::CompositionParams composition;
  figure_ground::SegmentParams figure_ground;
  std::filesystem::path cascade;
  scene::DetectParams detect;
  std::vector<AnnotationSource> annotation_sources;
  int annotation_in_flight = 4;
  std::vector<std::filesystem::path> text_dictionaries;   // full text
  std::vector<std::filesystem::path> blurb_dictionaries;

  std::vector<models::Learner> learners{models::Learner::ridge, models::Learner::lasso, models::Learner::bart,
                                        models::Learner::gbt};
  std::vector<int> variable_sets{1, 2, 3, 4, 5};
  double train_fraction = 0.8;
  models::TrainConfig train;

  InterpretSettings interpret;
};

/// JSON config. Relative paths resolve against the config file's directory.
/// Unknown keys, wrong types and out-of-range values throw ConfigError naming
/// the offending key.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
/// The run seed and every seed derived from it (split, CV, BART replicates).
void set_seed(PipelineConfig& config, std::uint64_t seed);

// --- images ---------------------------------------------------------------------------

struct ImageRef {
  std::string id;
  std::optional<std::filesystem::path> path;  // cache/images/<sha256>.<ext>
  std::string key;                            // sha256 of the bytes
  std::string error;                          // why `path` is empty
};

struct FetchStats {
  std::size_t downloads = 0;   // HTTP GETs issued, retries included
  std::size_t cache_hits = 0;  // records resolved without touching the network
  std::size_t failures = 0;
};

/// Content-addressed image cache. Downloads go through `http` with at most
/// `fetch_in_flight` concurrent requests; a URL seen before resolves through
/// cache/images/by-url/ without a request. Failures never throw: the record
/// gets an error instead. Output follows record order.
std::vector<ImageRef> resolve_images(const std::vector<dataset::ProjectRecord>& records, const PipelineConfig& config,
                                     HttpTransport* http, FetchStats* stats = nullptr,
                                     const std::function<void(std::chrono::milliseconds)>& sleep = {});

// --- extraction -------------------------------------------------------------------------

struct Failure {
  std::string id;
  std::string stage;  // image, color, composition, figure_ground, faces, annotation:<name>
  std::string reason;
};

/// Image-detail columns implied by the config, in output order.
std::vector<std::string> image_feature_columns(const PipelineConfig& config);

/// Builds providers for every annotation source. Live providers read their key
/// from the environment and share `http`.
std::vector<std::shared_ptr<annotation::AnnotationClient>> make_annotation_clients(
    const PipelineConfig& config, std::shared_ptr<HttpTransport> http);

/// Annotates every resolved image through the cached clients (one per source).
/// Failures are logged, never thrown.
std::vector<Failure> annotate_images(const std::vector<ImageRef>& images,
                                     const std::vector<std::shared_ptr<annotation::AnnotationClient>>& clients);

struct Extraction {
  std::vector<dataset::FeatureBlock> blocks;  // image block, then text block when enabled
  std::vector<Failure> failures;              // sorted by id, then stage
};

/// One image-detail row per record with an image; a failing module leaves its
/// columns missing and logs the reason. Images run in parallel.
Extraction extract_features(const std::vector<dataset::ProjectRecord>& records, const std::vector<ImageRef>& images,
                            const PipelineConfig& config,
                            const std::vector<std::shared_ptr<annotation::AnnotationClient>>& clients);

std::string failures_jsonl(const std::vector<Failure>& failures);

// --- training grid --------------------------------------------------------------------------

struct GridCell {
  int variable_set = 0;
  models::Learner learner = models::Learner::ridge;
  models::EvalReport in_sample;
  models::EvalReport out_of_sample;
  models::TrainOutcome outcome;
};

struct TrainingGrid {
  std::vector<GridCell> cells;  // learner-major, sets ascending
  dataset::FeatureTable train;
  dataset::FeatureTable test;
};

/// Splits once with the config seed, then fits every (learner, set) pair.
TrainingGrid train_grid(const dataset::FeatureTable& table, const PipelineConfig& config);

std::string variable_set_label(int set);
std::string grid_csv(const TrainingGrid& grid);
/// Model, set, in-sample RMSE/MAE, out-of-sample RMSE/MAE.
std::string grid_markdown(const TrainingGrid& grid);

// --- files ----------------------------------------------------------------------------------

/// Output layout under the output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path rejects() const { return root / "rejects.jsonl"; }
  std::filesystem::path images() const { return root / "images.csv"; }
  std::filesystem::path features() const { return root / "features.csv"; }
  std::filesystem::path manifest() const { return root / "features.manifest.json"; }
  std::filesystem::path failures() const { return root / "extract_failures.jsonl"; }
  std::filesystem::path model(int set, models::Learner l) const;
  std::filesystem::path evaluation_csv() const { return root / "evaluation.csv"; }
  std::filesystem::path evaluation_md() const { return root / "evaluation.md"; }
  std::filesystem::path importance_csv() const { return root / "importance.csv"; }
  std::filesystem::path categories_csv() const { return root / "importance_categories.csv"; }
  std::filesystem::path importance_md() const { return root / "importance.md"; }
  std::filesystem::path null_csv(const std::string& name) const { return root / ("null_" + name + ".csv"); }
  std::filesystem::path pdp_csv() const { return root / "pdp.csv"; }
  std::filesystem::path pdp_md() const { return root / "pdp.md"; }
  std::filesystem::path report() const { return root / "report.md"; }
};

/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string images_csv(const std::vector<ImageRef>& images);

/// Columns for a null subset: explicit names plus tag matches, table order.
std::vector<std::string> subset_columns(const dataset::FeatureTable& table, const NullSubset& subset);

}  // namespace crowdvis::pipeline
