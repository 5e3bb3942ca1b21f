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

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdvis/annotation.hpp"
#include "crowdvis/imaging.hpp"

namespace crowdvis::scene {

// --- Haar cascade ------------------------------------------------------------

struct HaarRect {
  int x = 0, y = 0, width = 0, height = 0;
  double weight = 0.0;
};

struct HaarFeature {
  std::vector<HaarRect> rects;
};

// Decision stump: `value < threshold` selects `left`.
struct WeakClassifier {
  int feature = 0;
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
};

struct Stage {
  double threshold = 0.0;
  std::vector<WeakClassifier> weak;
};

struct CascadeClassifier {
  int window_width = 0;
  int window_height = 0;
  std::vector<Stage> stages;
  std::vector<HaarFeature> features;
};

/// Reads the stump-cascade XML format of pre-trained frontal-face detectors.
/// Throws ParseError with line or element context.
CascadeClassifier load_cascade(const std::filesystem::path& path);
CascadeClassifier parse_cascade(std::istream& in, const std::string& label = "<stream>");
/// Throws ParseError when a stage is empty, a feature index dangles, or a
/// rectangle leaves the base window.
void validate_cascade(const CascadeClassifier& cascade);

struct Rect {
  int x = 0, y = 0, width = 0, height = 0;
  bool operator==(const Rect&) const = default;
};

double iou(const Rect& a, const Rect& b);

struct DetectParams {
  double scale_factor = 1.1;
  int step = 2;
  double group_iou = 0.3;
  // A kept detection needs this many overlapping raw windows besides itself.
  int min_neighbors = 3;
};

/// Windows accepted by every stage, in original-image coordinates, sorted.
std::vector<Rect> raw_detections(const ImageBuffer& img, const CascadeClassifier& cascade,
                                 const DetectParams& params = {});
/// Grouped detections, sorted by (y, x, size).
std::vector<Rect> detect_faces(const ImageBuffer& img, const CascadeClassifier& cascade,
                               const DetectParams& params = {});

// --- scene features ------------------------------------------------------------

/// Number of labels with confidence >= tau.
int num_evoked_concepts(const annotation::AnnotationSet& ann, double tau = 0.5);
/// Maximum confidence over all labels; missing for an empty set.
std::optional<double> ease_of_concept_identification(const annotation::AnnotationSet& ann);

struct SceneFeatures {
  int n_faces = 0;
  std::map<std::string, int> n_concepts;                         // by provider name
  std::map<std::string, std::optional<double>> max_confidence;  // by provider name
};

}  // namespace crowdvis::scene
