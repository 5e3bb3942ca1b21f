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

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "crowdvis/imaging.hpp"

namespace crowdvis::composition {

/// Center-surround saliency in [0, 1] with its Otsu binarization level.
/// Pixels with `plane >= threshold` form the salient region.
struct SaliencyMap {
  FloatPlane plane;
  double threshold = 0.0;
  bool degenerate = true;

  bool salient(int x, int y) const noexcept { return !degenerate && plane.at(x, y) >= threshold; }
};

struct SuperpixelLabels {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major, values in [0, k_actual)
  int k_actual = 0;

  int at(int x, int y) const noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
};

enum class Axis { vertical, horizontal };
enum class SegmentCountMode { components, edge_changes };

struct CompositionFeatures {
  std::optional<double> diagonal_dominance;
  std::optional<double> rule_of_thirds;
  std::optional<double> balance_vertical;
  std::optional<double> balance_horizontal;
  double color_balance_vertical = 0.0;
  double color_balance_horizontal = 0.0;
  int n_segments = 1;
};

struct CompositionParams {
  int slic_k = 100;
  double slic_compactness = 10.0;
  int slic_iterations = 10;
  SegmentCountMode segment_mode = SegmentCountMode::components;
};

// Histogram thresholding. `level` splits classes as {<= level} and {> level}.
struct OtsuResult {
  int level = 0;
  bool degenerate = false;
};
using Histogram = std::array<std::uint64_t, 256>;

/// Maximizes between-class variance in exact integer arithmetic; ties go to the
/// smallest level. A histogram with a single occupied bin returns that bin, flagged.
OtsuResult otsu_threshold(const Histogram& hist);

/// Raw center-surround response: sum over s in {2,4,8} of |mean(r=s) - mean(r=4s)|.
FloatPlane center_surround(const FloatPlane& gray);
SaliencyMap saliency_map(const ImageBuffer& img);
SaliencyMap saliency_from_plane(FloatPlane raw);

// Placement scores use pixel-index coordinates: x in [0, w-1], y in [0, h-1].
std::optional<double> diagonal_dominance(const SaliencyMap& sal);
std::optional<double> rule_of_thirds(const SaliencyMap& sal);
std::optional<double> physical_balance(const SaliencyMap& sal, Axis axis);

SuperpixelLabels slic_superpixels(const ImageBuffer& img, int k, double compactness, int iterations = 10);
double color_balance(const ImageBuffer& img, Axis axis, const CompositionParams& params = {});
double color_balance_of(const ImageBuffer& smoothed, Axis axis);
ImageBuffer superpixel_mean_image(const ImageBuffer& img, const SuperpixelLabels& labels);

/// 4-connected component labelling of a class map. Returns the component count.
int label_components(std::span<const int> classes, int width, int height, std::vector<int>& out);

/// Components mode counts 4-connected regions of the Otsu binarization; edge mode
/// counts class transitions between 4-neighbours plus one.
int num_segments(const ImageBuffer& img, SegmentCountMode mode = SegmentCountMode::components);

CompositionFeatures extract(const ImageBuffer& img, const CompositionParams& params = {});

namespace reference {
FloatPlane center_surround(const FloatPlane& gray);
}  // namespace reference

}  // namespace crowdvis::composition
