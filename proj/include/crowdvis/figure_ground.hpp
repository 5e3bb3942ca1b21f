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

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "crowdvis/imaging.hpp"

namespace crowdvis::figure_ground {

/// Full-covariance Gaussian mixture over RGB in [0, 255].
class ColorGmm {
 public:
  explicit ColorGmm(int components = 5);

  /// k-means initialisation (luminance-quantile seeds) followed by a parameter fit.
  void init(std::span<const Eigen::Vector3d> samples);
  /// Hard-assign each sample to its most likely component, then refit.
  void refine(std::span<const Eigen::Vector3d> samples);

  double density(const Eigen::Vector3d& z) const;
  double neg_log_likelihood(const Eigen::Vector3d& z) const;
  /// Smallest Mahalanobis distance to any populated component.
  double min_mahalanobis(const Eigen::Vector3d& z) const;
  int components() const noexcept { return static_cast<int>(weights_.size()); }

 private:
  void fit(std::span<const Eigen::Vector3d> samples, const std::vector<int>& assignment);
  int most_likely(const Eigen::Vector3d& z) const;

  std::vector<double> weights_;
  std::vector<Eigen::Vector3d> means_;
  std::vector<Eigen::Matrix3d> inv_cov_;
  std::vector<double> log_norm_;
};

enum class Method { graphcut, saliency_fallback };

struct FigureGroundMask {
  BinaryMask foreground;
  bool converged = false;
  Method method = Method::graphcut;
  int iterations = 0;
  std::optional<ColorGmm> foreground_model;
  std::optional<ColorGmm> background_model;
};

struct SegmentParams {
  double border_margin = 0.05;
  int gmm_components = 5;
  double gamma = 50.0;
  int max_iterations = 5;
  double min_change_fraction = 0.001;
};

FigureGroundMask segment_figure_ground(const ImageBuffer& img, const SegmentParams& params = {});

struct FigureGroundFeatures {
  std::optional<double> size_difference;
  std::optional<double> color_difference;
  std::optional<double> texture_difference;
};

/// (|FG| - |BG|) / (|FG| + |BG|); missing when either class is empty.
std::optional<double> size_difference(const BinaryMask& fg);
/// Euclidean distance between mean RGB colors / (255 sqrt 3).
std::optional<double> color_difference(const ImageBuffer& img, const BinaryMask& fg);
/// |edge density(FG) - edge density(BG)| over Canny edges.
std::optional<double> texture_difference(const ImageBuffer& img, const BinaryMask& fg, double canny_low = 0.1,
                                         double canny_high = 0.2);

BinaryMask swap_classes(const BinaryMask& fg);

FigureGroundFeatures extract(const ImageBuffer& img, const SegmentParams& params = {});

}  // namespace crowdvis::figure_ground
