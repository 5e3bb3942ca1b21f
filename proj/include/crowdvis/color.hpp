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
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "crowdvis/imaging.hpp"

namespace crowdvis::color {

/// Per-pixel color statistics of an RGB image. All fields except
/// `blur_metric` and `quality_score` lie in [0, 1].
struct ColorFeatures {
  double brightness = 0.0;
  double saturation = 0.0;
  double colorfulness = 0.0;
  double contrast = 0.0;
  double warm_hue = 0.0;
  double clarity = 0.0;
  /// Variance of the Laplacian response; larger means sharper.
  double blur_metric = 0.0;
  /// Linear quality score, higher = less distorted. Missing for images under 32x32
  /// or when no quality model is configured.
  std::optional<double> quality_score;
};

double brightness(const ImageBuffer& img);
double saturation(const ImageBuffer& img);
/// (sigma(R-G) + sigma((R+G)/2 - B)) / 510 with population deviations.
double colorfulness(const ImageBuffer& img);
double contrast(const ImageBuffer& img);
/// Share of chromatic pixels with hue in [0, 70] or [330, 360).
double warm_hue(const ImageBuffer& img);
inline constexpr double kClarityLevel = 0.7;
/// Share of pixels with V >= 0.7 (inclusive).
double clarity(const ImageBuffer& img);
double clarity_from_value(const FloatPlane& value);
double blur_metric(const ImageBuffer& img);
double laplacian_variance(const FloatPlane& gray);

// --- no-reference quality -----------------------------------------------------

/// Two scales x (2 GGD parameters of MSCN + 4 orientations x 4 AGGD parameters).
inline constexpr std::size_t kQualityFeatureCount = 36;
using QualityFeatures = std::array<double, kQualityFeatureCount>;

inline constexpr double kMscnStabilizer = 1.0 / 255.0;
inline constexpr double kSigmaFloor = 1e-6;

FloatPlane mscn_coefficients(const FloatPlane& gray);

struct GgdFit {
  double shape;
  double variance;
};
struct AggdFit {
  double shape;
  double mean;
  double left_variance;
  double right_variance;
};
GgdFit fit_ggd(std::span<const double> samples);
AggdFit fit_aggd(std::span<const double> samples);

/// Empty when the image is smaller than 32x32.
std::optional<QualityFeatures> quality_features(const ImageBuffer& img);

/// Linear scorer over standardized quality features.
///
/// File layout (plain text, `#` comments allowed):
///   line 1: feature count
///   line 2: intercept
///   then one line per feature: `weight [mean std]` (mean 0, std 1 when omitted)
class QualityModel {
 public:
  QualityModel(double intercept, std::vector<double> weights, std::vector<double> means = {},
               std::vector<double> stds = {});

  static QualityModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  double score(const QualityFeatures& features) const;
  double intercept() const noexcept { return intercept_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  double intercept_;
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> stds_;
};

/// Adds i.i.d. Gaussian noise (in 8-bit levels) to every channel, clamped to [0, 255].
ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed);

/// Ridge fit of a graded distortion score on pristine tiles and their noisy and
/// blurred copies. Pristine scores 1, the strongest distortion 0.
QualityModel fit_quality_model(std::span<const ImageBuffer> pristine, std::uint64_t seed);

ColorFeatures extract(const ImageBuffer& img, const QualityModel* quality_model);

}  // namespace crowdvis::color
