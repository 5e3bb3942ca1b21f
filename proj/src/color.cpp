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

#include "crowdvis/color.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "crowdvis/error.hpp"
#include "crowdvis/random.hpp"

namespace crowdvis::color {
namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments population_moments(std::span<const double> v) {
  Moments m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / v.size());
  return m;
}

}  // namespace

double brightness(const ImageBuffer& img) {
  return population_moments(rgb_to_hsv(img).value.data()).mean;
}

double saturation(const ImageBuffer& img) {
  return population_moments(rgb_to_hsv(img).saturation.data()).mean;
}

double colorfulness(const ImageBuffer& img) {
  if (img.channels() != 3) return 0.0;
  std::vector<double> rg(img.pixel_count());
  std::vector<double> yb(img.pixel_count());
  std::size_t i = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x, ++i) {
      const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
      rg[i] = r - g;
      yb[i] = 0.5 * (r + g) - b;
    }
  }
  return (population_moments(rg).sd + population_moments(yb).sd) / 510.0;
}

double contrast(const ImageBuffer& img) {
  return population_moments(rgb_to_hsv(img).value.data()).sd;
}

double warm_hue(const ImageBuffer& img) {
  const auto hsv = rgb_to_hsv(img);
  std::size_t warm = 0;
  const auto h = hsv.hue.data();
  const auto s = hsv.saturation.data();
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (s[i] > 0.0 && (h[i] <= 70.0 || h[i] >= 330.0)) ++warm;
  }
  return static_cast<double>(warm) / h.size();
}

double clarity_from_value(const FloatPlane& value) {
  const auto v = value.data();
  const auto n = std::count_if(v.begin(), v.end(), [](double x) { return x >= kClarityLevel; });
  return static_cast<double>(n) / v.size();
}

double clarity(const ImageBuffer& img) { return clarity_from_value(rgb_to_hsv(img).value); }

double laplacian_variance(const FloatPlane& gray) {
  const auto lap = convolve2d(gray, Kernel::laplacian4());
  const auto m = population_moments(lap.data());
  return m.sd * m.sd;
}

double blur_metric(const ImageBuffer& img) { return laplacian_variance(to_grayscale(img)); }

// --- MSCN / BRISQUE-style statistics -------------------------------------------

namespace {

Kernel mscn_window() {
  constexpr int kSize = 7;
  constexpr double kSigma = 7.0 / 6.0;
  Kernel k{kSize, kSize, std::vector<double>(kSize * kSize)};
  double total = 0.0;
  for (int r = 0; r < kSize; ++r) {
    for (int c = 0; c < kSize; ++c) {
      const double dy = r - kSize / 2, dx = c - kSize / 2;
      const double w = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      k.weights[r * kSize + c] = w;
      total += w;
    }
  }
  for (double& w : k.weights) w /= total;
  return k;
}

struct GammaTable {
  std::vector<double> shape;
  std::vector<double> ggd_ratio;   // G(1/a)G(3/a)/G(2/a)^2
  std::vector<double> aggd_ratio;  // G(2/a)^2/(G(1/a)G(3/a))
};

const GammaTable& gamma_table() {
  static const GammaTable table = [] {
    GammaTable t;
    for (int i = 0; i <= 9800; ++i) {
      const double a = 0.2 + 0.001 * i;
      const double g1 = std::tgamma(1.0 / a), g2 = std::tgamma(2.0 / a), g3 = std::tgamma(3.0 / a);
      t.shape.push_back(a);
      t.ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      t.aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
    return t;
  }();
  return table;
}

double closest_shape(const std::vector<double>& ratios, double target) {
  const auto& t = gamma_table();
  std::size_t best = 0;
  double best_err = std::fabs(ratios[0] - target);
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    const double err = std::fabs(ratios[i] - target);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  return t.shape[best];
}

std::vector<double> pair_products(const FloatPlane& m, int dx, int dy) {
  std::vector<double> out;
  const int w = m.width(), h = m.height();
  out.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int y2 = y + dy;
    if (y2 < 0 || y2 >= h) continue;
    for (int x = 0; x < w; ++x) {
      const int x2 = x + dx;
      if (x2 < 0 || x2 >= w) continue;
      out.push_back(m.at(x, y) * m.at(x2, y2));
    }
  }
  return out;
}

void append_scale(const FloatPlane& gray, std::vector<double>& out) {
  const auto mscn = mscn_coefficients(gray);
  const auto ggd = fit_ggd(mscn.data());
  out.push_back(ggd.shape);
  out.push_back(ggd.variance);
  // horizontal, vertical, main diagonal, anti-diagonal neighbours
  constexpr int shifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};
  for (const auto& s : shifts) {
    const auto prod = pair_products(mscn, s[0], s[1]);
    const auto a = fit_aggd(prod);
    out.push_back(a.shape);
    out.push_back(a.mean);
    out.push_back(a.left_variance);
    out.push_back(a.right_variance);
  }
}

}  // namespace

FloatPlane mscn_coefficients(const FloatPlane& gray) {
  const auto window = mscn_window();
  const auto mu = convolve2d(gray, window);
  FloatPlane sq(gray.width(), gray.height());
  for (std::size_t i = 0; i < sq.size(); ++i) sq.data()[i] = gray.data()[i] * gray.data()[i];
  const auto mu_sq = convolve2d(sq, window);
  FloatPlane out(gray.width(), gray.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mu.data()[i];
    const double sigma = std::sqrt(std::fabs(mu_sq.data()[i] - m * m));
    out.data()[i] = (gray.data()[i] - m) / (std::max(sigma, kSigmaFloor) + kMscnStabilizer);
  }
  return out;
}

GgdFit fit_ggd(std::span<const double> x) {
  double sq = 0.0, abs_sum = 0.0;
  for (double v : x) {
    sq += v * v;
    abs_sum += std::fabs(v);
  }
  const double n = static_cast<double>(std::max<std::size_t>(x.size(), 1));
  const double sigma_sq = std::max(sq / n, kSigmaFloor * kSigmaFloor);
  const double e_abs = std::max(abs_sum / n, kSigmaFloor);
  const double rho = sigma_sq / (e_abs * e_abs);
  return {closest_shape(gamma_table().ggd_ratio, rho), sq / n};
}

AggdFit fit_aggd(std::span<const double> x) {
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq = 0.0;
  std::size_t left_n = 0, right_n = 0;
  for (double v : x) {
    if (v < 0) {
      left_sq += v * v;
      ++left_n;
    } else if (v > 0) {
      right_sq += v * v;
      ++right_n;
    }
    abs_sum += std::fabs(v);
    sq += v * v;
  }
  const double n = static_cast<double>(std::max<std::size_t>(x.size(), 1));
  const double left_std = std::max(std::sqrt(left_n ? left_sq / left_n : 0.0), kSigmaFloor);
  const double right_std = std::max(std::sqrt(right_n ? right_sq / right_n : 0.0), kSigmaFloor);
  const double gamma_hat = left_std / right_std;
  const double e_abs = std::max(abs_sum / n, kSigmaFloor);
  const double r_hat = e_abs * e_abs / std::max(sq / n, kSigmaFloor * kSigmaFloor);
  const double g2 = gamma_hat * gamma_hat;
  const double r_norm = r_hat * (g2 * gamma_hat + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));
  const double shape = closest_shape(gamma_table().aggd_ratio, r_norm);
  const double ratio = std::sqrt(std::tgamma(1.0 / shape) / std::tgamma(3.0 / shape));
  const double bl = left_std * ratio;
  const double br = right_std * ratio;
  const double mean = (br - bl) * std::tgamma(2.0 / shape) / std::tgamma(1.0 / shape);
  return {shape, mean, left_std * left_std, right_std * right_std};
}

std::optional<QualityFeatures> quality_features(const ImageBuffer& img) {
  if (img.width() < 32 || img.height() < 32) return std::nullopt;
  const auto gray = to_grayscale(img);
  std::vector<double> feats;
  feats.reserve(kQualityFeatureCount);
  append_scale(gray, feats);
  append_scale(resize_plane(gray, gray.width() / 2, gray.height() / 2), feats);
  QualityFeatures out{};
  std::copy(feats.begin(), feats.end(), out.begin());
  return out;
}

QualityModel::QualityModel(double intercept, std::vector<double> weights, std::vector<double> means,
                           std::vector<double> stds)
    : intercept_(intercept), weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
  if (weights_.size() != kQualityFeatureCount) {
    throw ConfigError("quality model must have " + std::to_string(kQualityFeatureCount) + " weights, got " +
                      std::to_string(weights_.size()));
  }
  if (means_.empty()) means_.assign(weights_.size(), 0.0);
  if (stds_.empty()) stds_.assign(weights_.size(), 1.0);
  if (means_.size() != weights_.size() || stds_.size() != weights_.size()) {
    throw ConfigError("quality model standardization size mismatch");
  }
  for (double s : stds_) {
    if (!(s > 0.0)) throw ConfigError("quality model standard deviations must be positive");
  }
}

QualityModel QualityModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("quality model file not found: expected at " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line);
  }
  auto fail = [&](const std::string& why) -> QualityModel {
    throw ConfigError("corrupt quality model " + path.string() + ": " + why);
  };
  if (lines.size() < 2) return fail("missing header or intercept");
  std::size_t count = 0;
  double intercept = 0.0;
  {
    std::istringstream h(lines[0]);
    if (!(h >> count)) return fail("header must hold the feature count");
    std::istringstream c(lines[1]);
    if (!(c >> intercept)) return fail("intercept line is not a number");
  }
  if (count != kQualityFeatureCount) {
    return fail("feature count " + std::to_string(count) + " does not match " +
                std::to_string(kQualityFeatureCount));
  }
  if (lines.size() - 2 != count) return fail("expected " + std::to_string(count) + " weight lines");
  std::vector<double> w, m, s;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    double wi = 0, mi = 0, si = 1;
    if (!(ls >> wi)) return fail("weight line " + std::to_string(i - 1) + " is not a number");
    if (ls >> mi) {
      if (!(ls >> si)) return fail("weight line " + std::to_string(i - 1) + " has a mean but no std");
    }
    w.push_back(wi);
    m.push_back(mi);
    s.push_back(si);
  }
  return QualityModel(intercept, std::move(w), std::move(m), std::move(s));
}

void QualityModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write quality model to " + path.string());
  out << "# crowdvis linear quality model: higher score = less distorted\n";
  out << weights_.size() << "\n" << std::setprecision(17) << intercept_ << "\n";
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out << weights_[i] << " " << means_[i] << " " << stds_[i] << "\n";
  }
}

double QualityModel::score(const QualityFeatures& f) const {
  double s = intercept_;
  for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * (f[i] - means_[i]) / stds_[i];
  return s;
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer out = img;
  for (auto& v : out.data()) {
    v = static_cast<std::uint8_t>(std::clamp(std::lround(v + sigma * rng.normal()), 0L, 255L));
  }
  return out;
}

namespace {

ImageBuffer blur_rgb(const ImageBuffer& img, double sigma) {
  ImageBuffer out = img;
  for (int c = 0; c < img.channels(); ++c) {
    FloatPlane p(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) p.at(x, y) = img.at(x, y, c);
    const auto b = gaussian_blur(p, sigma);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(b.at(x, y)), 0L, 255L));
  }
  return out;
}

}  // namespace

QualityModel fit_quality_model(std::span<const ImageBuffer> pristine, std::uint64_t seed) {
  constexpr double kRidge = 1.0;
  constexpr double kLevels[3] = {0.6, 0.3, 0.0};
  constexpr double kNoise[3] = {10.0, 25.0, 40.0};
  constexpr double kBlur[3] = {1.0, 2.0, 3.0};
  std::vector<QualityFeatures> rows;
  std::vector<double> target;
  std::uint64_t noise_seed = seed;
  for (const auto& img : pristine) {
    const auto f = quality_features(img);
    if (!f) continue;
    rows.push_back(*f);
    target.push_back(1.0);
    for (int d = 0; d < 3; ++d) {
      rows.push_back(*quality_features(add_gaussian_noise(img, kNoise[d], noise_seed++)));
      target.push_back(kLevels[d]);
      rows.push_back(*quality_features(blur_rgb(img, kBlur[d])));
      target.push_back(kLevels[d]);
    }
  }
  if (rows.size() < 2) throw InvalidArgument("quality model needs at least one image of 32x32 or larger");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(kQualityFeatureCount);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rows[i][j];
  std::vector<double> means(p), stds(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    means[j] = x.col(j).mean();
    const double var = (x.col(j).array() - means[j]).square().mean();
    stds[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    x.col(j) = (x.col(j).array() - means[j]) / stds[j];
  }
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
  const double intercept = y.mean();
  y.array() -= intercept;
  const Eigen::MatrixXd a = x.transpose() * x + kRidge * Eigen::MatrixXd::Identity(p, p);
  const Eigen::VectorXd beta = a.ldlt().solve(x.transpose() * y);
  return QualityModel(intercept, std::vector<double>(beta.data(), beta.data() + p), std::move(means),
                      std::move(stds));
}

ColorFeatures extract(const ImageBuffer& img, const QualityModel* quality_model) {
  ColorFeatures out;
  const auto hsv = rgb_to_hsv(img);
  const auto v = population_moments(hsv.value.data());
  out.brightness = v.mean;
  out.contrast = v.sd;
  out.saturation = population_moments(hsv.saturation.data()).mean;
  out.colorfulness = colorfulness(img);
  out.warm_hue = warm_hue(img);
  out.clarity = clarity_from_value(hsv.value);
  out.blur_metric = blur_metric(img);
  if (quality_model != nullptr) {
    if (const auto q = quality_features(img)) out.quality_score = quality_model->score(*q);
  }
  return out;
}

}  // namespace crowdvis::color
