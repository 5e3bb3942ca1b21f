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

#include "crowdvis/figure_ground.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "crowdvis/composition.hpp"
#include "crowdvis/error.hpp"
#include "crowdvis/maxflow.hpp"

namespace crowdvis::figure_ground {
namespace {

constexpr double kCovarianceRidge = 0.01;
constexpr double kHardCost = 1e9;
constexpr int kKmeansIterations = 10;

Eigen::Vector3d pixel(const ImageBuffer& img, int x, int y) {
  return {static_cast<double>(img.at(x, y, 0)), static_cast<double>(img.at(x, y, 1)),
          static_cast<double>(img.at(x, y, 2))};
}

}  // namespace

ColorGmm::ColorGmm(int components) {
  if (components < 1) throw InvalidArgument("GMM needs at least one component");
  weights_.assign(components, 0.0);
  means_.assign(components, Eigen::Vector3d::Zero());
  inv_cov_.assign(components, Eigen::Matrix3d::Identity());
  log_norm_.assign(components, 0.0);
}

void ColorGmm::init(std::span<const Eigen::Vector3d> samples) {
  const int k = components();
  std::vector<int> assignment(samples.size(), 0);
  if (samples.empty()) {
    fit(samples, assignment);
    return;
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  auto lum = [&](std::size_t i) { return 0.299 * samples[i][0] + 0.587 * samples[i][1] + 0.114 * samples[i][2]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lum(a) < lum(b); });
  std::vector<Eigen::Vector3d> centers(k, Eigen::Vector3d::Zero());
  for (int c = 0; c < k; ++c) {
    const std::size_t lo = order.size() * c / k, hi = order.size() * (c + 1) / k;
    if (hi <= lo) {
      centers[c] = samples[order[std::min(lo, order.size() - 1)]];
      continue;
    }
    for (std::size_t i = lo; i < hi; ++i) centers[c] += samples[order[i]];
    centers[c] /= static_cast<double>(hi - lo);
  }
  for (int it = 0; it < kKmeansIterations; ++it) {
    std::vector<Eigen::Vector3d> sums(k, Eigen::Vector3d::Zero());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      int best = 0;
      double bd = (samples[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (samples[i] - centers[c]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      assignment[i] = best;
      sums[best] += samples[i];
      ++counts[best];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
    }
  }
  fit(samples, assignment);
}

void ColorGmm::refine(std::span<const Eigen::Vector3d> samples) {
  std::vector<int> assignment(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) assignment[i] = most_likely(samples[i]);
  fit(samples, assignment);
}

void ColorGmm::fit(std::span<const Eigen::Vector3d> samples, const std::vector<int>& assignment) {
  const int k = components();
  std::vector<Eigen::Vector3d> sum(k, Eigen::Vector3d::Zero());
  std::vector<Eigen::Matrix3d> outer(k, Eigen::Matrix3d::Zero());
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int c = assignment[i];
    sum[c] += samples[i];
    outer[c] += samples[i] * samples[i].transpose();
    ++count[c];
  }
  const double total = static_cast<double>(samples.size());
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0) {
      weights_[c] = 0.0;
      continue;
    }
    const double n = static_cast<double>(count[c]);
    weights_[c] = n / total;
    means_[c] = sum[c] / n;
    Eigen::Matrix3d cov = outer[c] / n - means_[c] * means_[c].transpose();
    cov += kCovarianceRidge * Eigen::Matrix3d::Identity();
    inv_cov_[c] = cov.inverse();
    log_norm_[c] = -0.5 * (3.0 * std::log(2.0 * M_PI) + std::log(cov.determinant()));
  }
}

int ColorGmm::most_likely(const Eigen::Vector3d& z) const {
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < components(); ++c) {
    if (weights_[c] <= 0.0) continue;
    const Eigen::Vector3d d = z - means_[c];
    const double ll = std::log(weights_[c]) + log_norm_[c] - 0.5 * d.dot(inv_cov_[c] * d);
    if (ll > best_ll) {
      best_ll = ll;
      best = c;
    }
  }
  return best;
}

double ColorGmm::neg_log_likelihood(const Eigen::Vector3d& z) const {
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(weights_.size());
  for (int c = 0; c < components(); ++c) {
    if (weights_[c] <= 0.0) continue;
    const Eigen::Vector3d d = z - means_[c];
    terms.push_back(std::log(weights_[c]) + log_norm_[c] - 0.5 * d.dot(inv_cov_[c] * d));
    max_term = std::max(max_term, terms.back());
  }
  if (terms.empty()) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double t : terms) s += std::exp(t - max_term);
  return -(max_term + std::log(s));
}

double ColorGmm::density(const Eigen::Vector3d& z) const { return std::exp(-neg_log_likelihood(z)); }

double ColorGmm::min_mahalanobis(const Eigen::Vector3d& z) const {
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < components(); ++c) {
    if (weights_[c] <= 0.0) continue;
    const Eigen::Vector3d d = z - means_[c];
    best = std::min(best, std::sqrt(std::max(0.0, d.dot(inv_cov_[c] * d))));
  }
  return best;
}

namespace {

FigureGroundMask saliency_fallback(const ImageBuffer& img, FigureGroundMask out) {
  out.method = Method::saliency_fallback;
  out.foreground_model.reset();
  out.background_model.reset();
  const auto sal = composition::saliency_map(img);
  BinaryMask fg(img.width(), img.height());
  if (!sal.degenerate) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) fg.set(x, y, sal.salient(x, y));
    }
  }
  const std::size_t n_fg = fg.count();
  out.converged = !sal.degenerate && n_fg > 0 && n_fg < img.pixel_count();
  out.foreground = std::move(fg);
  return out;
}

}  // namespace

FigureGroundMask segment_figure_ground(const ImageBuffer& img, const SegmentParams& params) {
  const int w = img.width(), h = img.height();
  FigureGroundMask out;
  out.foreground = BinaryMask(w, h);
  if (w < 32 || h < 32 || img.channels() != 3) return out;
  if (!(params.border_margin > 0.0 && params.border_margin < 0.5)) {
    throw InvalidArgument("border margin must be in (0, 0.5)");
  }

  const int mx = std::max(1, static_cast<int>(std::lround(params.border_margin * w)));
  const int my = std::max(1, static_cast<int>(std::lround(params.border_margin * h)));
  const std::size_t n = img.pixel_count();
  std::vector<Eigen::Vector3d> z(n);
  std::vector<char> hard_bg(n, 0);
  std::vector<char> fg(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      z[i] = pixel(img, x, y);
      hard_bg[i] = (x < mx || x >= w - mx || y < my || y >= h - my) ? 1 : 0;
      fg[i] = hard_bg[i] ? 0 : 1;
    }
  }

  // Contrast-sensitive smoothness weights on right and down neighbours.
  double sq_sum = 0.0;
  std::size_t pairs = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) sq_sum += (z[i] - z[i + 1]).squaredNorm(), ++pairs;
      if (y + 1 < h) sq_sum += (z[i] - z[i + w]).squaredNorm(), ++pairs;
    }
  }
  const double mean_sq = pairs ? sq_sum / pairs : 0.0;
  const double beta = mean_sq > 0.0 ? 1.0 / (2.0 * mean_sq) : 0.0;
  std::vector<double> right_w(n, 0.0), down_w(n, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) right_w[i] = params.gamma * std::exp(-beta * (z[i] - z[i + 1]).squaredNorm());
      if (y + 1 < h) down_w[i] = params.gamma * std::exp(-beta * (z[i] - z[i + w]).squaredNorm());
    }
  }

  ColorGmm fg_gmm(params.gmm_components), bg_gmm(params.gmm_components);
  auto collect = [&](char want) {
    std::vector<Eigen::Vector3d> s;
    for (std::size_t i = 0; i < n; ++i) {
      if (fg[i] == want) s.push_back(z[i]);
    }
    return s;
  };

  bool empty_class = false;
  for (int it = 0; it < params.max_iterations; ++it) {
    const auto fg_samples = collect(1);
    const auto bg_samples = collect(0);
    if (fg_samples.empty() || bg_samples.empty()) {
      empty_class = true;
      break;
    }
    if (it == 0) {
      fg_gmm.init(fg_samples);
      bg_gmm.init(bg_samples);
    } else {
      fg_gmm.refine(fg_samples);
      bg_gmm.refine(bg_samples);
    }

    MaxFlowGraph graph(static_cast<int>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (hard_bg[i]) {
        graph.add_terminal_weights(static_cast<int>(i), 0.0, kHardCost);
      } else {
        graph.add_terminal_weights(static_cast<int>(i), bg_gmm.neg_log_likelihood(z[i]),
                                   fg_gmm.neg_log_likelihood(z[i]));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (x + 1 < w) graph.add_edge(i, i + 1, right_w[i], right_w[i]);
        if (y + 1 < h) graph.add_edge(i, i + w, down_w[i], down_w[i]);
      }
    }
    graph.solve();
    std::size_t changes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char v = (!hard_bg[i] && graph.segment(static_cast<int>(i)) == MaxFlowGraph::Segment::source) ? 1 : 0;
      if (v != fg[i]) ++changes;
      fg[i] = v;
    }
    out.iterations = it + 1;
    if (static_cast<double>(changes) < params.min_change_fraction * static_cast<double>(n)) break;
  }

  const std::size_t n_fg = static_cast<std::size_t>(std::count(fg.begin(), fg.end(), 1));
  if (empty_class || n_fg == 0 || n_fg == n) return saliency_fallback(img, std::move(out));

  for (std::size_t i = 0; i < n; ++i) out.foreground.bits[i] = static_cast<std::uint8_t>(fg[i]);
  out.converged = true;
  out.method = Method::graphcut;
  // Final models describe the returned partition.
  fg_gmm.refine(collect(1));
  bg_gmm.refine(collect(0));
  out.foreground_model = fg_gmm;
  out.background_model = bg_gmm;
  return out;
}

std::optional<double> size_difference(const BinaryMask& fg) {
  const double total = static_cast<double>(fg.bits.size());
  const double n_fg = static_cast<double>(fg.count());
  if (n_fg == 0 || n_fg == total) return std::nullopt;
  return (n_fg - (total - n_fg)) / total;
}

std::optional<double> color_difference(const ImageBuffer& img, const BinaryMask& fg) {
  Eigen::Vector3d sf = Eigen::Vector3d::Zero(), sb = Eigen::Vector3d::Zero();
  double nf = 0, nb = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (fg.at(x, y)) {
        sf += pixel(img, x, y);
        ++nf;
      } else {
        sb += pixel(img, x, y);
        ++nb;
      }
    }
  }
  if (nf == 0 || nb == 0) return std::nullopt;
  return (sf / nf - sb / nb).norm() / (255.0 * std::sqrt(3.0));
}

std::optional<double> texture_difference(const ImageBuffer& img, const BinaryMask& fg, double canny_low,
                                         double canny_high) {
  const auto edges = canny_edges(to_grayscale(img), canny_low, canny_high);
  double ef = 0, eb = 0, nf = 0, nb = 0;
  for (std::size_t i = 0; i < fg.bits.size(); ++i) {
    if (fg.bits[i]) {
      ++nf;
      ef += edges.bits[i];
    } else {
      ++nb;
      eb += edges.bits[i];
    }
  }
  if (nf == 0 || nb == 0) return std::nullopt;
  return std::fabs(ef / nf - eb / nb);
}

BinaryMask swap_classes(const BinaryMask& fg) {
  BinaryMask out = fg;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

FigureGroundFeatures extract(const ImageBuffer& img, const SegmentParams& params) {
  FigureGroundFeatures out;
  const auto seg = segment_figure_ground(img, params);
  if (!seg.converged) return out;
  out.size_difference = size_difference(seg.foreground);
  out.color_difference = color_difference(img, seg.foreground);
  out.texture_difference = texture_difference(img, seg.foreground);
  return out;
}

}  // namespace crowdvis::figure_ground
