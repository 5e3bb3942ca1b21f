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

#include "crowdvis/composition.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "crowdvis/error.hpp"

namespace crowdvis::composition {
namespace {

using boost::multiprecision::cpp_int;

double window_mean(const FloatPlane& table, int x, int y, int r) noexcept {
  const int x0 = std::max(0, x - r), y0 = std::max(0, y - r);
  const int x1 = std::min(table.width() - 1, x + r), y1 = std::min(table.height() - 1, y + r);
  const double area = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
  return rect_sum(table, x0, y0, x1, y1) / area;
}

constexpr int kScales[3] = {2, 4, 8};

double center_surround_at(const FloatPlane& table, int x, int y) noexcept {
  double acc = 0.0;
  for (int s : kScales) acc += std::fabs(window_mean(table, x, y, s) - window_mean(table, x, y, 4 * s));
  return acc;
}

}  // namespace

OtsuResult otsu_threshold(const Histogram& hist) {
  cpp_int total = 0, weighted_total = 0;
  int occupied = 0, last_occupied = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    weighted_total += cpp_int(hist[i]) * i;
    if (hist[i] > 0) {
      ++occupied;
      last_occupied = i;
    }
  }
  if (occupied == 0) throw InvalidArgument("otsu_threshold: empty histogram");
  if (occupied == 1) return {last_occupied, true};

  cpp_int w0 = 0, s0 = 0;
  cpp_int best_num = -1, best_den = 1;
  int best_level = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    s0 += cpp_int(hist[t]) * t;
    if (w0 == 0 || w0 == total) continue;
    const cpp_int diff = total * s0 - weighted_total * w0;
    const cpp_int num = diff * diff;
    const cpp_int den = w0 * (total - w0);
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_level = t;
    }
  }
  return {best_level, false};
}

FloatPlane center_surround(const FloatPlane& gray) {
  const auto table = integral_image(gray);
  const int w = gray.width(), h = gray.height();
  FloatPlane out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = center_surround_at(table, x, y);
  }
  return out;
}

namespace reference {
FloatPlane center_surround(const FloatPlane& gray) {
  const auto table = integral_image(gray);
  FloatPlane out(gray.width(), gray.height());
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) out.at(x, y) = center_surround_at(table, x, y);
  }
  return out;
}
}  // namespace reference

SaliencyMap saliency_from_plane(FloatPlane raw) {
  const auto d = raw.data();
  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const double lo = *lo_it, hi = *hi_it;
  SaliencyMap out;
  // Scale-relative flatness test keeps rounding residue on constant inputs from
  // being stretched into a full-range map.
  if (!(hi - lo > 1e-12 * std::max(1.0, std::fabs(hi)))) {
    out.plane = FloatPlane(raw.width(), raw.height(), 0.0);
    out.threshold = 0.0;
    out.degenerate = true;
    return out;
  }
  for (double& v : raw.data()) v = (v - lo) / (hi - lo);
  Histogram hist{};
  for (double v : raw.data()) ++hist[std::min(255, static_cast<int>(v * 256.0))];
  const auto otsu = otsu_threshold(hist);
  out.plane = std::move(raw);
  out.threshold = (otsu.level + 1) / 256.0;
  out.degenerate = false;
  return out;
}

SaliencyMap saliency_map(const ImageBuffer& img) { return saliency_from_plane(center_surround(to_grayscale(img))); }

std::optional<double> diagonal_dominance(const SaliencyMap& sal) {
  if (sal.degenerate) return std::nullopt;
  const double w = sal.plane.width() - 1.0, h = sal.plane.height() - 1.0;
  const double diag = std::hypot(w, h);
  if (diag <= 0.0) return std::nullopt;
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < sal.plane.height(); ++y) {
    for (int x = 0; x < sal.plane.width(); ++x) {
      if (!sal.salient(x, y)) continue;
      const double d_main = std::fabs(h * x - w * y) / diag;
      const double d_anti = std::fabs(h * x + w * y - w * h) / diag;
      acc += std::min(d_main, d_anti);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return -(acc / n) / diag;
}

namespace {

struct Centroid {
  double x, y;
};

std::optional<Centroid> weighted_centroid(const SaliencyMap& sal) {
  if (sal.degenerate) return std::nullopt;
  double sx = 0.0, sy = 0.0, sw = 0.0;
  for (int y = 0; y < sal.plane.height(); ++y) {
    for (int x = 0; x < sal.plane.width(); ++x) {
      if (!sal.salient(x, y)) continue;
      const double wgt = sal.plane.at(x, y);
      sx += wgt * x;
      sy += wgt * y;
      sw += wgt;
    }
  }
  if (sw <= 0.0) return std::nullopt;
  return Centroid{sx / sw, sy / sw};
}

}  // namespace

std::optional<double> rule_of_thirds(const SaliencyMap& sal) {
  const auto c = weighted_centroid(sal);
  if (!c) return std::nullopt;
  const double w = sal.plane.width() - 1.0, h = sal.plane.height() - 1.0;
  const double diag = std::hypot(w, h);
  if (diag <= 0.0) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (double fx : {1.0 / 3.0, 2.0 / 3.0}) {
    for (double fy : {1.0 / 3.0, 2.0 / 3.0}) best = std::min(best, std::hypot(c->x - fx * w, c->y - fy * h));
  }
  return -best / diag;
}

std::optional<double> physical_balance(const SaliencyMap& sal, Axis axis) {
  const auto c = weighted_centroid(sal);
  if (!c) return std::nullopt;
  const double len = (axis == Axis::vertical ? sal.plane.height() : sal.plane.width()) - 1.0;
  if (len <= 0.0) return std::nullopt;
  const double pos = axis == Axis::vertical ? c->y : c->x;
  return -std::fabs(pos - len / 2.0) / len;
}

// --- superpixels -------------------------------------------------------------

namespace {

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

Lab to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = srgb_to_linear(r8), g = srgb_to_linear(g8), b = srgb_to_linear(b8);
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct Cluster {
  double x, y;
  Lab color;
};

// Absorb every non-primary component of a label into its largest adjacent component.
void enforce_connectivity(std::vector<int>& labels, int w, int h) {
  std::vector<int> comp;
  for (;;) {
    const int n_comp = label_components(labels, w, h, comp);
    std::vector<std::size_t> size(n_comp, 0);
    std::vector<int> comp_label(n_comp, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ++size[comp[i]];
      comp_label[comp[i]] = labels[i];
    }
    // primary component per label = largest (lowest id on ties)
    std::map<int, int> primary;
    for (int c = 0; c < n_comp; ++c) {
      auto it = primary.find(comp_label[c]);
      if (it == primary.end() || size[c] > size[it->second]) primary[comp_label[c]] = c;
    }
    if (static_cast<int>(primary.size()) == n_comp) return;
    // Orphans are processed smallest first; each merges into its largest neighbour.
    std::vector<int> orphans;
    for (int c = 0; c < n_comp; ++c) {
      if (primary[comp_label[c]] != c) orphans.push_back(c);
    }
    std::sort(orphans.begin(), orphans.end(), [&](int a, int b) {
      return size[a] != size[b] ? size[a] < size[b] : a < b;
    });
    std::vector<std::vector<std::size_t>> members(n_comp);
    for (std::size_t i = 0; i < labels.size(); ++i) members[comp[i]].push_back(i);
    std::vector<char> changed(n_comp, 0);
    for (int c : orphans) {
      int best = -1;
      for (std::size_t i : members[c]) {
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& nb : nbrs) {
          if (nb[0] < 0 || nb[1] < 0 || nb[0] >= w || nb[1] >= h) continue;
          const int o = comp[static_cast<std::size_t>(nb[1]) * w + nb[0]];
          if (o == c || changed[o]) continue;
          if (best < 0 || size[o] > size[best] || (size[o] == size[best] && o < best)) best = o;
        }
      }
      if (best < 0) continue;
      for (std::size_t i : members[c]) labels[i] = comp_label[best];
      changed[c] = 1;
      // Only one merge per neighbourhood per pass keeps component sizes valid.
      changed[best] = 1;
    }
  }
}

}  // namespace

int label_components(std::span<const int> classes, int width, int height, std::vector<int>& out) {
  out.assign(classes.size(), -1);
  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < classes.size(); ++start) {
    if (out[start] >= 0) continue;
    out[start] = next;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
      const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[1] < 0 || nb[0] >= width || nb[1] >= height) continue;
        const std::size_t j = static_cast<std::size_t>(nb[1]) * width + nb[0];
        if (out[j] < 0 && classes[j] == classes[i]) {
          out[j] = next;
          queue.push_back(j);
        }
      }
    }
    ++next;
  }
  return next;
}

SuperpixelLabels slic_superpixels(const ImageBuffer& img, int k, double compactness, int iterations) {
  const int w = img.width(), h = img.height();
  const std::size_t n = img.pixel_count();
  if (k < 1) throw InvalidArgument("slic: k must be >= 1");
  if (static_cast<std::size_t>(k) > n) throw InvalidArgument("slic: k exceeds pixel count");
  if (!(compactness > 0.0)) throw InvalidArgument("slic: compactness must be > 0");
  if (img.channels() != 3) throw InvalidArgument("slic: RGB image required");

  std::vector<Lab> lab(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) lab[static_cast<std::size_t>(y) * w + x] = to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
  }
  const double step = std::sqrt(static_cast<double>(n) / k);
  const int nx = std::clamp(static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * w / h))), 1, w);
  const int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / nx)), 1, h);

  std::vector<Cluster> clusters;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double cx = (i + 0.5) * w / nx - 0.5;
      const double cy = (j + 0.5) * h / ny - 0.5;
      // Mean of the (up to) four pixels around the center keeps seeding mirror-symmetric.
      const int xs[2] = {static_cast<int>(std::floor(cx)), static_cast<int>(std::ceil(cx))};
      const int ys[2] = {static_cast<int>(std::floor(cy)), static_cast<int>(std::ceil(cy))};
      Lab c{0, 0, 0};
      for (int yy : ys) {
        for (int xx : xs) {
          const auto& p = lab[static_cast<std::size_t>(yy) * w + xx];
          c.l += p.l / 4;
          c.a += p.a / 4;
          c.b += p.b / 4;
        }
      }
      clusters.push_back({cx, cy, c});
    }
  }

  std::vector<int> labels(n, 0);
  std::vector<double> best(n);
  const double spatial_weight = compactness / step;
  const double window = 2.0 * step;
  for (int it = 0; it < iterations; ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (int c = 0; c < static_cast<int>(clusters.size()); ++c) {
      const auto& cl = clusters[c];
      const int x0 = std::max(0, static_cast<int>(std::ceil(cl.x - window)));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(cl.x + window)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(cl.y - window)));
      const int y1 = std::min(h - 1, static_cast<int>(std::floor(cl.y + window)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const auto& p = lab[i];
          const double dc = std::sqrt((p.l - cl.color.l) * (p.l - cl.color.l) + (p.a - cl.color.a) * (p.a - cl.color.a) +
                                      (p.b - cl.color.b) * (p.b - cl.color.b));
          const double ds = std::hypot(x - cl.x, y - cl.y);
          const double d = dc + spatial_weight * ds;
          if (d < best[i]) {
            best[i] = d;
            labels[i] = c;
          }
        }
      }
    }
    std::vector<double> sx(clusters.size(), 0), sy(clusters.size(), 0), sl(clusters.size(), 0),
        sa(clusters.size(), 0), sb(clusters.size(), 0);
    std::vector<std::size_t> cnt(clusters.size(), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (std::isinf(best[i])) {
          // Outside every search window: nearest center wins.
          double bd = std::numeric_limits<double>::infinity();
          for (int c = 0; c < static_cast<int>(clusters.size()); ++c) {
            const double d = std::hypot(x - clusters[c].x, y - clusters[c].y);
            if (d < bd) {
              bd = d;
              labels[i] = c;
            }
          }
        }
        const int c = labels[i];
        sx[c] += x;
        sy[c] += y;
        sl[c] += lab[i].l;
        sa[c] += lab[i].a;
        sb[c] += lab[i].b;
        ++cnt[c];
      }
    }
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (cnt[c] == 0) continue;
      const double m = static_cast<double>(cnt[c]);
      clusters[c] = {sx[c] / m, sy[c] / m, {sl[c] / m, sa[c] / m, sb[c] / m}};
    }
  }

  enforce_connectivity(labels, w, h);

  // Compact ids in raster order of first appearance.
  std::map<int, int> remap;
  for (int& l : labels) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
    l = it->second;
  }
  SuperpixelLabels out;
  out.width = w;
  out.height = h;
  out.labels = std::move(labels);
  out.k_actual = static_cast<int>(remap.size());
  return out;
}

ImageBuffer superpixel_mean_image(const ImageBuffer& img, const SuperpixelLabels& sp) {
  std::vector<std::array<double, 3>> sum(sp.k_actual, {0, 0, 0});
  std::vector<std::size_t> cnt(sp.k_actual, 0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int l = sp.at(x, y);
      for (int c = 0; c < 3; ++c) sum[l][c] += img.at(x, y, c);
      ++cnt[l];
    }
  }
  ImageBuffer out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int l = sp.at(x, y);
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(sum[l][c] / static_cast<double>(cnt[l])));
      }
    }
  }
  return out;
}

double color_balance_of(const ImageBuffer& s, Axis axis) {
  const int w = s.width(), h = s.height();
  double acc = 0.0;
  std::size_t pairs = 0;
  if (axis == Axis::vertical) {
    for (int y = 0; y < h / 2; ++y) {
      for (int x = 0; x < w; ++x) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(s.at(x, y, c)) - s.at(x, h - 1 - y, c);
          d2 += d * d;
        }
        acc += std::sqrt(d2);
        ++pairs;
      }
    }
  } else {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w / 2; ++x) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(s.at(x, y, c)) - s.at(w - 1 - x, y, c);
          d2 += d * d;
        }
        acc += std::sqrt(d2);
        ++pairs;
      }
    }
  }
  if (pairs == 0) return 0.0;
  return -(acc / pairs) / (255.0 * std::sqrt(3.0));
}

namespace {

ImageBuffer smoothed(const ImageBuffer& img, const CompositionParams& params) {
  const int k = static_cast<int>(std::min<std::size_t>(params.slic_k, img.pixel_count()));
  return superpixel_mean_image(img, slic_superpixels(img, k, params.slic_compactness, params.slic_iterations));
}

ImageBuffer mirror_across(const ImageBuffer& img, Axis axis) {
  return axis == Axis::vertical ? mirror_vertical(img) : mirror_horizontal(img);
}

}  // namespace

// Superpixel tie-breaks depend on scan order; averaging over both orientations
// makes the score exactly mirror invariant.
double color_balance(const ImageBuffer& img, Axis axis, const CompositionParams& params) {
  return 0.5 * (color_balance_of(smoothed(img, params), axis) +
                color_balance_of(smoothed(mirror_across(img, axis), params), axis));
}

int num_segments(const ImageBuffer& img, SegmentCountMode mode) {
  const auto gray = to_grayscale(img);
  const int w = gray.width(), h = gray.height();
  std::vector<int> level(gray.size());
  Histogram hist{};
  for (std::size_t i = 0; i < gray.size(); ++i) {
    level[i] = static_cast<int>(std::lround(gray.data()[i] * 255.0));
    ++hist[level[i]];
  }
  const auto otsu = otsu_threshold(hist);
  std::vector<int> cls(gray.size());
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = level[i] > otsu.level ? 1 : 0;
  if (mode == SegmentCountMode::edge_changes) {
    int changes = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (x + 1 < w && cls[i] != cls[i + 1]) ++changes;
        if (y + 1 < h && cls[i] != cls[i + w]) ++changes;
      }
    }
    return changes + 1;
  }
  std::vector<int> comp;
  return label_components(cls, w, h, comp);
}

CompositionFeatures extract(const ImageBuffer& img, const CompositionParams& params) {
  CompositionFeatures out;
  const auto sal = saliency_map(img);
  out.diagonal_dominance = diagonal_dominance(sal);
  out.rule_of_thirds = rule_of_thirds(sal);
  out.balance_vertical = physical_balance(sal, Axis::vertical);
  out.balance_horizontal = physical_balance(sal, Axis::horizontal);
  const auto base = smoothed(img, params);
  out.color_balance_vertical =
      0.5 * (color_balance_of(base, Axis::vertical) +
             color_balance_of(smoothed(mirror_across(img, Axis::vertical), params), Axis::vertical));
  out.color_balance_horizontal =
      0.5 * (color_balance_of(base, Axis::horizontal) +
             color_balance_of(smoothed(mirror_across(img, Axis::horizontal), params), Axis::horizontal));
  out.n_segments = num_segments(img, params.segment_mode);
  return out;
}

}  // namespace crowdvis::composition
