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

#include "crowdvis/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "crowdvis/error.hpp"
#include "imaging_detail.hpp"

namespace crowdvis {

ImageBuffer::ImageBuffer(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
  if (channels != 1 && channels != 3) throw InvalidArgument("image must have 1 or 3 channels");
  data_.assign(pixel_count() * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
  if (channels != 1 && channels != 3) throw InvalidArgument("image must have 1 or 3 channels");
  if (data_.size() != pixel_count() * channels) throw InvalidArgument("image data length mismatch");
}

void ImageBuffer::set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  at(x, y, 0) = r;
  at(x, y, 1) = g;
  at(x, y, 2) = b;
}

FloatPlane::FloatPlane(int width, int height, double fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
  if (width < 1 || height < 1) throw InvalidArgument("plane dimensions must be >= 1");
}

FloatPlane::FloatPlane(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) throw InvalidArgument("plane dimensions must be >= 1");
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("plane data length mismatch");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("plane values must be finite");
  }
}

double FloatPlane::clamped(int x, int y) const noexcept {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Kernel Kernel::laplacian4() { return {3, 3, {0, 1, 0, 1, -4, 1, 0, 1, 0}}; }
Kernel Kernel::identity3() { return {3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0}}; }

FloatPlane to_grayscale(const ImageBuffer& img) {
  FloatPlane out(img.width(), img.height());
  const int w = img.width();
  const int h = img.height();
  const bool rgb = img.channels() == 3;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(x, y) = rgb ? detail::luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2))
                         : img.at(x, y) / 255.0;
    }
  }
  return out;
}

HsvPlanes rgb_to_hsv(const ImageBuffer& img) {
  if (img.channels() != 3) throw InvalidArgument("rgb_to_hsv requires a 3-channel image");
  const int w = img.width();
  const int h = img.height();
  HsvPlanes out{FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h)};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto hsv = detail::hsv_of(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      out.hue.at(x, y) = hsv.h;
      out.saturation.at(x, y) = hsv.s;
      out.value.at(x, y) = hsv.v;
    }
  }
  return out;
}

Rgb hsv_to_rgb(double hue_deg, double saturation, double value) {
  const double c = value * saturation;
  const double hp = std::fmod(hue_deg, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = value - c;
  auto to8 = [m](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround((v + m) * 255.0), 0L, 255L));
  };
  return {to8(r), to8(g), to8(b)};
}

FloatPlane convolve2d(const FloatPlane& plane, const Kernel& kernel) {
  if (kernel.rows % 2 == 0 || kernel.cols % 2 == 0) {
    throw InvalidArgument("convolution kernel dimensions must be odd");
  }
  if (kernel.weights.size() != static_cast<std::size_t>(kernel.rows) * kernel.cols) {
    throw InvalidArgument("kernel weight count does not match its dimensions");
  }
  const int w = plane.width();
  const int h = plane.height();
  FloatPlane out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = detail::convolve_at(plane, kernel, x, y);
  }
  return out;
}

FloatPlane integral_image(const FloatPlane& plane) {
  const int w = plane.width();
  const int h = plane.height();
  FloatPlane out(w, h);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += plane.at(x, y);
      out.at(x, y) = row + (y > 0 ? out.at(x, y - 1) : 0.0);
    }
  }
  return out;
}

double rect_sum(const FloatPlane& t, int x0, int y0, int x1, int y1) noexcept {
  const double a = t.at(x1, y1);
  const double b = x0 > 0 ? t.at(x0 - 1, y1) : 0.0;
  const double c = y0 > 0 ? t.at(x1, y0 - 1) : 0.0;
  const double d = (x0 > 0 && y0 > 0) ? t.at(x0 - 1, y0 - 1) : 0.0;
  return a - b - c + d;
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= total;
  return k;
}

FloatPlane gaussian_blur(const FloatPlane& plane, double sigma) {
  const auto k = gaussian_kernel_1d(sigma);
  const int w = plane.width();
  const int h = plane.height();
  FloatPlane tmp(w, h);
  FloatPlane out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) tmp.at(x, y) = detail::blur_row_at(plane, k, x, y);
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = detail::blur_col_at(tmp, k, x, y);
  }
  return out;
}

Gradients sobel(const FloatPlane& p) {
  const int w = p.width();
  const int h = p.height();
  Gradients g{FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h)};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (p.clamped(x + 1, y - 1) + 2.0 * p.clamped(x + 1, y) + p.clamped(x + 1, y + 1)) -
                        (p.clamped(x - 1, y - 1) + 2.0 * p.clamped(x - 1, y) + p.clamped(x - 1, y + 1));
      const double gy = (p.clamped(x - 1, y + 1) + 2.0 * p.clamped(x, y + 1) + p.clamped(x + 1, y + 1)) -
                        (p.clamped(x - 1, y - 1) + 2.0 * p.clamped(x, y - 1) + p.clamped(x + 1, y - 1));
      g.gx.at(x, y) = gx;
      g.gy.at(x, y) = gy;
      g.magnitude.at(x, y) = std::hypot(gx, gy);
    }
  }
  return g;
}

BinaryMask canny_edges(const FloatPlane& plane, double low, double high) {
  if (!(low > 0.0 && low < high && high <= 1.0)) {
    throw InvalidArgument("canny thresholds must satisfy 0 < low < high <= 1");
  }
  const int w = plane.width();
  const int h = plane.height();
  const auto g = sobel(plane);
  BinaryMask edges(w, h);
  const auto mags = g.magnitude.data();
  const double max_mag = *std::max_element(mags.begin(), mags.end());
  if (max_mag <= 0.0) return edges;
  const double low_t = low * max_mag;
  const double high_t = high * max_mag;

  auto mag = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return g.magnitude.at(x, y);
  };
  // 0 = suppressed, 1 = weak, 2 = strong
  std::vector<std::uint8_t> cls(static_cast<std::size_t>(w) * h, 0);
  constexpr double kTan22 = 0.41421356237309503;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = g.magnitude.at(x, y);
      if (m < low_t || m <= 0.0) continue;
      const double ax = std::fabs(g.gx.at(x, y));
      const double ay = std::fabs(g.gy.at(x, y));
      bool keep;
      if (ay <= ax * kTan22) {
        keep = m > mag(x - 1, y) && m >= mag(x + 1, y);
      } else if (ax <= ay * kTan22) {
        keep = m > mag(x, y - 1) && m >= mag(x, y + 1);
      } else if ((g.gx.at(x, y) > 0) == (g.gy.at(x, y) > 0)) {
        keep = m > mag(x - 1, y - 1) && m >= mag(x + 1, y + 1);
      } else {
        keep = m > mag(x + 1, y - 1) && m >= mag(x - 1, y + 1);
      }
      if (keep) cls[static_cast<std::size_t>(y) * w + x] = m >= high_t ? 2 : 1;
    }
  }
  // Hysteresis: weak pixels survive when 8-connected to a strong pixel.
  std::deque<int> queue;
  for (int i = 0; i < w * h; ++i) {
    if (cls[i] == 2) {
      edges.bits[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int x = i % w;
    const int y = i / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int j = ny * w + nx;
        if (cls[j] == 1 && !edges.bits[j]) {
          edges.bits[j] = 1;
          queue.push_back(j);
        }
      }
    }
  }
  return edges;
}

ImageBuffer resize_to(const ImageBuffer& img, int width, int height) {
  ImageBuffer out(width, height, img.channels());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  const int ch = img.channels();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const auto ty = detail::linear_tap(y, sy, img.height());
    for (int x = 0; x < width; ++x) {
      const auto tx = detail::linear_tap(x, sx, img.width());
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = detail::bilinear_sample(img, tx, ty, c);
    }
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int max_side) {
  if (max_side < 16) throw InvalidArgument("max_side must be >= 16");
  const int longest = std::max(img.width(), img.height());
  if (longest <= max_side) return img;
  const double scale = static_cast<double>(max_side) / longest;
  int w = img.width() >= img.height() ? max_side : std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  int h = img.height() > img.width() ? max_side : std::max(1, static_cast<int>(std::lround(img.height() * scale)));
  return resize_to(img, w, h);
}

FloatPlane resize_plane(const FloatPlane& p, int width, int height) {
  FloatPlane out(width, height);
  const double sx = static_cast<double>(p.width()) / width;
  const double sy = static_cast<double>(p.height()) / height;
  for (int y = 0; y < height; ++y) {
    const auto ty = detail::linear_tap(y, sy, p.height());
    for (int x = 0; x < width; ++x) {
      const auto tx = detail::linear_tap(x, sx, p.width());
      const double top = p.at(tx.i0, ty.i0) * (1.0 - tx.w1) + p.at(tx.i1, ty.i0) * tx.w1;
      const double bot = p.at(tx.i0, ty.i1) * (1.0 - tx.w1) + p.at(tx.i1, ty.i1) * tx.w1;
      out.at(x, y) = top * (1.0 - ty.w1) + bot * ty.w1;
    }
  }
  return out;
}

ImageBuffer rotate90(const ImageBuffer& img) {
  // Clockwise: (x, y) -> (h - 1 - y, x).
  ImageBuffer out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(img.height() - 1 - y, x, c) = img.at(x, y, c);
    }
  }
  return out;
}

ImageBuffer mirror_horizontal(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

ImageBuffer mirror_vertical(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(x, img.height() - 1 - y, c) = img.at(x, y, c);
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > img.width() || y0 + height > img.height()) {
    throw InvalidArgument("crop rectangle outside image");
  }
  ImageBuffer out(width, height, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

}  // namespace crowdvis
