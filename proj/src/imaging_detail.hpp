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

// Per-pixel building blocks shared by the OpenMP kernels and the serial
// reference path. Both call exactly these functions so results match bit for bit.

#include <algorithm>
#include <cmath>

#include "crowdvis/imaging.hpp"

namespace crowdvis::detail {

inline double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
}

struct Hsv {
  double h, s, v;
};

inline Hsv hsv_of(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) noexcept {
  const int r = r8, g = g8, b = b8;
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  Hsv out{0.0, 0.0, mx / 255.0};
  if (mx == 0 || mx == mn) return out;
  const double d = mx - mn;
  out.s = d / mx;
  double h;
  if (mx == r) {
    h = 60.0 * ((g - b) / d);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

inline double convolve_at(const FloatPlane& p, const Kernel& k, int x, int y) noexcept {
  const int cy = k.rows / 2;
  const int cx = k.cols / 2;
  double acc = 0.0;
  for (int r = 0; r < k.rows; ++r) {
    for (int c = 0; c < k.cols; ++c) {
      acc += k.at(r, c) * p.clamped(x - (c - cx), y - (r - cy));
    }
  }
  return acc;
}

inline double blur_row_at(const FloatPlane& p, const std::vector<double>& k, int x, int y) noexcept {
  const int radius = static_cast<int>(k.size() / 2);
  double acc = 0.0;
  for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * p.clamped(x + i, y);
  return acc;
}

inline double blur_col_at(const FloatPlane& p, const std::vector<double>& k, int x, int y) noexcept {
  const int radius = static_cast<int>(k.size() / 2);
  double acc = 0.0;
  for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * p.clamped(x, y + i);
  return acc;
}

// Bilinear sample with half-pixel centers.
struct LinearTap {
  int i0, i1;
  double w1;
};

inline LinearTap linear_tap(int dst, double scale, int src_len) noexcept {
  double s = (dst + 0.5) * scale - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
  const int i0 = static_cast<int>(std::floor(s));
  const int i1 = std::min(i0 + 1, src_len - 1);
  return {i0, i1, s - i0};
}

inline std::uint8_t bilinear_sample(const ImageBuffer& img, const LinearTap& tx, const LinearTap& ty,
                                    int c) noexcept {
  const double top = img.at(tx.i0, ty.i0, c) * (1.0 - tx.w1) + img.at(tx.i1, ty.i0, c) * tx.w1;
  const double bot = img.at(tx.i0, ty.i1, c) * (1.0 - tx.w1) + img.at(tx.i1, ty.i1, c) * tx.w1;
  const double v = top * (1.0 - ty.w1) + bot * ty.w1;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace crowdvis::detail
