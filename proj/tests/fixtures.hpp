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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>

#include "crowdvis/imaging.hpp"

namespace crowdvis::testing {

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(CROWDVIS_DATA_DIR) / rel;
}

inline ImageBuffer solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.set_rgb(x, y, r, g, b);
  }
  return img;
}

inline ImageBuffer random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageBuffer img(w, h, 3);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

// Smooth colored gradients with a few shapes: a natural-ish fixture with
// structure at several scales.
inline ImageBuffer scene_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 1.0 + 4.0 * u(rng), fy = 1.0 + 4.0 * u(rng), phase = 6.28 * u(rng);
  const double cx = w * (0.3 + 0.4 * u(rng)), cy = h * (0.3 + 0.4 * u(rng)), rad = std::min(w, h) * (0.1 + 0.2 * u(rng));
  const int base_r = static_cast<int>(255 * u(rng)), base_g = static_cast<int>(255 * u(rng)),
            base_b = static_cast<int>(255 * u(rng));
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = 0.5 + 0.5 * std::sin(fx * x / w * 6.28 + phase) * std::cos(fy * y / h * 6.28);
      const bool disk = (x - cx) * (x - cx) + (y - cy) * (y - cy) < rad * rad;
      auto mix = [&](int base) {
        const double v = disk ? 255 - base : base * (0.4 + 0.6 * s);
        return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      };
      img.set_rgb(x, y, mix(base_r), mix(base_g), mix(base_b));
    }
  }
  return img;
}

inline FloatPlane random_plane(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FloatPlane p(w, h);
  for (auto& v : p.data()) v = u(rng);
  return p;
}

}  // namespace crowdvis::testing

namespace crowdvis::testing {

// Range-for over a temporary plane's span would dangle; copy the samples out.
inline std::vector<double> owned(const FloatPlane& p) { return {p.data().begin(), p.data().end()}; }

}  // namespace crowdvis::testing
