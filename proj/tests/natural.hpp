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

#include <vector>

#include "crowdvis/imaging.hpp"
#include "fixtures.hpp"

namespace crowdvis::testing {

inline const std::vector<ImageBuffer>& natural_images() {
  static const std::vector<ImageBuffer> images = [] {
    std::vector<ImageBuffer> out;
    for (const char* name : {"astronaut.png", "chelsea.png", "coffee.png", "rocket.jpg", "camera.png"}) {
      out.push_back(decode_image(data_path(std::string("fixtures/") + name)));
    }
    return out;
  }();
  return images;
}

// Ten interior crops, two per photograph.
inline std::vector<ImageBuffer> natural_tiles(int side = 96) {
  std::vector<ImageBuffer> out;
  for (const auto& img : natural_images()) {
    out.push_back(crop(img, img.width() / 4, img.height() / 4, side, side));
    out.push_back(crop(img, img.width() / 2, img.height() / 2 - side / 2, side, side));
  }
  return out;
}

}  // namespace crowdvis::testing
