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

#include "crowdvis/error.hpp"
#include "crowdvis/imaging.hpp"
#include "imaging_detail.hpp"

namespace crowdvis::reference {

FloatPlane to_grayscale(const ImageBuffer& img) {
  FloatPlane out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y) = img.channels() == 3 ? detail::luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2))
                                         : img.at(x, y) / 255.0;
    }
  }
  return out;
}

HsvPlanes rgb_to_hsv(const ImageBuffer& img) {
  if (img.channels() != 3) throw InvalidArgument("rgb_to_hsv requires a 3-channel image");
  const int w = img.width(), h = img.height();
  HsvPlanes out{FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h)};
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

FloatPlane convolve2d(const FloatPlane& plane, const Kernel& kernel) {
  if (kernel.rows % 2 == 0 || kernel.cols % 2 == 0) {
    throw InvalidArgument("convolution kernel dimensions must be odd");
  }
  FloatPlane out(plane.width(), plane.height());
  for (int y = 0; y < plane.height(); ++y) {
    for (int x = 0; x < plane.width(); ++x) out.at(x, y) = detail::convolve_at(plane, kernel, x, y);
  }
  return out;
}

FloatPlane gaussian_blur(const FloatPlane& plane, double sigma) {
  const auto k = gaussian_kernel_1d(sigma);
  FloatPlane tmp(plane.width(), plane.height());
  FloatPlane out(plane.width(), plane.height());
  for (int y = 0; y < plane.height(); ++y) {
    for (int x = 0; x < plane.width(); ++x) tmp.at(x, y) = detail::blur_row_at(plane, k, x, y);
  }
  for (int y = 0; y < plane.height(); ++y) {
    for (int x = 0; x < plane.width(); ++x) out.at(x, y) = detail::blur_col_at(tmp, k, x, y);
  }
  return out;
}

ImageBuffer resize_to(const ImageBuffer& img, int width, int height) {
  ImageBuffer out(width, height, img.channels());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const auto ty = detail::linear_tap(y, sy, img.height());
    for (int x = 0; x < width; ++x) {
      const auto tx = detail::linear_tap(x, sx, img.width());
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = detail::bilinear_sample(img, tx, ty, c);
    }
  }
  return out;
}

}  // namespace crowdvis::reference
