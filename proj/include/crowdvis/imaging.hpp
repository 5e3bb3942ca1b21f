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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crowdvis {

// 8-bit raster, row-major, interleaved channels (RGB or gray).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);
  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t at(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  void set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  bool operator==(const ImageBuffer&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

// Real-valued single-channel plane. Values must stay finite.
class FloatPlane {
 public:
  FloatPlane() = default;
  FloatPlane(int width, int height, double fill = 0.0);
  FloatPlane(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  double at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  // Replicate-padded read.
  double clamped(int x, int y) const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool operator==(const FloatPlane&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const noexcept { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) noexcept { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const noexcept;
};

// Odd-sized real kernel, row-major.
struct Kernel {
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;

  double at(int r, int c) const noexcept { return weights[static_cast<std::size_t>(r) * cols + c]; }
  static Kernel laplacian4();
  static Kernel identity3();
};

struct HsvPlanes {
  FloatPlane hue;         // degrees in [0, 360)
  FloatPlane saturation;  // [0, 1]
  FloatPlane value;       // [0, 1]
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// --- pixel kernels (OpenMP-parallel over rows) -------------------------------

FloatPlane to_grayscale(const ImageBuffer& img);
HsvPlanes rgb_to_hsv(const ImageBuffer& img);
Rgb hsv_to_rgb(double hue_deg, double saturation, double value);

// True 2-D convolution with replicate padding; throws InvalidArgument for even kernels.
FloatPlane convolve2d(const FloatPlane& plane, const Kernel& kernel);

// Summed-area table, same size as input; entry (x, y) = sum over [0..x] x [0..y].
FloatPlane integral_image(const FloatPlane& plane);
// Inclusive rectangle sum from a summed-area table.
double rect_sum(const FloatPlane& table, int x0, int y0, int x1, int y1) noexcept;

std::vector<double> gaussian_kernel_1d(double sigma);
FloatPlane gaussian_blur(const FloatPlane& plane, double sigma);

struct Gradients {
  FloatPlane gx;
  FloatPlane gy;
  FloatPlane magnitude;
};
Gradients sobel(const FloatPlane& plane);

// Thresholds are fractions of the maximum gradient magnitude; 0 < low < high <= 1.
BinaryMask canny_edges(const FloatPlane& plane, double low, double high);

// Longest side scaled down to max_side (max_side >= 16); smaller images are returned unchanged.
ImageBuffer resize_bilinear(const ImageBuffer& img, int max_side);
ImageBuffer resize_to(const ImageBuffer& img, int width, int height);
FloatPlane resize_plane(const FloatPlane& plane, int width, int height);

// Geometric helpers used by tests and feature invariants.
ImageBuffer rotate90(const ImageBuffer& img);
ImageBuffer mirror_horizontal(const ImageBuffer& img);
ImageBuffer mirror_vertical(const ImageBuffer& img);
ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width, int height);

// --- serial reference implementations ---------------------------------------
// Kept bit-compatible with the parallel kernels; used by tests and the benchmark.
namespace reference {
FloatPlane to_grayscale(const ImageBuffer& img);
HsvPlanes rgb_to_hsv(const ImageBuffer& img);
FloatPlane convolve2d(const FloatPlane& plane, const Kernel& kernel);
FloatPlane gaussian_blur(const FloatPlane& plane, double sigma);
ImageBuffer resize_to(const ImageBuffer& img, int width, int height);
}  // namespace reference

// --- codecs ------------------------------------------------------------------

// PNG and 8-bit JPEG; output is always 3-channel RGB. Errors carry the path.
ImageBuffer decode_image(const std::filesystem::path& path);
ImageBuffer decode_image_bytes(std::span<const std::uint8_t> bytes, const std::string& label);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
void write_png(const ImageBuffer& img, const std::filesystem::path& path);

}  // namespace crowdvis
