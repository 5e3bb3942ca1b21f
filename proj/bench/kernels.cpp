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

// Serial reference kernels against their OpenMP counterparts on one 1024x768
// photo-sized input. Run with OMP_NUM_THREADS to vary the thread count.

#include <benchmark/benchmark.h>

#include <random>

#include "crowdvis/composition.hpp"
#include "crowdvis/imaging.hpp"

using namespace crowdvis;

namespace {

constexpr int kWidth = 1024;
constexpr int kHeight = 768;

const ImageBuffer& input() {
  static const ImageBuffer img = [] {
    std::mt19937_64 rng(7);
    ImageBuffer out(kWidth, kHeight, 3);
    for (auto& v : out.data()) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return out;
  }();
  return img;
}

const FloatPlane& gray() {
  static const FloatPlane g = reference::to_grayscale(input());
  return g;
}

Kernel box5() {
  Kernel k{5, 5, std::vector<double>(25, 1.0 / 25)};
  return k;
}

void pixels(benchmark::State& state) {
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * kWidth * kHeight);
}

void BM_grayscale_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::to_grayscale(input()));
  pixels(s);
}
void BM_grayscale_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(to_grayscale(input()));
  pixels(s);
}

void BM_hsv_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::rgb_to_hsv(input()));
  pixels(s);
}
void BM_hsv_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(rgb_to_hsv(input()));
  pixels(s);
}

void BM_convolve_serial(benchmark::State& s) {
  const auto k = box5();
  for (auto _ : s) benchmark::DoNotOptimize(reference::convolve2d(gray(), k));
  pixels(s);
}
void BM_convolve_omp(benchmark::State& s) {
  const auto k = box5();
  for (auto _ : s) benchmark::DoNotOptimize(convolve2d(gray(), k));
  pixels(s);
}

void BM_blur_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::gaussian_blur(gray(), 2.0));
  pixels(s);
}
void BM_blur_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(gaussian_blur(gray(), 2.0));
  pixels(s);
}

void BM_resize_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::resize_to(input(), 512, 384));
  pixels(s);
}
void BM_resize_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(resize_to(input(), 512, 384));
  pixels(s);
}

void BM_center_surround_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(composition::reference::center_surround(gray()));
  pixels(s);
}
void BM_center_surround_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(composition::center_surround(gray()));
  pixels(s);
}

}  // namespace

BENCHMARK(BM_grayscale_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grayscale_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_hsv_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_hsv_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_convolve_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_convolve_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_blur_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_blur_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_resize_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_resize_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_center_surround_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_center_surround_omp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
