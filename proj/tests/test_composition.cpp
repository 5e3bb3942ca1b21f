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

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <deque>
#include <random>
#include <set>

#include "crowdvis/composition.hpp"
#include "crowdvis/error.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "natural.hpp"

using namespace crowdvis;
using namespace crowdvis::composition;
using crowdvis::testing::random_image;
using crowdvis::testing::scene_image;
using crowdvis::testing::solid;

namespace {

using boost::multiprecision::cpp_rational;

// Independent Otsu oracle: exhaustive minimum of the within-class variance
// w0*var0 + w1*var1 in exact rationals, smallest level on ties.
int otsu_oracle(const Histogram& h) {
  using boost::multiprecision::cpp_int;
  cpp_int n = 0, s = 0, q = 0;
  for (int i = 0; i < 256; ++i) {
    n += h[i];
    s += cpp_int(h[i]) * i;
    q += cpp_int(h[i]) * i * i;
  }
  int best = -1;
  cpp_rational best_val;
  cpp_int n0 = 0, s0 = 0, q0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += h[t];
    s0 += cpp_int(h[t]) * t;
    q0 += cpp_int(h[t]) * t * t;
    const cpp_int n1 = n - n0, s1 = s - s0, q1 = q - q0;
    if (n0 == 0 || n1 == 0) continue;
    const cpp_rational within = (cpp_rational(q0) - cpp_rational(s0 * s0, n0)) + (cpp_rational(q1) - cpp_rational(s1 * s1, n1));
    if (best < 0 || within < best_val) {
      best = t;
      best_val = within;
    }
  }
  return best;
}

SaliencyMap map_with(int w, int h, const std::vector<std::pair<int, int>>& hot) {
  FloatPlane raw(w, h, 0.0);
  for (auto [x, y] : hot) raw.at(x, y) = 1.0;
  return saliency_from_plane(raw);
}

bool labels_connected(const SuperpixelLabels& sp) {
  std::vector<int> comp;
  const int n = label_components(sp.labels, sp.width, sp.height, comp);
  return n == sp.k_actual;
}

}  // namespace

TEST_CASE("otsu examples") {
  Histogram two{};
  two[50] = 1000;
  two[200] = 1000;
  const auto r = otsu_threshold(two);
  CHECK(r.level == 50);
  CHECK_FALSE(r.degenerate);

  Histogram zero{};
  zero[0] = 77;
  const auto z = otsu_threshold(zero);
  CHECK(z.level == 0);
  CHECK(z.degenerate);

  CHECK_THROWS_AS(otsu_threshold(Histogram{}), InvalidArgument);
}

TEST_CASE("otsu matches exhaustive oracle") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram h{};
    const int occupied = 2 + static_cast<int>(rng() % 40);
    const std::uint64_t scale = trial % 3 == 0 ? 5 : 1000000;
    for (int i = 0; i < occupied; ++i) h[rng() % 256] += 1 + rng() % scale;
    int n = 0;
    for (auto c : h) n += c > 0;
    if (n < 2) continue;
    REQUIRE(otsu_threshold(h).level == otsu_oracle(h));
  }
}

TEST_CASE("saliency map") {
  const auto flat = saliency_map(solid(40, 30, 120, 10, 200));
  CHECK(flat.degenerate);
  CHECK(flat.threshold == 0.0);
  for (double v : flat.plane.data()) CHECK(v == 0.0);

  auto blob = solid(64, 64, 0, 0, 0);
  for (int y = 20; y < 28; ++y)
    for (int x = 36; x < 44; ++x) blob.set_rgb(x, y, 255, 255, 255);
  const auto sal = saliency_map(blob);
  REQUIRE_FALSE(sal.degenerate);
  int bx = 0, by = 0;
  double bv = -1;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (sal.plane.at(x, y) > bv) {
        bv = sal.plane.at(x, y);
        bx = x;
        by = y;
      }
  CHECK(bx >= 36);
  CHECK(bx < 44);
  CHECK(by >= 20);
  CHECK(by < 28);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = saliency_map(random_image(23 + static_cast<int>(s), 19, s));
    REQUIRE_FALSE(m.degenerate);
    double hi = 0;
    for (double v : m.plane.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      hi = std::max(hi, v);
    }
    CHECK(hi == 1.0);
  }
}

TEST_CASE("center-surround parallel kernel matches serial reference") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto g = to_grayscale(scene_image(70, 45, s));
    CHECK(center_surround(g) == composition::reference::center_surround(g));
  }
}

TEST_CASE("diagonal dominance") {
  std::vector<std::pair<int, int>> diag;
  for (int i = 0; i < 41; ++i) diag.push_back({i, i});
  CHECK(*diagonal_dominance(map_with(41, 41, diag)) == doctest::Approx(0.0));
  CHECK(*diagonal_dominance(map_with(41, 41, {{20, 20}})) == doctest::Approx(0.0));
  // Top-edge midpoint: distance (L/2)/sqrt2 to both diagonals over diagonal L*sqrt2.
  CHECK(*diagonal_dominance(map_with(65, 65, {{32, 0}})) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK_FALSE(diagonal_dominance(saliency_map(solid(40, 40, 1, 1, 1))).has_value());
}

TEST_CASE("rule of thirds") {
  CHECK(*rule_of_thirds(map_with(31, 31, {{10, 10}})) == doctest::Approx(0.0));
  CHECK(*rule_of_thirds(map_with(31, 31, {{15, 15}})) == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto img = scene_image(48, 36, s);
    const auto a = rule_of_thirds(saliency_map(img));
    const auto b = rule_of_thirds(saliency_map(mirror_horizontal(img)));
    CHECK(*a == doctest::Approx(*b).epsilon(1e-9));
  }
  CHECK_FALSE(rule_of_thirds(saliency_map(solid(40, 40, 9, 9, 9))).has_value());
}

TEST_CASE("physical balance") {
  CHECK(*physical_balance(map_with(21, 15, {{3, 4}, {17, 4}}), Axis::horizontal) == doctest::Approx(0.0));
  std::vector<std::pair<int, int>> top;
  for (int x = 0; x < 21; ++x) top.push_back({x, 0});
  CHECK(*physical_balance(map_with(21, 15, top), Axis::vertical) == doctest::Approx(-0.5));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto sal = saliency_map(scene_image(40, 30, s));
    for (Axis a : {Axis::vertical, Axis::horizontal}) {
      const double v = *physical_balance(sal, a);
      CHECK(v <= 0.0);
      CHECK(v >= -0.5);
    }
  }
  CHECK_FALSE(physical_balance(saliency_map(solid(40, 40, 9, 9, 9)), Axis::vertical).has_value());
}

TEST_CASE("placement scores are nonpositive") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = extract(scene_image(48, 40, s), CompositionParams{.slic_k = 20});
    for (const auto& v : {f.diagonal_dominance, f.rule_of_thirds, f.balance_vertical, f.balance_horizontal}) {
      REQUIRE(v.has_value());
      CHECK(*v <= 0.0);
      CHECK(*v >= -1.0);
    }
    CHECK(f.color_balance_vertical <= 0.0);
    CHECK(f.color_balance_horizontal <= 0.0);
    CHECK(f.n_segments >= 1);
  }
}

TEST_CASE("slic superpixels") {
  const auto one = slic_superpixels(random_image(20, 16, 1), 1, 10.0);
  CHECK(one.k_actual == 1);
  for (int l : one.labels) CHECK(l == 0);

  const auto uni = slic_superpixels(solid(64, 64, 90, 140, 30), 4, 10.0);
  CHECK(uni.k_actual == 4);
  std::vector<std::size_t> sizes(uni.k_actual, 0);
  for (int l : uni.labels) ++sizes[l];
  for (auto s : sizes) {
    CHECK(s >= 0.2 * 64 * 64);
    CHECK(s <= 0.3 * 64 * 64);
  }

  ImageBuffer two(128, 64, 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) {
      if (x < 64) two.set_rgb(x, y, 230, 40, 40);
      else two.set_rgb(x, y, 20, 60, 220);
    }
  const auto sp = slic_superpixels(two, 2, 10.0);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 128; ++x) CHECK(sp.at(x, y) == sp.at(x < 64 ? 0 : 127, 0));
  }
  CHECK(sp.at(0, 0) != sp.at(127, 0));

  CHECK_THROWS_AS(slic_superpixels(solid(4, 4, 0, 0, 0), 17, 10.0), InvalidArgument);
  CHECK_THROWS_AS(slic_superpixels(solid(4, 4, 0, 0, 0), 0, 10.0), InvalidArgument);
  CHECK_THROWS_AS(slic_superpixels(solid(4, 4, 0, 0, 0), 2, 0.0), InvalidArgument);
}

TEST_CASE("slic labels partition the image into connected regions") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto img = s % 2 ? random_image(50, 37, s) : scene_image(61, 44, s);
    for (int k : {5, 30, 100}) {
      const auto sp = slic_superpixels(img, k, 10.0);
      REQUIRE(sp.labels.size() == img.pixel_count());
      std::set<int> seen(sp.labels.begin(), sp.labels.end());
      CHECK(static_cast<int>(seen.size()) == sp.k_actual);
      CHECK(*seen.begin() == 0);
      CHECK(*seen.rbegin() == sp.k_actual - 1);
      CHECK(sp.k_actual >= 1);
      CHECK(sp.k_actual <= k + k / 2);
      CHECK(labels_connected(sp));
    }
  }
}

TEST_CASE("color balance") {
  ImageBuffer sym(30, 20, 3);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x) {
      const auto v = static_cast<std::uint8_t>(std::abs(2 * y - 19) * 12);
      sym.set_rgb(x, y, v, static_cast<std::uint8_t>(255 - v), 40);
    }
  CHECK(color_balance(sym, Axis::vertical) == doctest::Approx(0.0));

  ImageBuffer tb(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const std::uint8_t v = y < 16 ? 255 : 0;
      tb.set_rgb(x, y, v, v, v);
    }
  CHECK(color_balance(tb, Axis::vertical) == doctest::Approx(-1.0));
  CHECK(color_balance(solid(25, 25, 7, 99, 201), Axis::horizontal) == 0.0);
  CHECK(color_balance(solid(25, 25, 7, 99, 201), Axis::vertical) == 0.0);
}

TEST_CASE("color balance is mirror symmetric") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto img = scene_image(64, 48, s);
    CHECK(std::abs(color_balance(img, Axis::horizontal) - color_balance(mirror_horizontal(img), Axis::horizontal)) <
          1e-9);
    CHECK(std::abs(color_balance(img, Axis::vertical) - color_balance(mirror_vertical(img), Axis::vertical)) < 1e-9);
  }
}

TEST_CASE("segment counts") {
  CHECK(num_segments(solid(17, 9, 100, 100, 100)) == 1);
  ImageBuffer lr(20, 10, 3);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) {
      const std::uint8_t v = x < 10 ? 0 : 255;
      lr.set_rgb(x, y, v, v, v);
    }
  CHECK(num_segments(lr) == 2);
  ImageBuffer checker(20, 20, 3);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      const std::uint8_t v = ((x < 10) ^ (y < 10)) ? 255 : 0;
      checker.set_rgb(x, y, v, v, v);
    }
  CHECK(num_segments(checker) == 4);
  CHECK(num_segments(solid(5, 5, 1, 1, 1), SegmentCountMode::edge_changes) == 1);
  CHECK(num_segments(lr, SegmentCountMode::edge_changes) == 11);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto img = s % 2 ? random_image(30, 21, s) : scene_image(40, 33, s);
    CHECK(num_segments(rotate90(img)) == num_segments(img));
  }
}

TEST_CASE("extract agrees with the standalone operations") {
  const auto img = scene_image(56, 40, 9);
  const CompositionParams params{.slic_k = 30};
  const auto f = extract(img, params);
  CHECK(f.color_balance_vertical == color_balance(img, Axis::vertical, params));
  CHECK(f.color_balance_horizontal == color_balance(img, Axis::horizontal, params));
  CHECK(f.n_segments == num_segments(img));
  CHECK(*f.rule_of_thirds == *rule_of_thirds(saliency_map(img)));
}
