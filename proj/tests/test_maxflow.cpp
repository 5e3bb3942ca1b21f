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

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <vector>

#include "crowdvis/maxflow.hpp"
#include "doctest.h"

using crowdvis::MaxFlowGraph;

namespace {

struct Problem {
  int n = 0;
  std::vector<double> source_cap, sink_cap;
  struct Edge {
    int a, b;
    double ab, ba;
  };
  std::vector<Edge> edges;
};

Problem random_problem(std::mt19937_64& rng, int n, double density, bool integral) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto cap = [&] { return integral ? std::floor(10 * u(rng)) : 5.0 * u(rng); };
  Problem p;
  p.n = n;
  for (int i = 0; i < n; ++i) {
    p.source_cap.push_back(u(rng) < 0.4 ? cap() : 0.0);
    p.sink_cap.push_back(u(rng) < 0.4 ? cap() : 0.0);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (u(rng) < density) p.edges.push_back({a, b, cap(), cap()});
  return p;
}

// Edmonds-Karp on a dense residual matrix; source = n, sink = n + 1.
double edmonds_karp(const Problem& p) {
  const int s = p.n, t = p.n + 1, m = p.n + 2;
  std::vector<std::vector<double>> r(m, std::vector<double>(m, 0.0));
  for (int i = 0; i < p.n; ++i) {
    r[s][i] += p.source_cap[i];
    r[i][t] += p.sink_cap[i];
  }
  for (const auto& e : p.edges) {
    r[e.a][e.b] += e.ab;
    r[e.b][e.a] += e.ba;
  }
  double flow = 0.0;
  for (;;) {
    std::vector<int> parent(m, -1);
    parent[s] = s;
    std::deque<int> q{s};
    while (!q.empty() && parent[t] < 0) {
      const int u = q.front();
      q.pop_front();
      for (int v = 0; v < m; ++v) {
        if (parent[v] < 0 && r[u][v] > 1e-12) {
          parent[v] = u;
          q.push_back(v);
        }
      }
    }
    if (parent[t] < 0) return flow;
    double bottleneck = std::numeric_limits<double>::infinity();
    for (int v = t; v != s; v = parent[v]) bottleneck = std::min(bottleneck, r[parent[v]][v]);
    for (int v = t; v != s; v = parent[v]) {
      r[parent[v]][v] -= bottleneck;
      r[v][parent[v]] += bottleneck;
    }
    flow += bottleneck;
  }
}

MaxFlowGraph build(const Problem& p) {
  MaxFlowGraph g(p.n);
  for (int i = 0; i < p.n; ++i) g.add_terminal_weights(i, p.source_cap[i], p.sink_cap[i]);
  for (const auto& e : p.edges) g.add_edge(e.a, e.b, e.ab, e.ba);
  return g;
}

double cut_capacity(const Problem& p, const MaxFlowGraph& g) {
  auto src = [&](int i) { return g.segment(i) == MaxFlowGraph::Segment::source; };
  double c = 0.0;
  for (int i = 0; i < p.n; ++i) c += src(i) ? p.sink_cap[i] : p.source_cap[i];
  for (const auto& e : p.edges) {
    if (src(e.a) && !src(e.b)) c += e.ab;
    if (src(e.b) && !src(e.a)) c += e.ba;
  }
  return c;
}

}  // namespace

TEST_CASE("single node and chain") {
  MaxFlowGraph one(1);
  one.add_terminal_weights(0, 3.0, 5.0);
  CHECK(one.solve() == 3.0);
  CHECK(one.segment(0) == MaxFlowGraph::Segment::sink);

  MaxFlowGraph chain(3);
  chain.add_terminal_weights(0, 10.0, 0.0);
  chain.add_terminal_weights(2, 0.0, 10.0);
  chain.add_edge(0, 1, 4.0, 0.0);
  chain.add_edge(1, 2, 2.5, 0.0);
  CHECK(chain.solve() == doctest::Approx(2.5));
  CHECK(chain.segment(0) == MaxFlowGraph::Segment::source);
  CHECK(chain.segment(1) == MaxFlowGraph::Segment::source);
  CHECK(chain.segment(2) == MaxFlowGraph::Segment::sink);

  MaxFlowGraph bad(2);
  CHECK_THROWS(bad.add_edge(0, 1, -1.0, 0.0));
}

TEST_CASE("terminal weights accumulate") {
  MaxFlowGraph g(1);
  g.add_terminal_weights(0, 2.0, 0.0);
  g.add_terminal_weights(0, 0.0, 5.0);
  g.add_terminal_weights(0, 1.0, 1.0);
  CHECK(g.solve() == doctest::Approx(3.0));
}

TEST_CASE("flow and cut agree with Edmonds-Karp on random graphs") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 30);
    const double density = 0.05 + 0.3 * static_cast<double>(rng() % 100) / 100.0;
    const auto p = random_problem(rng, n, density, trial % 2 == 0);
    auto g = build(p);
    const double flow = g.solve();
    const double oracle = edmonds_karp(p);
    REQUIRE(flow == doctest::Approx(oracle).epsilon(1e-9));
    REQUIRE(cut_capacity(p, g) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("grid graphs match the oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 8, h = 7;
    Problem p;
    p.n = w * h;
    for (int i = 0; i < p.n; ++i) {
      p.source_cap.push_back(3 * u(rng));
      p.sink_cap.push_back(3 * u(rng));
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double c = 2 * u(rng);
        if (x + 1 < w) p.edges.push_back({y * w + x, y * w + x + 1, c, c});
        if (y + 1 < h) p.edges.push_back({y * w + x, (y + 1) * w + x, c, c});
      }
    auto g = build(p);
    const double flow = g.solve();
    // add_terminal_weights pre-pushes min(source, sink) per node; the oracle sees raw caps.
    REQUIRE(flow == doctest::Approx(edmonds_karp(p)).epsilon(1e-9));
    REQUIRE(cut_capacity(p, g) == doctest::Approx(flow).epsilon(1e-9));
  }
}
