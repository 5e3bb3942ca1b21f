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

#include <deque>
#include <vector>

namespace crowdvis {

// Augmenting-path max-flow on search trees grown from both terminals
// (Boykov-Kolmogorov), specialised for sparse vision graphs.
class MaxFlowGraph {
 public:
  enum class Segment { source, sink };

  explicit MaxFlowGraph(int node_count);

  int node_count() const noexcept { return static_cast<int>(nodes_.size()); }

  // Terminal capacities accumulate; only their difference matters to the cut.
  void add_terminal_weights(int node, double source_cap, double sink_cap);
  void add_edge(int from, int to, double cap, double reverse_cap);

  double solve();
  Segment segment(int node) const noexcept;

 private:
  static constexpr int kNone = -1;
  static constexpr int kTerminal = -2;
  static constexpr int kOrphan = -3;

  struct Node {
    int first_arc = -1;
    int parent = kNone;
    bool is_sink = false;
    bool queued = false;
    double tr_cap = 0.0;
    long ts = 0;
    int dist = 0;
  };
  struct Arc {
    int head;
    int next;
    int sister;
    double r_cap;
  };

  void set_active(int i);
  void augment(int middle_arc);
  void process_source_orphan(int i);
  void process_sink_orphan(int i);
  int tail(int arc) const noexcept { return arcs_[arcs_[arc].sister].head; }

  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
  std::deque<int> active_;
  std::deque<int> orphans_;
  double flow_ = 0.0;
  long time_ = 0;
};

}  // namespace crowdvis
