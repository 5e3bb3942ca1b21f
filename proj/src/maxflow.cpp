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

#include "crowdvis/maxflow.hpp"

#include <algorithm>
#include <limits>

#include "crowdvis/error.hpp"

namespace crowdvis {

MaxFlowGraph::MaxFlowGraph(int node_count) : nodes_(static_cast<std::size_t>(node_count)) {
  if (node_count < 0) throw InvalidArgument("node count must be nonnegative");
}

void MaxFlowGraph::add_terminal_weights(int i, double source_cap, double sink_cap) {
  const double delta = nodes_[i].tr_cap;
  if (delta > 0) {
    source_cap += delta;
  } else {
    sink_cap -= delta;
  }
  flow_ += std::min(source_cap, sink_cap);
  nodes_[i].tr_cap = source_cap - sink_cap;
}

void MaxFlowGraph::add_edge(int from, int to, double cap, double reverse_cap) {
  if (cap < 0 || reverse_cap < 0) throw InvalidArgument("edge capacities must be nonnegative");
  const int a = static_cast<int>(arcs_.size());
  arcs_.push_back({to, nodes_[from].first_arc, a + 1, cap});
  nodes_[from].first_arc = a;
  arcs_.push_back({from, nodes_[to].first_arc, a, reverse_cap});
  nodes_[to].first_arc = a + 1;
}

void MaxFlowGraph::set_active(int i) {
  if (!nodes_[i].queued) {
    nodes_[i].queued = true;
    active_.push_back(i);
  }
}

double MaxFlowGraph::solve() {
  for (int i = 0; i < node_count(); ++i) {
    auto& n = nodes_[i];
    n.ts = 0;
    if (n.tr_cap > 0) {
      n.is_sink = false;
      n.parent = kTerminal;
      n.dist = 1;
      set_active(i);
    } else if (n.tr_cap < 0) {
      n.is_sink = true;
      n.parent = kTerminal;
      n.dist = 1;
      set_active(i);
    } else {
      n.parent = kNone;
    }
  }

  int current = -1;
  for (;;) {
    int i = current;
    if (i >= 0) {
      if (nodes_[i].parent == kNone) i = -1;
    }
    while (i < 0) {
      if (active_.empty()) break;
      i = active_.front();
      active_.pop_front();
      nodes_[i].queued = false;
      if (nodes_[i].parent == kNone) i = -1;
    }
    if (i < 0) break;

    int found = -1;
    const Node& ni = nodes_[i];
    if (!ni.is_sink) {
      for (int a = ni.first_arc; a >= 0; a = arcs_[a].next) {
        if (arcs_[a].r_cap <= 0) continue;
        const int j = arcs_[a].head;
        Node& nj = nodes_[j];
        if (nj.parent == kNone) {
          nj.is_sink = false;
          nj.parent = arcs_[a].sister;
          nj.ts = nodes_[i].ts;
          nj.dist = nodes_[i].dist + 1;
          set_active(j);
        } else if (nj.is_sink) {
          found = a;
          break;
        } else if (nj.ts <= nodes_[i].ts && nj.dist > nodes_[i].dist) {
          nj.parent = arcs_[a].sister;
          nj.ts = nodes_[i].ts;
          nj.dist = nodes_[i].dist + 1;
        }
      }
    } else {
      for (int a = ni.first_arc; a >= 0; a = arcs_[a].next) {
        if (arcs_[arcs_[a].sister].r_cap <= 0) continue;
        const int j = arcs_[a].head;
        Node& nj = nodes_[j];
        if (nj.parent == kNone) {
          nj.is_sink = true;
          nj.parent = arcs_[a].sister;
          nj.ts = nodes_[i].ts;
          nj.dist = nodes_[i].dist + 1;
          set_active(j);
        } else if (!nj.is_sink) {
          found = arcs_[a].sister;
          break;
        } else if (nj.ts <= nodes_[i].ts && nj.dist > nodes_[i].dist) {
          nj.parent = arcs_[a].sister;
          nj.ts = nodes_[i].ts;
          nj.dist = nodes_[i].dist + 1;
        }
      }
    }

    ++time_;
    if (found >= 0) {
      current = i;
      augment(found);
      while (!orphans_.empty()) {
        const int o = orphans_.front();
        orphans_.pop_front();
        if (nodes_[o].is_sink) {
          process_sink_orphan(o);
        } else {
          process_source_orphan(o);
        }
      }
    } else {
      current = -1;
    }
  }
  return flow_;
}

void MaxFlowGraph::augment(int middle) {
  double bottleneck = arcs_[middle].r_cap;
  int i = tail(middle);
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    bottleneck = std::min(bottleneck, arcs_[arcs_[a].sister].r_cap);
    i = arcs_[a].head;
  }
  bottleneck = std::min(bottleneck, nodes_[i].tr_cap);
  i = arcs_[middle].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    bottleneck = std::min(bottleneck, arcs_[a].r_cap);
    i = arcs_[a].head;
  }
  bottleneck = std::min(bottleneck, -nodes_[i].tr_cap);

  arcs_[arcs_[middle].sister].r_cap += bottleneck;
  arcs_[middle].r_cap -= bottleneck;

  auto make_orphan = [this](int n) {
    nodes_[n].parent = kOrphan;
    orphans_.push_front(n);
  };

  i = tail(middle);
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) {
      nodes_[i].tr_cap -= bottleneck;
      if (nodes_[i].tr_cap <= 0) {
        nodes_[i].tr_cap = 0;
        make_orphan(i);
      }
      break;
    }
    const int next = arcs_[a].head;
    arcs_[a].r_cap += bottleneck;
    arcs_[arcs_[a].sister].r_cap -= bottleneck;
    if (arcs_[arcs_[a].sister].r_cap <= 0) {
      arcs_[arcs_[a].sister].r_cap = 0;
      make_orphan(i);
    }
    i = next;
  }
  i = arcs_[middle].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) {
      nodes_[i].tr_cap += bottleneck;
      if (nodes_[i].tr_cap >= 0) {
        nodes_[i].tr_cap = 0;
        make_orphan(i);
      }
      break;
    }
    const int next = arcs_[a].head;
    arcs_[arcs_[a].sister].r_cap += bottleneck;
    arcs_[a].r_cap -= bottleneck;
    if (arcs_[a].r_cap <= 0) {
      arcs_[a].r_cap = 0;
      make_orphan(i);
    }
    i = next;
  }
  flow_ += bottleneck;
}

namespace {
constexpr int kInfiniteDist = std::numeric_limits<int>::max();
}

void MaxFlowGraph::process_source_orphan(int i) {
  int best_arc = kNone;
  int best_dist = kInfiniteDist;
  for (int a0 = nodes_[i].first_arc; a0 >= 0; a0 = arcs_[a0].next) {
    if (arcs_[arcs_[a0].sister].r_cap <= 0) continue;
    int j = arcs_[a0].head;
    if (nodes_[j].is_sink || nodes_[j].parent == kNone) continue;
    int d = 0;
    for (;;) {
      if (nodes_[j].ts == time_) {
        d += nodes_[j].dist;
        break;
      }
      const int a = nodes_[j].parent;
      ++d;
      if (a == kTerminal) {
        nodes_[j].ts = time_;
        nodes_[j].dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[a].head;
    }
    if (d < kInfiniteDist) {
      if (d < best_dist) {
        best_arc = a0;
        best_dist = d;
      }
      for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
        nodes_[j].ts = time_;
        nodes_[j].dist = d--;
      }
    }
  }
  if (best_arc != kNone) {
    nodes_[i].parent = best_arc;
    nodes_[i].ts = time_;
    nodes_[i].dist = best_dist + 1;
    return;
  }
  nodes_[i].parent = kNone;
  for (int a0 = nodes_[i].first_arc; a0 >= 0; a0 = arcs_[a0].next) {
    const int j = arcs_[a0].head;
    const int a = nodes_[j].parent;
    if (nodes_[j].is_sink || a == kNone) continue;
    if (arcs_[arcs_[a0].sister].r_cap > 0) set_active(j);
    if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
      nodes_[j].parent = kOrphan;
      orphans_.push_back(j);
    }
  }
}

void MaxFlowGraph::process_sink_orphan(int i) {
  int best_arc = kNone;
  int best_dist = kInfiniteDist;
  for (int a0 = nodes_[i].first_arc; a0 >= 0; a0 = arcs_[a0].next) {
    if (arcs_[a0].r_cap <= 0) continue;
    int j = arcs_[a0].head;
    if (!nodes_[j].is_sink || nodes_[j].parent == kNone) continue;
    int d = 0;
    for (;;) {
      if (nodes_[j].ts == time_) {
        d += nodes_[j].dist;
        break;
      }
      const int a = nodes_[j].parent;
      ++d;
      if (a == kTerminal) {
        nodes_[j].ts = time_;
        nodes_[j].dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[a].head;
    }
    if (d < kInfiniteDist) {
      if (d < best_dist) {
        best_arc = a0;
        best_dist = d;
      }
      for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
        nodes_[j].ts = time_;
        nodes_[j].dist = d--;
      }
    }
  }
  if (best_arc != kNone) {
    nodes_[i].parent = best_arc;
    nodes_[i].ts = time_;
    nodes_[i].dist = best_dist + 1;
    return;
  }
  nodes_[i].parent = kNone;
  for (int a0 = nodes_[i].first_arc; a0 >= 0; a0 = arcs_[a0].next) {
    const int j = arcs_[a0].head;
    const int a = nodes_[j].parent;
    if (!nodes_[j].is_sink || a == kNone) continue;
    if (arcs_[a0].r_cap > 0) set_active(j);
    if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
      nodes_[j].parent = kOrphan;
      orphans_.push_back(j);
    }
  }
}

MaxFlowGraph::Segment MaxFlowGraph::segment(int i) const noexcept {
  const auto& n = nodes_[i];
  if (n.parent != kNone && !n.is_sink) return Segment::source;
  return Segment::sink;
}

}  // namespace crowdvis
