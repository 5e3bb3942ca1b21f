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

#include "crowdvis/scene.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "crowdvis/error.hpp"

namespace crowdvis::scene {
namespace {

namespace pt = boost::property_tree;

// Children named "_" in document order (the format's anonymous list items).
std::vector<const pt::ptree*> items(const pt::ptree& node) {
  std::vector<const pt::ptree*> out;
  for (const auto& [name, child] : node) {
    if (name == "_") out.push_back(&child);
  }
  return out;
}

std::vector<double> numbers(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw ParseError("non-numeric token in " + where);
  return out;
}

const pt::ptree& child(const pt::ptree& node, const std::string& name, const std::string& where) {
  const auto c = node.get_child_optional(name);
  if (!c) throw ParseError("missing <" + name + "> in " + where);
  return *c;
}

}  // namespace

CascadeClassifier parse_cascade(std::istream& in, const std::string& label) {
  pt::ptree doc;
  try {
    pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed cascade XML in " + label + ": " + e.message(), static_cast<int>(e.line()));
  }
  const auto root = doc.get_child_optional("opencv_storage");
  if (!root) throw ParseError("cascade " + label + " has no <opencv_storage> root");
  const auto cascade_node = root->get_child_optional("cascade");
  if (!cascade_node) throw ParseError("cascade " + label + " has no <cascade> element (old-style cascades unsupported)");
  const auto& c = *cascade_node;

  CascadeClassifier out;
  const std::string feature_type = c.get<std::string>("featureType", "");
  if (feature_type != "HAAR") throw ParseError("cascade " + label + ": featureType must be HAAR, got '" + feature_type + "'");
  try {
    out.window_width = c.get<int>("width");
    out.window_height = c.get<int>("height");
  } catch (const pt::ptree_error&) {
    throw ParseError("cascade " + label + ": missing or invalid <width>/<height>");
  }

  const auto stages = items(child(c, "stages", label));
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const std::string where = label + " stages[" + std::to_string(si) + "]";
    Stage stage;
    try {
      stage.threshold = stages[si]->get<double>("stageThreshold");
    } catch (const pt::ptree_error&) {
      throw ParseError("missing or invalid <stageThreshold> in " + where);
    }
    const auto weak = items(child(*stages[si], "weakClassifiers", where));
    for (std::size_t wi = 0; wi < weak.size(); ++wi) {
      const std::string wwhere = where + ".weakClassifiers[" + std::to_string(wi) + "]";
      const auto nodes = numbers(child(*weak[wi], "internalNodes", wwhere).data(), wwhere);
      const auto leaves = numbers(child(*weak[wi], "leafValues", wwhere).data(), wwhere);
      if (nodes.size() != 4 || leaves.size() != 2) {
        throw ParseError("only single-split stumps are supported (" + wwhere + ")");
      }
      if (nodes[0] != 0 || nodes[1] != -1) throw ParseError("stump children must be leaves (" + wwhere + ")");
      stage.weak.push_back({static_cast<int>(nodes[2]), nodes[3], leaves[0], leaves[1]});
    }
    out.stages.push_back(std::move(stage));
  }

  const auto features = items(child(c, "features", label));
  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    const std::string where = label + " features[" + std::to_string(fi) + "]";
    if (features[fi]->get<int>("tilted", 0) != 0) throw ParseError("tilted features are unsupported (" + where + ")");
    HaarFeature f;
    for (const auto* r : items(child(*features[fi], "rects", where))) {
      const auto v = numbers(r->data(), where);
      if (v.size() != 5) throw ParseError("rectangle needs 'x y w h weight' (" + where + ")");
      f.rects.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                         static_cast<int>(v[3]), v[4]});
    }
    out.features.push_back(std::move(f));
  }
  validate_cascade(out);
  return out;
}

CascadeClassifier load_cascade(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cascade file " + path.string());
  return parse_cascade(in, path.string());
}

void validate_cascade(const CascadeClassifier& c) {
  if (c.window_width < 1 || c.window_height < 1) throw ParseError("cascade window must be positive");
  if (c.stages.empty()) throw ParseError("cascade has no stages");
  for (std::size_t si = 0; si < c.stages.size(); ++si) {
    if (c.stages[si].weak.empty()) throw ParseError("cascade stage " + std::to_string(si) + " is empty");
    for (const auto& w : c.stages[si].weak) {
      if (w.feature < 0 || static_cast<std::size_t>(w.feature) >= c.features.size()) {
        throw ParseError("stage " + std::to_string(si) + " references missing feature " + std::to_string(w.feature));
      }
    }
  }
  for (std::size_t fi = 0; fi < c.features.size(); ++fi) {
    if (c.features[fi].rects.empty()) throw ParseError("feature " + std::to_string(fi) + " has no rectangles");
    for (const auto& r : c.features[fi].rects) {
      if (r.x < 0 || r.y < 0 || r.width < 1 || r.height < 1 || r.x + r.width > c.window_width ||
          r.y + r.height > c.window_height) {
        throw ParseError("feature " + std::to_string(fi) + " rectangle exceeds the " + std::to_string(c.window_width) +
                         "x" + std::to_string(c.window_height) + " window");
      }
    }
  }
}

double iou(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.width, b.x + b.width), y1 = std::min(a.y + a.height, b.y + b.height);
  const double inter = static_cast<double>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
  const double uni = static_cast<double>(a.width) * a.height + static_cast<double>(b.width) * b.height - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

// Summed-area tables with a zero first row/column: sum over [x0,x1) x [y0,y1).
struct Integral {
  int w = 0, h = 0;
  std::vector<double> sum, sq;
  double rect(const std::vector<double>& t, int x, int y, int rw, int rh) const noexcept {
    const int W = w + 1;
    return t[(y + rh) * W + x + rw] - t[y * W + x + rw] - t[(y + rh) * W + x] + t[y * W + x];
  }
};

Integral make_integral(const FloatPlane& gray) {
  Integral t;
  t.w = gray.width();
  t.h = gray.height();
  const int W = t.w + 1;
  t.sum.assign(static_cast<std::size_t>(W) * (t.h + 1), 0.0);
  t.sq.assign(t.sum.size(), 0.0);
  for (int y = 0; y < t.h; ++y) {
    double rs = 0.0, rq = 0.0;
    for (int x = 0; x < t.w; ++x) {
      const double v = gray.at(x, y);
      rs += v;
      rq += v * v;
      t.sum[(y + 1) * W + x + 1] = t.sum[y * W + x + 1] + rs;
      t.sq[(y + 1) * W + x + 1] = t.sq[y * W + x + 1] + rq;
    }
  }
  return t;
}

bool window_passes(const CascadeClassifier& c, const Integral& t, int x, int y) {
  // Variance normalization over the window shrunk by one pixel on each side.
  const int nx = x + 1, ny = y + 1, nw = c.window_width - 2, nh = c.window_height - 2;
  const double area = static_cast<double>(nw) * nh;
  const double s = t.rect(t.sum, nx, ny, nw, nh);
  const double q = t.rect(t.sq, nx, ny, nw, nh);
  const double nf2 = area * q - s * s;
  if (!(nf2 > 1e-9 * area * area)) return false;  // flat window: nothing to detect
  const double inv_nf = 1.0 / std::sqrt(nf2);
  for (const auto& stage : c.stages) {
    double acc = 0.0;
    for (const auto& w : stage.weak) {
      double v = 0.0;
      for (const auto& r : c.features[w.feature].rects) v += r.weight * t.rect(t.sum, x + r.x, y + r.y, r.width, r.height);
      acc += v * inv_nf < w.threshold ? w.left : w.right;
    }
    if (acc < stage.threshold) return false;
  }
  return true;
}

}  // namespace

std::vector<Rect> raw_detections(const ImageBuffer& img, const CascadeClassifier& cascade, const DetectParams& params) {
  if (!(params.scale_factor > 1.0)) throw InvalidArgument("scale factor must exceed 1");
  if (params.step < 1) throw InvalidArgument("window step must be >= 1");
  FloatPlane gray = to_grayscale(img);
  for (double& v : gray.data()) v *= 255.0;

  std::vector<Rect> out;
  for (double factor = 1.0;; factor *= params.scale_factor) {
    const int sw = static_cast<int>(std::lround(img.width() / factor));
    const int sh = static_cast<int>(std::lround(img.height() / factor));
    if (sw < cascade.window_width || sh < cascade.window_height) break;
    const auto scaled = (sw == img.width() && sh == img.height()) ? gray : resize_plane(gray, sw, sh);
    const auto table = make_integral(scaled);
    const int rows = (sh - cascade.window_height) / params.step + 1;
    const int cols = (sw - cascade.window_width) / params.step + 1;
    const int win_w = static_cast<int>(std::lround(cascade.window_width * factor));
    const int win_h = static_cast<int>(std::lround(cascade.window_height * factor));
    std::vector<std::vector<Rect>> per_row(rows);
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < rows; ++r) {
      const int y = r * params.step;
      for (int col = 0; col < cols; ++col) {
        const int x = col * params.step;
        if (window_passes(cascade, table, x, y)) {
          per_row[r].push_back({static_cast<int>(std::lround(x * factor)), static_cast<int>(std::lround(y * factor)),
                                win_w, win_h});
        }
      }
    }
    for (auto& row : per_row) out.insert(out.end(), row.begin(), row.end());
  }
  std::sort(out.begin(), out.end(), [](const Rect& a, const Rect& b) {
    return std::tie(a.y, a.x, a.width, a.height) < std::tie(b.y, b.x, b.width, b.height);
  });
  return out;
}

std::vector<Rect> detect_faces(const ImageBuffer& img, const CascadeClassifier& cascade, const DetectParams& params) {
  const auto raw = raw_detections(img, cascade, params);
  const std::size_t n = raw.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (iou(raw[i], raw[j]) >= params.group_iou) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  struct Group {
    double x = 0, y = 0, w = 0, h = 0;
    std::size_t count = 0;
  };
  std::map<std::size_t, Group> groups;
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = groups[find(i)];
    g.x += raw[i].x;
    g.y += raw[i].y;
    g.w += raw[i].width;
    g.h += raw[i].height;
    ++g.count;
  }
  struct Candidate {
    Rect rect;
    std::size_t support;
  };
  std::vector<Candidate> kept;
  for (const auto& [root, g] : groups) {
    if (g.count < static_cast<std::size_t>(params.min_neighbors) + 1) continue;
    const double c = static_cast<double>(g.count);
    kept.push_back({{static_cast<int>(std::lround(g.x / c)), static_cast<int>(std::lround(g.y / c)),
                     static_cast<int>(std::lround(g.w / c)), static_cast<int>(std::lround(g.h / c))},
                    g.count});
  }
  // Averaged groups that still overlap keep only the better supported one.
  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    if (a.support != b.support) return a.support > b.support;
    return std::tie(a.rect.y, a.rect.x, a.rect.width) < std::tie(b.rect.y, b.rect.x, b.rect.width);
  });
  std::vector<Rect> faces;
  for (const auto& cand : kept) {
    bool overlaps = false;
    for (const auto& f : faces) overlaps = overlaps || iou(f, cand.rect) >= params.group_iou;
    if (!overlaps) faces.push_back(cand.rect);
  }
  std::sort(faces.begin(), faces.end(), [](const Rect& a, const Rect& b) {
    return std::tie(a.y, a.x, a.width, a.height) < std::tie(b.y, b.x, b.width, b.height);
  });
  return faces;
}

int num_evoked_concepts(const annotation::AnnotationSet& ann, double tau) {
  return static_cast<int>(
      std::count_if(ann.labels.begin(), ann.labels.end(), [&](const auto& l) { return l.confidence >= tau; }));
}

std::optional<double> ease_of_concept_identification(const annotation::AnnotationSet& ann) {
  if (ann.labels.empty()) return std::nullopt;
  double best = 0.0;
  for (const auto& l : ann.labels) best = std::max(best, l.confidence);
  return best;
}

}  // namespace crowdvis::scene
