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
#include <numeric>

#include "crowdvis/error.hpp"
#include "crowdvis/models.hpp"
#include "crowdvis/random.hpp"

namespace crowdvis::models {

double RegressionTree::predict(const double* row, std::ptrdiff_t stride) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    const double v = row[n.feature * stride];
    i = std::isnan(v) ? (n.missing_left ? n.left : n.right) : (v < n.threshold ? n.left : n.right);
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {  // children always follow parents
    if (nodes[i].is_leaf()) continue;
    d[static_cast<std::size_t>(nodes[i].left)] = d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

VectorXd TreeEnsemble::predict(const MatrixXd& X) const {
  if (X.cols() != n_features) throw InvalidArgument("ensemble expects " + std::to_string(n_features) + " columns");
  const Eigen::Index n = X.rows();
  VectorXd out(n);
  if (kind == EnsembleKind::gbt) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (const auto& t : trees) s += t.predict(X.data() + i, n);
      out(i) = base_score + eta * s;
    }
    return out;
  }
  const MatrixXd d = predict_draws(X);
  return d.rowwise().mean();
}

MatrixXd TreeEnsemble::predict_draws(const MatrixXd& X) const {
  if (kind != EnsembleKind::bart) throw InvalidArgument("posterior draws exist only for BART");
  if (X.cols() != n_features) throw InvalidArgument("ensemble expects " + std::to_string(n_features) + " columns");
  const Eigen::Index n = X.rows();
  MatrixXd out(n, static_cast<Eigen::Index>(draws.size()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t dd = 0; dd < static_cast<std::ptrdiff_t>(draws.size()); ++dd) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (const auto& t : draws[static_cast<std::size_t>(dd)]) s += t.predict(X.data() + i, n);
      out(i, dd) = (s + 0.5) * y_scale + y_min;
    }
  }
  return out;
}

namespace {

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool missing_left = true;
};

double split_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2;
  return mid > lo ? mid : hi;
}

double score(double G, double H, double lambda) { return G * G / (H + lambda); }

}  // namespace

TreeEnsemble fit_gbt(const MatrixXd& X, const VectorXd& y, const GbtParams& p, const MatrixXd* X_valid,
                     const VectorXd* y_valid) {
  if (!(p.eta > 0 && p.eta <= 1)) throw InvalidArgument("gbt: eta must lie in (0, 1]");
  if (p.max_depth < 1) throw InvalidArgument("gbt: max_depth must be >= 1");
  if (!(p.subsample > 0 && p.subsample <= 1)) throw InvalidArgument("gbt: subsample must lie in (0, 1]");
  if (!(p.colsample_bytree > 0 && p.colsample_bytree <= 1)) throw InvalidArgument("gbt: colsample_bytree must lie in (0, 1]");
  if (p.n_rounds < 1) throw InvalidArgument("gbt: n_rounds must be >= 1");
  if (p.early_stopping_rounds < 0) throw InvalidArgument("gbt: early_stopping_rounds must be >= 0");
  if (!(p.gamma >= 0) || !(p.lambda >= 0)) throw InvalidArgument("gbt: gamma and lambda must be >= 0");
  if (X.rows() != y.size() || X.rows() < 1) throw InvalidArgument("gbt: X and y disagree on row count");
  if (y.hasNaN()) throw InvalidArgument("gbt: outcome has missing values");
  const bool has_valid = X_valid != nullptr && y_valid != nullptr;
  if (has_valid && (X_valid->cols() != X.cols() || X_valid->rows() != y_valid->size())) {
    throw InvalidArgument("gbt: validation data shape mismatch");
  }

  const Eigen::Index n = X.rows();
  const int nf = static_cast<int>(X.cols());
  // Non-missing rows of each feature, ascending by value then index.
  std::vector<std::vector<int>> order(static_cast<std::size_t>(nf));
  std::vector<std::vector<int>> missing(static_cast<std::size_t>(nf));
  for (int f = 0; f < nf; ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    for (int i = 0; i < n; ++i) (std::isnan(X(i, f)) ? missing[static_cast<std::size_t>(f)] : o).push_back(i);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
  }

  TreeEnsemble ens;
  ens.kind = EnsembleKind::gbt;
  ens.n_features = nf;
  ens.eta = p.eta;
  ens.base_score = y.mean();
  VectorXd pred = VectorXd::Constant(n, ens.base_score);
  VectorXd vpred = has_valid ? VectorXd::Constant(X_valid->rows(), ens.base_score) : VectorXd();
  Rng rng(p.seed);
  double best_valid = INFINITY;
  int best_round = -1;

  std::vector<int> node_of(static_cast<std::size_t>(n));
  std::vector<double> grad(static_cast<std::size_t>(n));
  for (int round = 0; round < p.n_rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] = pred(i) - y(i);
    // Row and column sampling.
    std::size_t sampled = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool take = p.subsample >= 1.0 || rng.uniform() < p.subsample;
      node_of[static_cast<std::size_t>(i)] = take ? 0 : -1;
      sampled += take;
    }
    if (sampled == 0) node_of[rng.below(static_cast<std::uint64_t>(n))] = 0;
    std::vector<int> features(static_cast<std::size_t>(nf));
    std::iota(features.begin(), features.end(), 0);
    if (p.colsample_bytree < 1.0 && nf > 0) {
      rng.shuffle(std::span<int>(features));
      features.resize(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(p.colsample_bytree * nf))));
      std::sort(features.begin(), features.end());
    }

    RegressionTree tree;
    std::vector<double> G{0.0}, H{0.0};
    for (Eigen::Index i = 0; i < n; ++i) {
      if (node_of[static_cast<std::size_t>(i)] == 0) {
        G[0] += grad[static_cast<std::size_t>(i)];
        H[0] += 1.0;
      }
    }
    std::vector<int> frontier{0};
    for (int depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
      const std::size_t nn = tree.nodes.size();
      std::vector<char> active(nn, 0);
      for (int a : frontier) active[static_cast<std::size_t>(a)] = 1;
      std::vector<Candidate> best(nn);
      std::vector<double> GL(nn), HL(nn), GM(nn), HM(nn), last(nn);
      std::vector<char> started(nn);
      for (int f : features) {
        std::fill(GL.begin(), GL.end(), 0.0);
        std::fill(HL.begin(), HL.end(), 0.0);
        std::fill(GM.begin(), GM.end(), 0.0);
        std::fill(HM.begin(), HM.end(), 0.0);
        std::fill(started.begin(), started.end(), 0);
        for (int i : missing[static_cast<std::size_t>(f)]) {
          const int a = node_of[static_cast<std::size_t>(i)];
          if (a < 0 || !active[static_cast<std::size_t>(a)]) continue;
          GM[static_cast<std::size_t>(a)] += grad[static_cast<std::size_t>(i)];
          HM[static_cast<std::size_t>(a)] += 1.0;
        }
        for (int i : order[static_cast<std::size_t>(f)]) {
          const int a = node_of[static_cast<std::size_t>(i)];
          if (a < 0 || !active[static_cast<std::size_t>(a)]) continue;
          const auto ua = static_cast<std::size_t>(a);
          const double v = X(i, f);
          if (started[ua] && v != last[ua]) {
            const double parent = score(G[ua], H[ua], p.lambda);
            for (const bool miss_left : {true, false}) {
              const double gl = GL[ua] + (miss_left ? GM[ua] : 0.0), hl = HL[ua] + (miss_left ? HM[ua] : 0.0);
              const double gr = G[ua] - gl, hr = H[ua] - hl;
              if (hl < 1.0 || hr < 1.0) continue;
              const double gain = 0.5 * (score(gl, hl, p.lambda) + score(gr, hr, p.lambda) - parent) - p.gamma;
              if (gain > best[ua].gain + 1e-12 * std::abs(parent)) {
                best[ua] = {gain, f, split_threshold(last[ua], v), miss_left};
              }
            }
          }
          GL[ua] += grad[static_cast<std::size_t>(i)];
          HL[ua] += 1.0;
          last[ua] = v;
          started[ua] = 1;
        }
      }
      std::vector<int> next;
      for (int a : frontier) {
        const auto& c = best[static_cast<std::size_t>(a)];
        if (c.feature < 0 || !(c.gain > 0.0)) continue;
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        auto& node = tree.nodes[static_cast<std::size_t>(a)];
        node.feature = c.feature;
        node.threshold = c.threshold;
        node.missing_left = c.missing_left;
        node.left = l;
        node.right = l + 1;
        G.resize(tree.nodes.size(), 0.0);
        H.resize(tree.nodes.size(), 0.0);
        next.push_back(l);
        next.push_back(l + 1);
      }
      if (next.empty()) break;
      for (Eigen::Index i = 0; i < n; ++i) {
        int& a = node_of[static_cast<std::size_t>(i)];
        if (a < 0 || tree.nodes[static_cast<std::size_t>(a)].is_leaf()) continue;
        const auto& node = tree.nodes[static_cast<std::size_t>(a)];
        const double v = X(i, node.feature);
        a = std::isnan(v) ? (node.missing_left ? node.left : node.right) : (v < node.threshold ? node.left : node.right);
        G[static_cast<std::size_t>(a)] += grad[static_cast<std::size_t>(i)];
        H[static_cast<std::size_t>(a)] += 1.0;
      }
      frontier = std::move(next);
    }
    for (std::size_t a = 0; a < tree.nodes.size(); ++a) {
      if (tree.nodes[a].is_leaf()) tree.nodes[a].value = H[a] + p.lambda > 0 ? -G[a] / (H[a] + p.lambda) : 0.0;
    }

    for (Eigen::Index i = 0; i < n; ++i) pred(i) += p.eta * tree.predict(X.data() + i, n);
    ens.train_rmse.push_back(std::sqrt((pred - y).squaredNorm() / static_cast<double>(n)));
    ens.trees.push_back(std::move(tree));
    if (has_valid) {
      const Eigen::Index nv = X_valid->rows();
      for (Eigen::Index i = 0; i < nv; ++i) vpred(i) += p.eta * ens.trees.back().predict(X_valid->data() + i, nv);
      const double r = nv > 0 ? std::sqrt((vpred - *y_valid).squaredNorm() / static_cast<double>(nv)) : 0.0;
      ens.valid_rmse.push_back(r);
      if (r < best_valid) {
        best_valid = r;
        best_round = round;
      } else if (p.early_stopping_rounds > 0 && round - best_round >= p.early_stopping_rounds) {
        break;
      }
    }
  }
  if (has_valid && p.early_stopping_rounds > 0 && best_round >= 0) {
    ens.trees.resize(static_cast<std::size_t>(best_round + 1));
  }
  ens.best_iteration = static_cast<int>(ens.trees.size());
  return ens;
}

}  // namespace crowdvis::models
