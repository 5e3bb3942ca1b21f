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
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>

#include "crowdvis/error.hpp"
#include "crowdvis/models.hpp"
#include "crowdvis/random.hpp"

namespace crowdvis::models {
namespace {

// Working tree for the sampler. Every node keeps its rows so that prune and
// change can re-partition without touching the rest of the tree.
struct Node {
  int feature = -1;
  int rank = 0;  // rows with value rank < rank go left
  bool missing_left = true;
  int left = -1, right = -1, parent = -1;
  int depth = 0;
  double mu = 0.0;
  std::vector<int> rows;
  bool leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<int> free;

  int add(Node n) {
    if (!free.empty()) {
      const int i = free.back();
      free.pop_back();
      nodes[static_cast<std::size_t>(i)] = std::move(n);
      return i;
    }
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }
  Node& at(int i) { return nodes[static_cast<std::size_t>(i)]; }
  const Node& at(int i) const { return nodes[static_cast<std::size_t>(i)]; }
  bool alive(int i) const { return std::find(free.begin(), free.end(), i) == free.end(); }
};

// Sorted distinct values and per-row ranks (-1 for missing) of each feature.
struct RankedData {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> rank;  // [feature][row]
};

RankedData rank_data(const MatrixXd& X) {
  RankedData d;
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (!std::isnan(X(i, f))) v.push_back(X(i, f));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<int> r(static_cast<std::size_t>(X.rows()), -1);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!std::isnan(X(i, f))) r[static_cast<std::size_t>(i)] = static_cast<int>(std::lower_bound(v.begin(), v.end(), X(i, f)) - v.begin());
    }
    d.values.push_back(std::move(v));
    d.rank.push_back(std::move(r));
  }
  return d;
}

struct Rule {
  int feature = -1;
  int rank = 0;
  bool missing_left = true;
};

class Sampler {
 public:
  Sampler(const RankedData& data, const BartParams& p, Rng& rng) : data_(data), p_(p), rng_(rng) {}

  // Uniform over features with at least two distinct observed values in the
  // node, then uniform over the cut ranks above the node minimum, then a fair
  // coin for the missing direction.
  bool draw_rule(const std::vector<int>& rows, Rule& out) {
    const int nf = static_cast<int>(data_.rank.size());
    std::vector<int> order(static_cast<std::size_t>(nf));
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(std::span<int>(order));
    for (int f : order) {
      const auto& r = data_.rank[static_cast<std::size_t>(f)];
      int first = -1;
      bool varied = false;
      for (int i : rows) {
        const int v = r[static_cast<std::size_t>(i)];
        if (v < 0) continue;
        if (first < 0) first = v;
        else if (v != first) {
          varied = true;
          break;
        }
      }
      if (!varied) continue;
      std::vector<int> ranks;
      ranks.reserve(rows.size());
      for (int i : rows)
        if (r[static_cast<std::size_t>(i)] >= 0) ranks.push_back(r[static_cast<std::size_t>(i)]);
      std::sort(ranks.begin(), ranks.end());
      ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
      out.feature = f;
      out.rank = ranks[1 + rng_.below(ranks.size() - 1)];
      out.missing_left = rng_.uniform() < 0.5;
      return true;
    }
    return false;
  }

  void partition(const std::vector<int>& rows, const Rule& rule, std::vector<int>& left, std::vector<int>& right) const {
    left.clear();
    right.clear();
    const auto& r = data_.rank[static_cast<std::size_t>(rule.feature)];
    for (int i : rows) {
      const int v = r[static_cast<std::size_t>(i)];
      const bool go_left = v < 0 ? rule.missing_left : v < rule.rank;
      (go_left ? left : right).push_back(i);
    }
  }

  double p_split(int depth) const { return p_.alpha * std::pow(1.0 + depth, -p_.beta); }

  // log of the integrated likelihood of a leaf up to terms shared by all leaves.
  double leaf_loglik(double S, double n, double sigma2) const {
    const double v = sigma2 + n * smu2_;
    return -0.5 * std::log(v) + smu2_ * S * S / (2.0 * sigma2 * v);
  }

  double sum(const std::vector<int>& rows, const std::vector<double>& R) const {
    double s = 0;
    for (int i : rows) s += R[static_cast<std::size_t>(i)];
    return s;
  }

  double smu2_ = 0.0;

 private:
  const RankedData& data_;
  const BartParams& p_;
  Rng& rng_;
};

RegressionTree export_tree(const Tree& t, const RankedData& data) {
  RegressionTree out;
  out.nodes.clear();
  out.nodes.push_back({});
  std::vector<std::pair<int, int>> stack{{0, 0}};  // (work node, output index), breadth first
  for (std::size_t q = 0; q < stack.size(); ++q) {
    const auto [wi, oi] = stack[q];
    const Node& n = t.at(wi);
    if (n.leaf()) {
      out.nodes[static_cast<std::size_t>(oi)].value = n.mu;
      continue;
    }
    const int l = static_cast<int>(out.nodes.size());
    out.nodes.push_back({});
    out.nodes.push_back({});
    auto& o = out.nodes[static_cast<std::size_t>(oi)];
    o.feature = n.feature;
    o.threshold = data.values[static_cast<std::size_t>(n.feature)][static_cast<std::size_t>(n.rank)];
    o.missing_left = n.missing_left;
    o.left = l;
    o.right = l + 1;
    stack.push_back({n.left, l});
    stack.push_back({n.right, l + 1});
  }
  return out;
}

double initial_sigma(const MatrixXd& X, const VectorXd& y) {
  const Eigen::Index n = X.rows(), p = X.cols();
  double s2 = 0.0;
  if (!X.hasNaN() && n > p + 1) {
    MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = X;
    const VectorXd b = A.colPivHouseholderQr().solve(y);
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
    const double dof = static_cast<double>(n - qr.rank());
    s2 = dof > 0 ? (y - A * b).squaredNorm() / dof : 0.0;
  } else {
    s2 = n > 1 ? (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1) : 0.0;
  }
  return std::max(std::sqrt(std::max(s2, 0.0)), 1e-3);
}

}  // namespace

TreeEnsemble fit_bart(const MatrixXd& X, const VectorXd& y, const BartParams& p) {
  if (p.m < 1) throw InvalidArgument("bart: m must be >= 1");
  if (!(p.k > 0)) throw InvalidArgument("bart: k must be > 0");
  if (!(p.nu > 0)) throw InvalidArgument("bart: nu must be > 0");
  if (!(p.q > 0 && p.q < 1)) throw InvalidArgument("bart: q must lie in (0, 1)");
  if (!(p.alpha > 0 && p.alpha < 1)) throw InvalidArgument("bart: alpha must lie in (0, 1)");
  if (!(p.beta >= 0)) throw InvalidArgument("bart: beta must be >= 0");
  if (p.n_burn < 0 || p.n_post < 1) throw InvalidArgument("bart: need n_burn >= 0 and n_post >= 1");
  if (X.rows() != y.size() || X.rows() < 1) throw InvalidArgument("bart: X and y disagree on row count");
  if (y.hasNaN()) throw InvalidArgument("bart: outcome has missing values");

  const Eigen::Index n = X.rows();
  const auto un = static_cast<std::size_t>(n);
  TreeEnsemble ens;
  ens.kind = EnsembleKind::bart;
  ens.n_features = static_cast<int>(X.cols());
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  ens.y_scale = hi > lo ? hi - lo : 1.0;
  ens.y_min = hi > lo ? lo : lo - 0.5;
  const VectorXd yt = (y.array() - ens.y_min) / ens.y_scale - 0.5;

  const RankedData data = rank_data(X);
  Rng rng(p.seed);
  Sampler s(data, p, rng);
  const double smu = 0.5 / (p.k * std::sqrt(static_cast<double>(p.m)));
  s.smu2_ = smu * smu;
  const double sigma_hat = initial_sigma(X, yt);
  const boost::math::chi_squared chi(p.nu);
  const double lambda = sigma_hat * sigma_hat * boost::math::quantile(chi, 1.0 - p.q) / p.nu;
  double sigma2 = sigma_hat * sigma_hat;

  std::vector<int> all(un);
  std::iota(all.begin(), all.end(), 0);
  std::vector<Tree> trees(static_cast<std::size_t>(p.m));
  std::vector<std::vector<double>> fit(static_cast<std::size_t>(p.m), std::vector<double>(un, 0.0));
  std::vector<double> total(un, 0.0), R(un);
  const double mu0 = yt.mean() / p.m;
  for (std::size_t j = 0; j < trees.size(); ++j) {
    Node root;
    root.rows = all;
    root.mu = mu0;
    trees[j].add(std::move(root));
    std::fill(fit[j].begin(), fit[j].end(), mu0);
    for (std::size_t i = 0; i < un; ++i) total[i] += mu0;
  }

  const double log_p_step = std::log(0.25);
  std::vector<int> left, right, leaves, prunable;
  auto collect = [&](const Tree& t) {
    leaves.clear();
    prunable.clear();
    for (int i = 0; i < static_cast<int>(t.nodes.size()); ++i) {
      if (!t.alive(i)) continue;
      const Node& nd = t.at(i);
      if (nd.leaf()) leaves.push_back(i);
      else if (t.at(nd.left).leaf() && t.at(nd.right).leaf()) prunable.push_back(i);
    }
  };

  const int total_iter = p.n_burn + p.n_post;
  for (int iter = 0; iter < total_iter; ++iter) {
    for (std::size_t j = 0; j < trees.size(); ++j) {
      Tree& t = trees[j];
      auto& fj = fit[j];
      for (std::size_t i = 0; i < un; ++i) R[i] = yt(static_cast<Eigen::Index>(i)) - (total[i] - fj[i]);
      collect(t);
      const bool root_only = t.at(0).leaf();
      const double u = rng.uniform();
      const int move = root_only ? 0 : (u < 0.25 ? 0 : u < 0.5 ? 1 : 2);

      if (move == 0) {  // grow
        const int li = leaves[rng.below(leaves.size())];
        Rule rule;
        if (s.draw_rule(t.at(li).rows, rule)) {
          s.partition(t.at(li).rows, rule, left, right);
          const double SL = s.sum(left, R), SR = s.sum(right, R), S = SL + SR;
          const double nL = static_cast<double>(left.size()), nR = static_cast<double>(right.size());
          const double loglik = s.leaf_loglik(SL, nL, sigma2) + s.leaf_loglik(SR, nR, sigma2) -
                                s.leaf_loglik(S, nL + nR, sigma2) + 0.5 * std::log(sigma2);
          const int d = t.at(li).depth;
          const int parent = t.at(li).parent;
          const bool parent_was_prunable = parent >= 0 && t.at(t.at(parent).left).leaf() && t.at(t.at(parent).right).leaf();
          const double w2_star = static_cast<double>(prunable.size()) + 1.0 - (parent_was_prunable ? 1.0 : 0.0);
          const double b = static_cast<double>(leaves.size());
          const double log_transition = (log_p_step - (root_only ? 0.0 : log_p_step)) + std::log(b / w2_star);
          const double ps = s.p_split(d), pc = s.p_split(d + 1);
          const double log_prior = std::log(ps) + 2.0 * std::log1p(-pc) - std::log1p(-ps);
          if (std::log(rng.uniform()) < loglik + log_transition + log_prior) {
            Node l, r;
            l.parent = r.parent = li;
            l.depth = r.depth = d + 1;
            l.rows = left;
            r.rows = right;
            const int lidx = t.add(std::move(l));
            const int ridx = t.add(std::move(r));
            Node& nd = t.at(li);
            nd.feature = rule.feature;
            nd.rank = rule.rank;
            nd.missing_left = rule.missing_left;
            nd.left = lidx;
            nd.right = ridx;
          }
        }
      } else if (move == 1) {  // prune
        const int pi = prunable[rng.below(prunable.size())];
        const Node& nd = t.at(pi);
        const auto& L = t.at(nd.left).rows;
        const auto& Rr = t.at(nd.right).rows;
        const double SL = s.sum(L, R), SR = s.sum(Rr, R);
        const double nL = static_cast<double>(L.size()), nR = static_cast<double>(Rr.size());
        const double loglik = -(s.leaf_loglik(SL, nL, sigma2) + s.leaf_loglik(SR, nR, sigma2) -
                                s.leaf_loglik(SL + SR, nL + nR, sigma2) + 0.5 * std::log(sigma2));
        const double b = static_cast<double>(leaves.size());
        const bool becomes_root = pi == 0;
        const double log_transition =
            ((becomes_root ? 0.0 : log_p_step) - log_p_step) + std::log(static_cast<double>(prunable.size()) / (b - 1.0));
        const double ps = s.p_split(nd.depth), pc = s.p_split(nd.depth + 1);
        const double log_prior = -(std::log(ps) + 2.0 * std::log1p(-pc) - std::log1p(-ps));
        if (std::log(rng.uniform()) < loglik + log_transition + log_prior) {
          const int l = nd.left, r = nd.right;
          Node& m = t.at(pi);
          m.feature = -1;
          m.left = m.right = -1;
          t.at(l).rows.clear();
          t.at(r).rows.clear();
          t.free.push_back(l);
          t.free.push_back(r);
        }
      } else {  // change
        const int pi = prunable[rng.below(prunable.size())];
        Rule rule;
        if (s.draw_rule(t.at(pi).rows, rule)) {
          s.partition(t.at(pi).rows, rule, left, right);
          if (!left.empty() && !right.empty()) {
            const Node& nd = t.at(pi);
            const auto& L = t.at(nd.left).rows;
            const auto& Rr = t.at(nd.right).rows;
            const double loglik = s.leaf_loglik(s.sum(left, R), static_cast<double>(left.size()), sigma2) +
                                  s.leaf_loglik(s.sum(right, R), static_cast<double>(right.size()), sigma2) -
                                  s.leaf_loglik(s.sum(L, R), static_cast<double>(L.size()), sigma2) -
                                  s.leaf_loglik(s.sum(Rr, R), static_cast<double>(Rr.size()), sigma2);
            if (std::log(rng.uniform()) < loglik) {
              Node& m = t.at(pi);
              m.feature = rule.feature;
              m.rank = rule.rank;
              m.missing_left = rule.missing_left;
              t.at(m.left).rows = left;
              t.at(m.right).rows = right;
            }
          }
        }
      }

      // Conjugate leaf draws, then refresh this tree's fit.
      collect(t);
      for (int li : leaves) {
        Node& nd = t.at(li);
        const double S = s.sum(nd.rows, R), cnt = static_cast<double>(nd.rows.size());
        const double v = sigma2 + cnt * s.smu2_;
        nd.mu = s.smu2_ * S / v + std::sqrt(sigma2 * s.smu2_ / v) * rng.normal();
        for (int i : nd.rows) {
          const auto ui = static_cast<std::size_t>(i);
          total[ui] += nd.mu - fj[ui];
          fj[ui] = nd.mu;
        }
      }
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < un; ++i) {
      const double e = yt(static_cast<Eigen::Index>(i)) - total[i];
      sse += e * e;
    }
    sigma2 = (p.nu * lambda + sse) / rng.chi_squared(p.nu + static_cast<double>(n));
    if (!(sigma2 > 0.0)) sigma2 = std::numeric_limits<double>::min();

    if (iter >= p.n_burn) {
      std::vector<RegressionTree> draw;
      draw.reserve(trees.size());
      for (const auto& t : trees) draw.push_back(export_tree(t, data));
      ens.draws.push_back(std::move(draw));
      ens.sigma.push_back(std::sqrt(sigma2) * ens.y_scale);
    }
  }
  return ens;
}

}  // namespace crowdvis::models
