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

#include <cmath>
#include <numeric>

#include "crowdvis/error.hpp"
#include "crowdvis/interpret.hpp"
#include "doctest.h"
#include "synthetic.hpp"

using namespace crowdvis;
using namespace crowdvis::interpret;
using crowdvis::testing::as_table;
using crowdvis::testing::friedman1;
using models::BartParams;
using models::Learner;

namespace {

BartParams small_bart(std::uint64_t seed = 0) {
  BartParams p;
  p.m = 20;
  p.n_burn = 50;
  p.n_post = 50;
  p.seed = seed;
  return p;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// y = x1 + noise with two pure-noise companions.
std::pair<dataset::FeatureTable, dataset::FeatureTable> one_signal(std::uint64_t seed, int n_train, int n_test) {
  Rng rng(seed);
  auto make = [&](int n) {
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
      y(i) = 3 * X(i, 0) + 0.5 * rng.normal();
    }
    return as_table(X, y);
  };
  auto tr = make(n_train);
  auto te = make(n_test);
  for (auto& id : te.ids) id = "t" + id;
  return {tr, te};
}

NullTestConfig null_config(int resamples, bool long_chain = false) {
  NullTestConfig c;
  c.n_resamples = resamples;
  c.seed = 17;
  c.train.bart_grid = {small_bart()};
  if (long_chain) {
    c.train.bart_grid[0].m = 50;
    c.train.bart_grid[0].n_burn = 200;
    c.train.bart_grid[0].n_post = 200;
  }
  return c;
}

}  // namespace

TEST_CASE("a lone input takes every split") {
  Rng rng(1);
  Eigen::MatrixXd X(120, 1);
  Eigen::VectorXd y(120);
  for (int i = 0; i < 120; ++i) X(i, 0) = rng.uniform(), y(i) = std::sin(6 * X(i, 0)) + 0.1 * rng.normal();
  const auto rep = inclusion_proportions(as_table(X, y), small_bart(), 2);
  REQUIRE(rep.variables.size() == 1);
  CHECK(rep.variables[0].proportion == 1.0);
}

TEST_CASE("inclusion proportions form a probability vector with ordered intervals") {
  const auto d = friedman1(200, 2);
  const auto rep = inclusion_proportions(as_table(d.X, d.y), small_bart(4), 3);
  CHECK(rep.has_intervals);
  double sum = 0;
  for (const auto& v : rep.variables) {
    CHECK(v.proportion >= 0.0);
    CHECK(v.proportion <= 1.0);
    CHECK(v.lower <= v.proportion);
    CHECK(v.proportion <= v.upper);
    CHECK(v.significant == (v.lower > 0));
    sum += v.proportion;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  const auto shares = split_shares(models::fit_bart(d.X, d.y, small_bart(4)));
  CHECK(std::accumulate(shares.begin(), shares.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inclusion proportions rank Friedman signal above noise") {
  const auto d = friedman1(500, 3);
  BartParams p = small_bart(8);
  p.m = 50;
  p.n_burn = 100;
  p.n_post = 200;
  const auto rep = inclusion_proportions(as_table(d.X, d.y), p, 2);
  double weakest_signal = 1, strongest_noise = 0;
  for (int j = 0; j < 5; ++j) weakest_signal = std::min(weakest_signal, rep.variables[static_cast<std::size_t>(j)].proportion);
  for (int j = 5; j < 10; ++j) strongest_noise = std::max(strongest_noise, rep.variables[static_cast<std::size_t>(j)].proportion);
  CHECK(weakest_signal > strongest_noise);
}

TEST_CASE("a single replicate reports no intervals") {
  const auto d = friedman1(80, 4);
  const auto rep = inclusion_proportions(as_table(d.X, d.y), small_bart(), 1);
  CHECK(!rep.has_intervals);
  for (const auto& v : rep.variables) {
    CHECK(std::isnan(v.lower));
    CHECK(!v.significant);
  }
  CHECK(importance_markdown(rep).find("no intervals") != std::string::npos);
  CHECK_THROWS_AS(inclusion_proportions(as_table(d.X, d.y), small_bart(), 0), InvalidArgument);
}

TEST_CASE("columns fall into report categories by tag and prefix") {
  using dataset::Tag;
  CHECK(category_of({"staff_pick", Tag::baseline}) == "Baseline");
  CHECK(category_of({"n_videos", Tag::visual_count}) == "Visual: Count");
  CHECK(category_of({"blurb_best", Tag::text}) == "Text-Blurb");
  CHECK(category_of({"text_anger_anger", Tag::text}) == "Text-Description");
  CHECK(category_of({"color_brightness", Tag::image_detail}) == "Visual: Color");
  CHECK(category_of({"comp_rule_of_thirds", Tag::image_detail}) == "Visual: Composition");
  CHECK(category_of({"fg_size_difference", Tag::image_detail}) == "Visual: Figure-Ground");
  CHECK(category_of({"scene_n_faces", Tag::image_detail}) == "Visual: Scene");
  CHECK(category_of({"backers", Tag::untagged}) == "Other");
}

TEST_CASE("category summaries average their members") {
  const auto d = friedman1(150, 5, 1.0, 5);
  auto t = as_table(d.X, d.y);
  t.columns[0].name = "color_a";
  t.columns[1].name = "color_b";
  t.columns[2].name = "comp_a";
  t.columns[3].name = "fg_a";
  t.columns[4].name = "scene_a";
  const auto rep = inclusion_proportions(t, small_bart(), 3);
  double total = 0;
  for (const auto& c : rep.categories) {
    total += c.mean_proportion * c.n_variables;
    CHECK(c.fraction_significant >= 0.0);
    CHECK(c.fraction_significant <= 1.0);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < rep.categories.size(); ++i)
    CHECK(rep.categories[i - 1].mean_proportion >= rep.categories[i].mean_proportion);
  const auto color = std::find_if(rep.categories.begin(), rep.categories.end(),
                                  [](const auto& c) { return c.category == "Visual: Color"; });
  REQUIRE(color != rep.categories.end());
  CHECK(color->n_variables == 2);
  CHECK(color->mean_proportion == doctest::Approx((rep.variables[0].proportion + rep.variables[1].proportion) / 2));
  CHECK(category_csv(rep).rfind("category,n_variables,mean_proportion,fraction_significant\n", 0) == 0);
  const std::string csv = importance_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("pseudo-R2 reference points") {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(6, 1, 6);
  CHECK(pseudo_r2(y, y) == 1.0);
  CHECK(pseudo_r2(y, Eigen::VectorXd::Constant(6, y.mean())) == doctest::Approx(0.0));
  CHECK(pseudo_r2(y, y.reverse()) < 0.0);
  CHECK_THROWS_AS(pseudo_r2(Eigen::VectorXd::Constant(4, 2.0), Eigen::VectorXd::Zero(4)), InvalidArgument);
}

TEST_CASE("pseudo-R2 agrees with the RMSE from evaluate") {
  const auto d = friedman1(120, 6);
  const auto table = as_table(d.X, d.y);
  models::TrainConfig cfg;
  cfg.folds = 4;
  const auto out = models::train(table, Learner::ridge, cfg);
  const auto rep = models::evaluate(out.model, table, models::Scope::in_sample);
  const double sst = (d.y.array() - d.y.mean()).square().sum();
  CHECK(pseudo_r2(out.model, table) == doctest::Approx(1.0 - rep.rmse * rep.rmse * 120 / sst).epsilon(1e-12));
}

TEST_CASE("null test: removing the only signal column lowers fit") {
  const auto [tr, te] = one_signal(21, 200, 200);
  const auto r = null_importance_test(tr, te, {"x1"}, null_config(100, true));
  CHECK(r.fraction >= 0.95);
  CHECK(r.full_r2.size() == 100);
}

TEST_CASE("null test: removing noise columns is a coin flip") {
  const auto [tr, te] = one_signal(22, 200, 200);
  const auto r = null_importance_test(tr, te, {"x2", "x3"}, null_config(100, true));
  CHECK(r.fraction >= 0.2);
  CHECK(r.fraction <= 0.8);
}

TEST_CASE("null test contract") {
  const auto [tr, te] = one_signal(23, 60, 40);
  const auto one = null_importance_test(tr, te, {"x2"}, null_config(1));
  CHECK((one.fraction == 0.0 || one.fraction == 1.0));
  const auto a = null_importance_test(tr, te, {"x2"}, null_config(4));
  const auto b = null_importance_test(tr, te, {"x2"}, null_config(4));
  CHECK(a.full_r2 == b.full_r2);
  CHECK(a.reduced_r2 == b.reduced_r2);
  CHECK(null_test_csv(a).rfind("resample,full_r2,reduced_r2,reduced_lower\n", 0) == 0);
  CHECK_THROWS_AS(null_importance_test(tr, te, {"x1", "x2", "x3"}, null_config(1)), InvalidArgument);
  CHECK_THROWS_AS(null_importance_test(tr, te, {}, null_config(1)), InvalidArgument);
  CHECK_THROWS_AS(null_importance_test(tr, te, {"nope"}, null_config(1)), InvalidArgument);
  auto raw = null_config(2);
  raw.collapse_duplicates = false;
  CHECK(null_importance_test(tr, te, {"x2"}, raw).full_r2 != a.full_r2);
  auto drop = null_config(4);
  drop.mode = NullMode::drop;
  const auto d = null_importance_test(tr, te, {"x2"}, drop);
  CHECK(d.full_r2 == a.full_r2);  // same bootstrap rows and seeds, only the reduced fit differs
  CHECK(d.reduced_r2 != a.reduced_r2);
}

TEST_CASE("quintile grids and observed support") {
  const Eigen::VectorXd cont = Eigen::VectorXd::LinSpaced(101, 0.0, 1.0);
  bool support = true;
  const auto g = pdp_grid(cont, &support);
  CHECK(!support);
  REQUIRE(g.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(0.1 + 0.2 * static_cast<double>(i)));
  Eigen::VectorXd videos(8);
  videos << 0, 1, 0, 2, 1, 0, NAN, 2;
  CHECK(pdp_grid(videos, &support) == std::vector<double>{0, 1, 2});
  CHECK(support);
  CHECK(pdp_grid(Eigen::VectorXd::Constant(5, 3.5)).size() == 1);
}

TEST_CASE("partial dependence of a constant model is flat") {
  const auto d = friedman1(60, 7);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(60, 2.0);
  const auto table = as_table(d.X, y);
  models::TrainConfig cfg;
  cfg.gbt_grid = {models::GbtParams{.n_rounds = 10}};
  const auto out = models::train(table, Learner::gbt, cfg);
  const auto c = partial_dependence(out.model, out.train_input, "x1");
  for (double e : c.effect) CHECK(std::abs(e - 2.0) < 1e-12);
}

TEST_CASE("partial dependence of an unused variable is exactly flat") {
  models::TrainedModel m;
  m.learner = Learner::gbt;
  m.columns = {"x1", "x2"};
  models::TreeEnsemble e;
  e.n_features = 2;
  e.base_score = 1.0;
  models::RegressionTree t;
  t.nodes = {{0, 0.5, true, 1, 2, 0.0}, {-1, 0, true, -1, -1, -1.0}, {-1, 0, true, -1, -1, 2.5}};
  e.trees = {t, t};
  m.ensemble = e;
  const auto d = friedman1(50, 8, 1.0, 5);
  const auto inputs = as_table(d.X.leftCols(2), d.y);
  const auto c = partial_dependence(m, inputs, "x2");
  REQUIRE(c.effect.size() == 5);
  for (double v : c.effect) CHECK(v == c.effect[0]);
  const auto c1 = partial_dependence(m, inputs, "x1");
  CHECK(c1.effect.front() < c1.effect.back());
  CHECK_THROWS_AS(partial_dependence(m, inputs, "x9"), InvalidArgument);
}

TEST_CASE("partial dependence recovers an additive component") {
  Rng rng(9);
  const int n = 400;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  auto g1 = [](double x) { return 4 * (x - 0.3) * (x - 0.3); };
  auto g2 = [](double x) { return std::sin(3 * x); };
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    y(i) = g1(X(i, 0)) + g2(X(i, 1)) + 0.1 * rng.normal();
  }
  const auto table = as_table(X, y);
  models::TrainConfig cfg;
  cfg.bart_grid = {small_bart(2)};
  cfg.bart_grid[0].n_post = 100;
  const auto out = models::train(table, Learner::bart, cfg);
  const auto c = partial_dependence(out.model, out.train_input, "x1");
  REQUIRE(c.grid.size() == 5);
  std::vector<double> truth;
  for (double g : c.grid) truth.push_back(g1(g));
  CHECK(correlation(c.effect, truth) >= 0.95);
  REQUIRE(c.lower.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(c.lower[i] <= c.upper[i]);
  const std::string csv = pdp_csv({c});
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(pdp_markdown({c}).find("### x1") != std::string::npos);
}
