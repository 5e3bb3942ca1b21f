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
#include <exception>
#include <numeric>

#include "crowdvis/error.hpp"
#include "crowdvis/models.hpp"
#include "crowdvis/random.hpp"
#include "json.hpp"

namespace crowdvis::models {
namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  // splitmix64 finalizer over the combined inputs
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MatrixXd rows_of(const MatrixXd& X, const std::vector<std::size_t>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

VectorXd rows_of(const VectorXd& y, const std::vector<std::size_t>& rows) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double mse(const VectorXd& y, const VectorXd& yhat) { return (y - yhat).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, y.size())); }

}  // namespace

// --- cross-validation -------------------------------------------------------------

std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw InvalidArgument("cannot split " + std::to_string(n) + " rows into " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  return fold;
}

CvResult cross_validate(std::size_t n, std::size_t grid_size, const std::vector<double>& strength, int folds,
                        std::uint64_t seed,
                        const std::function<double(std::size_t, const std::vector<std::size_t>&,
                                                   const std::vector<std::size_t>&, double&)>& fit_score) {
  if (grid_size == 0) throw InvalidArgument("cross-validation grid is empty");
  if (strength.size() != grid_size) throw InvalidArgument("one regularization strength per grid point required");
  const auto fold = fold_assignment(n, folds, seed);
  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(folds)), valid(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < folds; ++f) (fold[i] == f ? valid : train)[static_cast<std::size_t>(f)].push_back(i);
  }
  const auto tasks = static_cast<std::ptrdiff_t>(grid_size * static_cast<std::size_t>(folds));
  std::vector<double> score(static_cast<std::size_t>(tasks)), extra(static_cast<std::size_t>(tasks), 0.0);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(tasks));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < tasks; ++t) {
    const auto g = static_cast<std::size_t>(t) / static_cast<std::size_t>(folds);
    const auto f = static_cast<std::size_t>(t) % static_cast<std::size_t>(folds);
    try {
      score[static_cast<std::size_t>(t)] = fit_score(g, train[f], valid[f], extra[static_cast<std::size_t>(t)]);
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  CvResult out;
  for (std::size_t g = 0; g < grid_size; ++g) {
    std::vector<double> fs, ex;
    for (int f = 0; f < folds; ++f) {
      fs.push_back(score[g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)]);
      ex.push_back(extra[g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)]);
    }
    const double mean = std::accumulate(fs.begin(), fs.end(), 0.0) / folds;
    double ss = 0;
    for (double v : fs) ss += (v - mean) * (v - mean);
    out.mean_mse.push_back(mean);
    out.std_err.push_back(std::sqrt(ss / (folds - 1)) / std::sqrt(static_cast<double>(folds)));
    out.extra.push_back(std::move(ex));
  }
  for (std::size_t g = 1; g < grid_size; ++g)
    if (out.mean_mse[g] < out.mean_mse[out.best_min]) out.best_min = g;
  // one-standard-error rule; the 1e-12 slack keeps exact ties tied when every fold agrees
  const double cutoff = out.mean_mse[out.best_min] + out.std_err[out.best_min] +
                        1e-12 * std::abs(out.mean_mse[out.best_min]);
  out.best = out.best_min;
  for (std::size_t g = 0; g < grid_size; ++g) {
    if (out.mean_mse[g] > cutoff) continue;
    if (strength[g] > strength[out.best] || (strength[g] == strength[out.best] && g < out.best)) out.best = g;
  }
  return out;
}

// --- evaluation --------------------------------------------------------------------

EvalReport evaluate_predictions(const VectorXd& y, const VectorXd& yhat, Scope scope, int variable_set) {
  if (y.size() != yhat.size() || y.size() == 0) throw InvalidArgument("evaluation needs equal, nonzero lengths");
  if (yhat.hasNaN()) throw NumericalError("predictions contain NaN");
  EvalReport r;
  r.scope = scope;
  r.variable_set = variable_set;
  const VectorXd e = y - yhat;
  r.rmse = std::sqrt(e.squaredNorm() / static_cast<double>(e.size()));
  r.mae = e.cwiseAbs().mean();
  return r;
}

std::string learner_name(Learner l) {
  switch (l) {
    case Learner::ridge: return "ridge";
    case Learner::lasso: return "lasso";
    case Learner::gbt: return "gbt";
    case Learner::bart: return "bart";
  }
  return "ridge";
}

Learner parse_learner(const std::string& name) {
  for (Learner l : {Learner::ridge, Learner::lasso, Learner::gbt, Learner::bart})
    if (learner_name(l) == name) return l;
  throw InvalidArgument("unknown model '" + name + "' (expected ridge, lasso, gbt or bart)");
}

// --- trained model -----------------------------------------------------------------

VectorXd TrainedModel::predict(const MatrixXd& X) const {
  if (static_cast<std::size_t>(X.cols()) != columns.size()) {
    throw InvalidArgument("model expects " + std::to_string(columns.size()) + " input columns");
  }
  if (requires_complete_input && X.hasNaN()) throw InvalidArgument("model needs complete input; impute first");
  if (linear) return linear->predict(standardize_apply(scaling, X));
  if (ensemble) return ensemble->predict(X);
  throw InvalidArgument("model has no fitted component");
}

VectorXd TrainedModel::predict(const dataset::FeatureTable& table) const {
  return predict(table.select_columns(columns).values);
}

dataset::FeatureTable prepare_input(const TrainedModel& model, const dataset::FeatureTable& table,
                                    const dataset::FeatureTable& train_input, int knn_k) {
  auto t = table.select_columns(model.columns);
  if (model.requires_complete_input && t.has_missing()) {
    t = dataset::impute_missing(t, train_input.select_columns(model.columns), knn_k);
  }
  return t;
}

EvalReport evaluate(const TrainedModel& model, const dataset::FeatureTable& table, Scope scope, int variable_set) {
  return evaluate_predictions(table.outcome, model.predict(table), scope, variable_set);
}

TrainOutcome train(const dataset::FeatureTable& train_table, Learner learner, const TrainConfig& cfg) {
  train_table.validate();
  TrainOutcome out;
  TrainedModel& m = out.model;
  m.learner = learner;
  m.columns = train_table.column_names();
  const bool impute = learner == Learner::ridge || learner == Learner::lasso || (learner == Learner::gbt && cfg.gbt_impute);
  m.requires_complete_input = impute;
  out.train_input = impute && train_table.has_missing() ? dataset::impute_missing(train_table, cfg.knn_k) : train_table;
  const MatrixXd& X = out.train_input.values;
  const VectorXd& y = out.train_input.outcome;
  const std::size_t n = out.train_input.rows();

  if (learner == Learner::ridge || learner == Learner::lasso) {
    m.scaling = standardize_fit(X, m.columns);
    const MatrixXd Xs = standardize_apply(m.scaling, X);
    std::vector<double> grid;
    if (learner == Learner::ridge) {
      grid = log_grid(cfg.ridge_lambda_min, cfg.ridge_lambda_max, cfg.ridge_grid_points);
    } else {
      const double lmax = lasso_lambda_max(Xs, y);
      grid = lmax > 0 ? log_grid(lmax * cfg.lasso_min_ratio, lmax, cfg.lasso_grid_points) : std::vector<double>{0.0};
    }
    out.cv = cross_validate(n, grid.size(), grid, cfg.folds, cfg.seed,
                            [&](std::size_t g, const auto& tr, const auto& va, double&) {
                              const MatrixXd Xt = rows_of(Xs, tr), Xv = rows_of(Xs, va);
                              const VectorXd yt = rows_of(y, tr), yv = rows_of(y, va);
                              const auto fit = learner == Learner::ridge ? fit_ridge(Xt, yt, grid[g]) : fit_lasso(Xt, yt, grid[g]);
                              return mse(yv, fit.predict(Xv));
                            });
    const double lambda = grid[out.cv.best];
    m.linear = learner == Learner::ridge ? fit_ridge(Xs, y, lambda) : fit_lasso(Xs, y, lambda);
    m.hyperparameters["lambda"] = lambda;
    return out;
  }

  if (learner == Learner::gbt) {
    const auto& grid = cfg.gbt_grid;
    std::vector<double> strength;
    for (const auto& p : grid) strength.push_back(-10.0 * p.max_depth - p.eta - p.subsample - p.colsample_bytree);
    if (grid.size() == 1 && grid[0].early_stopping_rounds == 0) {
      out.cv.mean_mse = {NAN};
      out.cv.std_err = {NAN};
    } else {
      out.cv = cross_validate(n, grid.size(), strength, cfg.folds, cfg.seed,
                              [&](std::size_t g, const auto& tr, const auto& va, double& rounds) {
                                GbtParams p = grid[g];
                                p.seed = derive_seed(grid[g].seed, g, va.front());
                                const MatrixXd Xt = rows_of(X, tr), Xv = rows_of(X, va);
                                const VectorXd yt = rows_of(y, tr), yv = rows_of(y, va);
                                const auto ens = p.early_stopping_rounds > 0 ? fit_gbt(Xt, yt, p, &Xv, &yv) : fit_gbt(Xt, yt, p);
                                rounds = ens.best_iteration;
                                return mse(yv, ens.predict(Xv));
                              });
    }
    GbtParams best = grid[out.cv.best];
    if (best.early_stopping_rounds > 0) {
      const auto& r = out.cv.extra[out.cv.best];
      best.n_rounds = std::max(1, static_cast<int>(std::lround(std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size()))));
      best.early_stopping_rounds = 0;
    }
    best.seed = derive_seed(best.seed, 0xF17A1);
    m.ensemble = fit_gbt(X, y, best);
    m.hyperparameters = {{"eta", best.eta},
                         {"max_depth", best.max_depth},
                         {"subsample", best.subsample},
                         {"colsample_bytree", best.colsample_bytree},
                         {"n_rounds", best.n_rounds},
                         {"gamma", best.gamma},
                         {"lambda", best.lambda}};
    return out;
  }

  const auto& grid = cfg.bart_grid;
  std::vector<double> strength;
  for (const auto& p : grid) strength.push_back(1000.0 * p.k - p.m);
  if (grid.size() == 1) {
    out.cv.best = 0;
    out.cv.mean_mse = {NAN};
    out.cv.std_err = {NAN};
  } else {
    out.cv = cross_validate(n, grid.size(), strength, cfg.folds, cfg.seed,
                            [&](std::size_t g, const auto& tr, const auto& va, double&) {
                              BartParams p = grid[g];
                              p.seed = derive_seed(grid[g].seed, g, va.front());
                              const auto ens = fit_bart(rows_of(X, tr), rows_of(y, tr), p);
                              return mse(rows_of(y, va), ens.predict(rows_of(X, va)));
                            });
  }
  const BartParams best = grid[out.cv.best];
  m.ensemble = fit_bart(X, y, best);
  m.hyperparameters = {{"m", best.m},         {"k", best.k},           {"nu", best.nu},
                       {"q", best.q},         {"alpha", best.alpha},   {"beta", best.beta},
                       {"n_burn", best.n_burn}, {"n_post", best.n_post}};
  return out;
}

// --- JSON ---------------------------------------------------------------------------

namespace {

json tree_json(const RegressionTree& t, int i = 0) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return json{{"value", n.value}};
  return json{{"feature", n.feature},
              {"threshold", n.threshold},
              {"missing_left", n.missing_left},
              {"left", tree_json(t, n.left)},
              {"right", tree_json(t, n.right)}};
}

void tree_from_json(const json& j, RegressionTree& t, int slot) {
  if (j.contains("value")) {
    t.nodes[static_cast<std::size_t>(slot)].value = j.at("value").get<double>();
    return;
  }
  const int l = static_cast<int>(t.nodes.size());
  t.nodes.push_back({});
  t.nodes.push_back({});
  auto& n = t.nodes[static_cast<std::size_t>(slot)];
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.missing_left = j.at("missing_left").get<bool>();
  n.left = l;
  n.right = l + 1;
  tree_from_json(j.at("left"), t, l);
  tree_from_json(j.at("right"), t, l + 1);
}

RegressionTree tree_from_json(const json& j) {
  RegressionTree t;
  tree_from_json(j, t, 0);
  return t;
}

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_json(const TrainedModel& m) {
  json j;
  j["format"] = "crowdvis-model";
  j["version"] = 1;
  j["learner"] = learner_name(m.learner);
  j["columns"] = m.columns;
  j["requires_complete_input"] = m.requires_complete_input;
  j["hyperparameters"] = m.hyperparameters;
  if (m.linear) {
    std::vector<std::string> kept_names;
    for (auto k : m.scaling.kept) kept_names.push_back(m.scaling.input_columns[k]);
    j["standardization"] = {{"columns", m.scaling.input_columns},
                            {"kept", m.scaling.kept},
                            {"mean", to_vec(m.scaling.mean)},
                            {"sd", to_vec(m.scaling.sd)},
                            {"dropped", m.scaling.dropped}};
    json coef = json::object();
    for (std::size_t k = 0; k < kept_names.size(); ++k) coef[kept_names[k]] = m.linear->beta(static_cast<Eigen::Index>(k));
    j["linear"] = {{"kind", m.linear->kind == LinearKind::ridge ? "ridge" : "lasso"},
                   {"lambda", m.linear->lambda},
                   {"intercept", m.linear->intercept},
                   {"coefficients", coef}};
  }
  if (m.ensemble) {
    const auto& e = *m.ensemble;
    json ej;
    ej["kind"] = e.kind == EnsembleKind::gbt ? "gbt" : "bart";
    ej["n_features"] = e.n_features;
    if (e.kind == EnsembleKind::gbt) {
      ej["base_score"] = e.base_score;
      ej["eta"] = e.eta;
      ej["best_iteration"] = e.best_iteration;
      ej["train_rmse"] = e.train_rmse;
      ej["trees"] = json::array();
      for (const auto& t : e.trees) ej["trees"].push_back(tree_json(t));
    } else {
      ej["y_min"] = e.y_min;
      ej["y_scale"] = e.y_scale;
      ej["sigma"] = e.sigma;
      ej["draws"] = json::array();
      for (const auto& d : e.draws) {
        json dj = json::array();
        for (const auto& t : d) dj.push_back(tree_json(t));
        ej["draws"].push_back(std::move(dj));
      }
    }
    j["ensemble"] = std::move(ej);
  }
  return j.dump();
}

TrainedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed model JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "crowdvis-model") throw ParseError("not a crowdvis model file");
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported model version " + j.at("version").dump());
    TrainedModel m;
    m.learner = parse_learner(j.at("learner").get<std::string>());
    m.columns = j.at("columns").get<std::vector<std::string>>();
    m.requires_complete_input = j.at("requires_complete_input").get<bool>();
    m.hyperparameters = j.at("hyperparameters").get<std::map<std::string, double>>();
    if (j.contains("linear")) {
      const auto& s = j.at("standardization");
      m.scaling.input_columns = s.at("columns").get<std::vector<std::string>>();
      m.scaling.kept = s.at("kept").get<std::vector<std::size_t>>();
      m.scaling.mean = to_eigen(s.at("mean").get<std::vector<double>>());
      m.scaling.sd = to_eigen(s.at("sd").get<std::vector<double>>());
      m.scaling.dropped = s.at("dropped").get<std::vector<std::string>>();
      const auto& l = j.at("linear");
      LinearModel lm;
      lm.kind = l.at("kind") == "ridge" ? LinearKind::ridge : LinearKind::lasso;
      lm.lambda = l.at("lambda").get<double>();
      lm.intercept = l.at("intercept").get<double>();
      lm.beta.resize(static_cast<Eigen::Index>(m.scaling.kept.size()));
      for (std::size_t k = 0; k < m.scaling.kept.size(); ++k) {
        lm.beta(static_cast<Eigen::Index>(k)) = l.at("coefficients").at(m.scaling.input_columns.at(m.scaling.kept[k])).get<double>();
      }
      m.linear = std::move(lm);
    }
    if (j.contains("ensemble")) {
      const auto& ej = j.at("ensemble");
      TreeEnsemble e;
      e.kind = ej.at("kind") == "gbt" ? EnsembleKind::gbt : EnsembleKind::bart;
      e.n_features = ej.at("n_features").get<int>();
      if (e.kind == EnsembleKind::gbt) {
        e.base_score = ej.at("base_score").get<double>();
        e.eta = ej.at("eta").get<double>();
        e.best_iteration = ej.at("best_iteration").get<int>();
        e.train_rmse = ej.at("train_rmse").get<std::vector<double>>();
        for (const auto& t : ej.at("trees")) e.trees.push_back(tree_from_json(t));
      } else {
        e.y_min = ej.at("y_min").get<double>();
        e.y_scale = ej.at("y_scale").get<double>();
        e.sigma = ej.at("sigma").get<std::vector<double>>();
        for (const auto& d : ej.at("draws")) {
          std::vector<RegressionTree> draw;
          for (const auto& t : d) draw.push_back(tree_from_json(t));
          e.draws.push_back(std::move(draw));
        }
      }
      m.ensemble = std::move(e);
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace crowdvis::models
