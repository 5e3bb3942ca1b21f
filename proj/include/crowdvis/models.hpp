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

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdvis/dataset.hpp"

namespace crowdvis::models {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- standardization -------------------------------------------------------------

/// Train-set column scaling. Zero-variance columns are dropped.
struct Standardization {
  std::vector<std::string> input_columns;  // all columns seen at fit time
  std::vector<std::size_t> kept;           // indices into input_columns
  VectorXd mean;                           // per kept column
  VectorXd sd;                             // per kept column, > 0
  std::vector<std::string> dropped;
};

/// Missing cells (NaN) are ignored in the moments and stay NaN on apply.
Standardization standardize_fit(const MatrixXd& X, const std::vector<std::string>& names);
MatrixXd standardize_apply(const Standardization& s, const MatrixXd& X);

// --- linear models ------------------------------------------------------------------

enum class LinearKind { ridge, lasso };

struct LinearModel {
  LinearKind kind = LinearKind::ridge;
  double lambda = 0.0;
  double intercept = 0.0;
  VectorXd beta;
  VectorXd predict(const MatrixXd& X) const;
};

/// Minimizes sum (y - yhat)^2 + lambda * |beta|^2 with an unpenalized
/// intercept. Throws NumericalError when lambda = 0 and the centered design is
/// rank deficient.
LinearModel fit_ridge(const MatrixXd& X, const VectorXd& y, double lambda);

struct LassoOptions {
  double tolerance = 1e-7;  // max coefficient change per sweep
  int max_sweeps = 100000;
};

/// Minimizes (1/2n) sum (y - yhat)^2 + lambda * |beta|_1 by cyclic
/// coordinate descent. Throws NumericalError when it does not converge.
LinearModel fit_lasso(const MatrixXd& X, const VectorXd& y, double lambda, const LassoOptions& opt = {});
/// Smallest lambda at which every lasso coefficient is zero: max |Xc' yc| / n.
double lasso_lambda_max(const MatrixXd& X, const VectorXd& y);

/// `count` log-spaced points from lo to hi inclusive, ascending.
std::vector<double> log_grid(double lo, double hi, int count);

// --- trees ------------------------------------------------------------------------

/// `x < threshold` goes left; a missing value follows `missing_left`.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool missing_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
  bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes{TreeNode{}};  // root at index 0
  double predict(const double* row, std::ptrdiff_t stride) const;
  double predict(const VectorXd& row) const { return predict(row.data(), 1); }
  int leaf_count() const;
  int depth() const;
};

enum class EnsembleKind { gbt, bart };

struct TreeEnsemble {
  EnsembleKind kind = EnsembleKind::gbt;
  int n_features = 0;
  // gbt: base + eta * sum of tree outputs
  double base_score = 0.0;
  double eta = 1.0;
  std::vector<RegressionTree> trees;
  int best_iteration = 0;  // rounds kept after early stopping
  std::vector<double> train_rmse;  // per round
  std::vector<double> valid_rmse;  // per round when a validation set was given
  // bart: posterior draws of the sum of trees on the internal scale, mapped
  // back by y = (f + 0.5) * y_scale + y_min
  std::vector<std::vector<RegressionTree>> draws;
  std::vector<double> sigma;  // residual sd per retained draw, outcome units
  double y_min = 0.0;
  double y_scale = 1.0;

  VectorXd predict(const MatrixXd& X) const;
  /// bart only: one column per retained draw, outcome units.
  MatrixXd predict_draws(const MatrixXd& X) const;
};

struct GbtParams {
  double eta = 0.3;
  int max_depth = 6;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  int n_rounds = 100;
  int early_stopping_rounds = 0;  // 0 disables
  double gamma = 0.0;             // per-leaf penalty
  double lambda = 1.0;            // L2 penalty on leaf weights
  std::uint64_t seed = 0;
};

/// Squared-error gradient boosting with exact greedy splits. Missing values
/// take the direction with larger gain at each split.
TreeEnsemble fit_gbt(const MatrixXd& X, const VectorXd& y, const GbtParams& params,
                     const MatrixXd* X_valid = nullptr, const VectorXd* y_valid = nullptr);

struct BartParams {
  int m = 200;
  double k = 2.0;
  double nu = 3.0;
  double q = 0.9;
  double alpha = 0.95;
  double beta = 2.0;
  int n_burn = 250;
  int n_post = 1000;
  std::uint64_t seed = 0;
};

/// Sum-of-trees MCMC (grow/prune/change Metropolis-Hastings per tree, conjugate
/// leaf and variance draws). Missing values follow a per-node flag drawn with
/// each proposed rule.
TreeEnsemble fit_bart(const MatrixXd& X, const VectorXd& y, const BartParams& params);

// --- cross-validation -------------------------------------------------------------

/// Fold id (0..folds-1) per row; sizes differ by at most one.
std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed);

struct CvResult {
  std::size_t best = 0;      // selected point
  std::size_t best_min = 0;  // plain argmin of mean_mse
  std::vector<double> mean_mse;  // per grid point
  std::vector<double> std_err;   // per grid point, sd of fold MSEs / sqrt(folds)
  std::vector<std::vector<double>> extra;  // per grid point, per fold learner-specific value
};

/// `fit_score(grid_index, train_rows, valid_rows, extra_out)` returns the
/// validation MSE of one fold. Points whose mean MSE is within one standard
/// error of the minimum count as tied; among those the higher `strength`
/// (more regularization) wins, then the lower index. Folds and grid points run in
/// parallel; results do not depend on scheduling.
CvResult cross_validate(std::size_t n, std::size_t grid_size, const std::vector<double>& strength, int folds,
                        std::uint64_t seed,
                        const std::function<double(std::size_t, const std::vector<std::size_t>&,
                                                   const std::vector<std::size_t>&, double&)>& fit_score);

// --- evaluation --------------------------------------------------------------------

enum class Scope { in_sample, out_of_sample };

struct EvalReport {
  double rmse = 0.0;
  double mae = 0.0;
  Scope scope = Scope::out_of_sample;
  int variable_set = 0;
};

EvalReport evaluate_predictions(const VectorXd& y, const VectorXd& yhat, Scope scope, int variable_set = 0);

// --- trained models and the training protocol ---------------------------------------

enum class Learner { ridge, lasso, gbt, bart };
std::string learner_name(Learner l);
Learner parse_learner(const std::string& name);

struct TrainedModel {
  Learner learner = Learner::ridge;
  std::vector<std::string> columns;      // expected input columns, in order
  bool requires_complete_input = false;  // linear models and imputed GBT
  Standardization scaling;               // linear models only
  std::optional<LinearModel> linear;
  std::optional<TreeEnsemble> ensemble;
  std::map<std::string, double> hyperparameters;

  /// X columns follow `columns`.
  VectorXd predict(const MatrixXd& X) const;
  VectorXd predict(const dataset::FeatureTable& table) const;
};

struct TrainConfig {
  int folds = 10;
  std::uint64_t seed = 0;
  int knn_k = 5;
  int ridge_grid_points = 50;
  double ridge_lambda_min = 1e-4;
  double ridge_lambda_max = 1e4;
  int lasso_grid_points = 50;
  double lasso_min_ratio = 1e-4;
  std::vector<GbtParams> gbt_grid{GbtParams{}};
  bool gbt_impute = false;  // false: native missing-value routing
  std::vector<BartParams> bart_grid{BartParams{}};
};

struct TrainOutcome {
  TrainedModel model;
  CvResult cv;
  dataset::FeatureTable train_input;  // the table the final fit saw (imputed when required)
};

/// CV-selected fit on `train`. Linear models (and GBT with gbt_impute) see a
/// kNN-imputed copy.
TrainOutcome train(const dataset::FeatureTable& train, Learner learner, const TrainConfig& config);

/// Imputes against `train_input` when the model needs complete input.
dataset::FeatureTable prepare_input(const TrainedModel& model, const dataset::FeatureTable& table,
                                    const dataset::FeatureTable& train_input, int knn_k);

EvalReport evaluate(const TrainedModel& model, const dataset::FeatureTable& table, Scope scope, int variable_set = 0);

/// Versioned JSON; doubles round-trip exactly.
std::string to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);

}  // namespace crowdvis::models
