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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crowdvis/dataset.hpp"
#include "crowdvis/models.hpp"

namespace crowdvis::interpret {

// --- inclusion proportions -----------------------------------------------------------

/// Share of split nodes using each feature, over every tree of every retained
/// draw. Sums to 1 unless all trees are single leaves (then all zero).
std::vector<double> split_shares(const models::TreeEnsemble& bart);

/// Report group of a column: tag first, then name prefix within the image and
/// text tags (color_, comp_, fg_, scene_; blurb_).
std::string category_of(const dataset::Column& column);

struct VariableImportance {
  std::string variable;
  std::string category;
  double proportion = 0.0;  // mean over replicates
  double lower = 0.0;       // mean -/+ 1.96 sd; NaN without intervals
  double upper = 0.0;
  bool significant = false;  // lower > 0
};

struct CategoryImportance {
  std::string category;
  int n_variables = 0;
  double mean_proportion = 0.0;
  double fraction_significant = 0.0;
};

struct ImportanceReport {
  std::vector<VariableImportance> variables;  // table column order
  std::vector<CategoryImportance> categories;  // by mean proportion, descending
  int replicates = 0;
  bool has_intervals = false;  // false with fewer than 2 replicates
};

/// Refits BART `n_replicates` times with seeds params.seed, params.seed + 1, ...
/// on the same rows.
ImportanceReport inclusion_proportions(const dataset::FeatureTable& train, const models::BartParams& params,
                                       int n_replicates = 10,
                                       const std::function<std::string(const dataset::Column&)>& categorize = category_of);

// --- fit comparisons --------------------------------------------------------------

/// 1 - SSE/SST around the mean of `y`. Throws InvalidArgument when y is constant.
double pseudo_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
double pseudo_r2(const models::TrainedModel& model, const dataset::FeatureTable& table);

/// How the reduced model loses the subset. `permute` shuffles the subset's
/// rows jointly (same columns, no information); `drop` removes the columns.
enum class NullMode { permute, drop };

struct NullTestConfig {
  int n_resamples = 100;
  NullMode mode = NullMode::permute;
  models::Learner learner = models::Learner::bart;
  models::TrainConfig train;  // grids, folds and kNN settings for every refit
  std::uint64_t seed = 0;
  // A row drawn more than once enters the fit once. Exact copies share their
  // outcome, which a model with an estimated noise level (BART) reads as
  // near-zero noise and then overfits.
  bool collapse_duplicates = true;
};

struct NullTestResult {
  double fraction = 0.0;  // share of resamples whose reduced model scores lower
  std::vector<double> full_r2;
  std::vector<double> reduced_r2;
};

/// Per resample: bootstrap the training rows, fit once as is and once with
/// `subset` neutralized per `mode`, score both on `test`. Fits of one resample
/// share a seed.
NullTestResult null_importance_test(const dataset::FeatureTable& train, const dataset::FeatureTable& test,
                                    const std::vector<std::string>& subset, const NullTestConfig& config = {});

// --- partial dependence -------------------------------------------------------------

struct PdpCurve {
  std::string variable;
  std::vector<double> grid;    // strictly increasing
  std::vector<double> effect;  // mean prediction per grid value
  std::vector<double> lower;   // 2.5% posterior quantile per grid value, BART only
  std::vector<double> upper;   // 97.5%
  bool observed_support = false;  // integer-valued variable, grid = its distinct values
  bool degenerate = false;        // constant variable, single grid point
};

inline constexpr int kMaxSupportGrid = 10;

/// Integer-valued columns with at most kMaxSupportGrid distinct values use those
/// values; otherwise the 10/30/50/70/90th percentiles (one point per quintile),
/// with repeated values merged.
std::vector<double> pdp_grid(const Eigen::VectorXd& values, bool* observed_support = nullptr);

/// `train_input` is the table the model was fitted on (imputed when the model
/// needs complete input).
PdpCurve partial_dependence(const models::TrainedModel& model, const dataset::FeatureTable& train_input,
                            const std::string& variable);

// --- reports -----------------------------------------------------------------------

std::string importance_csv(const ImportanceReport& report);
std::string category_csv(const ImportanceReport& report);
/// Category table plus the `top` variables by proportion.
std::string importance_markdown(const ImportanceReport& report, std::size_t top = 40);
std::string pdp_csv(const std::vector<PdpCurve>& curves);
std::string pdp_markdown(const std::vector<PdpCurve>& curves);
std::string null_test_csv(const NullTestResult& result);

}  // namespace crowdvis::interpret
