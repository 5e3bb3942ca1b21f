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

#include "crowdvis/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>

#include "crowdvis/error.hpp"
#include "crowdvis/random.hpp"

namespace crowdvis::interpret {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Linear-interpolation quantile of sorted data (type 7).
double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename Body>
void parallel_for(std::ptrdiff_t n, Body body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

std::string percent(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

}  // namespace

std::vector<double> split_shares(const models::TreeEnsemble& bart) {
  if (bart.kind != models::EnsembleKind::bart) throw InvalidArgument("split shares need a BART ensemble");
  std::vector<double> count(static_cast<std::size_t>(bart.n_features), 0.0);
  double total = 0;
  for (const auto& draw : bart.draws)
    for (const auto& tree : draw)
      for (const auto& node : tree.nodes)
        if (!node.is_leaf()) {
          count[static_cast<std::size_t>(node.feature)] += 1;
          total += 1;
        }
  if (total > 0)
    for (auto& c : count) c /= total;
  return count;
}

std::string category_of(const dataset::Column& c) {
  using dataset::Tag;
  switch (c.tag) {
    case Tag::baseline: return "Baseline";
    case Tag::visual_count: return "Visual: Count";
    case Tag::text: return starts_with(c.name, "blurb_") ? "Text-Blurb" : "Text-Description";
    case Tag::image_detail:
      if (starts_with(c.name, "color_")) return "Visual: Color";
      if (starts_with(c.name, "comp_")) return "Visual: Composition";
      if (starts_with(c.name, "fg_")) return "Visual: Figure-Ground";
      if (starts_with(c.name, "scene_")) return "Visual: Scene";
      return "Visual: Other";
    case Tag::untagged: break;
  }
  return "Other";
}

ImportanceReport inclusion_proportions(const dataset::FeatureTable& train, const models::BartParams& params,
                                       int n_replicates,
                                       const std::function<std::string(const dataset::Column&)>& categorize) {
  if (n_replicates < 1) throw InvalidArgument("inclusion proportions need at least one replicate");
  train.validate();
  const auto p = train.cols();
  std::vector<std::vector<double>> shares(static_cast<std::size_t>(n_replicates));
  parallel_for(n_replicates, [&](std::ptrdiff_t r) {
    models::BartParams rp = params;
    rp.seed = params.seed + static_cast<std::uint64_t>(r);
    shares[static_cast<std::size_t>(r)] = split_shares(models::fit_bart(train.values, train.outcome, rp));
  });

  ImportanceReport rep;
  rep.replicates = n_replicates;
  rep.has_intervals = n_replicates >= 2;
  std::map<std::string, std::vector<const VariableImportance*>> groups;
  for (std::size_t j = 0; j < p; ++j) {
    VariableImportance v;
    v.variable = train.columns[j].name;
    v.category = categorize(train.columns[j]);
    double sum = 0;
    for (const auto& s : shares) sum += s[j];
    v.proportion = sum / n_replicates;
    if (rep.has_intervals) {
      double ss = 0;
      for (const auto& s : shares) ss += (s[j] - v.proportion) * (s[j] - v.proportion);
      const double half = 1.96 * std::sqrt(ss / (n_replicates - 1));
      v.lower = v.proportion - half;
      v.upper = v.proportion + half;
      v.significant = v.lower > 0.0;
    } else {
      v.lower = v.upper = NAN;
    }
    rep.variables.push_back(std::move(v));
  }
  for (const auto& v : rep.variables) groups[v.category].push_back(&v);
  for (const auto& [name, members] : groups) {
    CategoryImportance c;
    c.category = name;
    c.n_variables = static_cast<int>(members.size());
    for (const auto* v : members) {
      c.mean_proportion += v->proportion / static_cast<double>(members.size());
      c.fraction_significant += (v->significant ? 1.0 : 0.0) / static_cast<double>(members.size());
    }
    rep.categories.push_back(c);
  }
  std::stable_sort(rep.categories.begin(), rep.categories.end(),
                   [](const auto& a, const auto& b) { return a.mean_proportion > b.mean_proportion; });
  return rep;
}

double pseudo_r2(const VectorXd& y, const VectorXd& yhat) {
  if (y.size() != yhat.size() || y.size() == 0) throw InvalidArgument("pseudo-R2 needs equal, nonzero lengths");
  const double sst = (y.array() - y.mean()).square().sum();
  if (!(sst > 0)) throw InvalidArgument("pseudo-R2 is undefined for a constant outcome");
  return 1.0 - (y - yhat).squaredNorm() / sst;
}

double pseudo_r2(const models::TrainedModel& model, const dataset::FeatureTable& table) {
  return pseudo_r2(table.outcome, model.predict(table));
}

NullTestResult null_importance_test(const dataset::FeatureTable& train, const dataset::FeatureTable& test,
                                    const std::vector<std::string>& subset, const NullTestConfig& config) {
  if (subset.empty()) throw InvalidArgument("null test needs a nonempty column subset");
  if (config.n_resamples < 1) throw InvalidArgument("null test needs at least one resample");
  const std::set<std::string> removed(subset.begin(), subset.end());
  for (const auto& name : removed)
    if (!train.column_index(name)) throw InvalidArgument("null test column '" + name + "' is not in the table");
  std::vector<std::string> kept;
  for (const auto& c : train.columns)
    if (!removed.count(c.name)) kept.push_back(c.name);
  if (kept.empty()) throw InvalidArgument("null test cannot remove every column");
  train.validate();
  test.validate();

  NullTestResult res;
  res.full_r2.resize(static_cast<std::size_t>(config.n_resamples));
  res.reduced_r2.resize(static_cast<std::size_t>(config.n_resamples));
  const auto n = train.rows();
  parallel_for(config.n_resamples, [&](std::ptrdiff_t r) {
    const std::uint64_t seed = mix(config.seed, static_cast<std::uint64_t>(r));
    Rng rng(seed);
    std::vector<std::size_t> rows(n);
    for (auto& i : rows) i = static_cast<std::size_t>(rng.below(n));
    if (config.collapse_duplicates) {
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    }
    auto boot = train.select_rows(rows);
    for (std::size_t k = 0; k < rows.size(); ++k) boot.ids[k] += "#" + std::to_string(k);  // ids stay unique

    models::TrainConfig cfg = config.train;
    cfg.seed = mix(seed, 1);
    for (auto& g : cfg.gbt_grid) g.seed = mix(seed, 2);
    for (auto& b : cfg.bart_grid) b.seed = mix(seed, 3);
    auto score = [&](const dataset::FeatureTable& t) {
      const auto out = models::train(t, config.learner, cfg);
      const auto input = models::prepare_input(out.model, test, out.train_input, cfg.knn_k);
      return pseudo_r2(test.outcome, out.model.predict(input));
    };
    res.full_r2[static_cast<std::size_t>(r)] = score(boot);
    if (config.mode == NullMode::drop) {
      res.reduced_r2[static_cast<std::size_t>(r)] = score(boot.select_columns(kept));
    } else {
      std::vector<std::size_t> perm(boot.rows());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      auto null = boot;
      for (const auto& name : removed) {
        const auto j = static_cast<Eigen::Index>(*boot.column_index(name));
        for (std::size_t i = 0; i < perm.size(); ++i)
          null.values(static_cast<Eigen::Index>(i), j) = boot.values(static_cast<Eigen::Index>(perm[i]), j);
      }
      res.reduced_r2[static_cast<std::size_t>(r)] = score(null);
    }
  });
  int lower = 0;
  for (int r = 0; r < config.n_resamples; ++r)
    lower += res.reduced_r2[static_cast<std::size_t>(r)] < res.full_r2[static_cast<std::size_t>(r)];
  res.fraction = static_cast<double>(lower) / config.n_resamples;
  return res;
}

std::vector<double> pdp_grid(const VectorXd& values, bool* observed_support) {
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) throw InvalidArgument("partial dependence needs at least one observed value");
  std::sort(v.begin(), v.end());
  const std::set<double> distinct(v.begin(), v.end());
  const bool integral = std::all_of(v.begin(), v.end(), [](double x) { return x == std::round(x); });
  const bool support = integral && distinct.size() <= static_cast<std::size_t>(kMaxSupportGrid);
  if (observed_support) *observed_support = support;
  if (support) return {distinct.begin(), distinct.end()};
  std::vector<double> grid;
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double q = quantile_sorted(v, p);
    if (grid.empty() || q > grid.back()) grid.push_back(q);
  }
  return grid;
}

PdpCurve partial_dependence(const models::TrainedModel& model, const dataset::FeatureTable& train_input,
                            const std::string& variable) {
  const auto it = std::find(model.columns.begin(), model.columns.end(), variable);
  if (it == model.columns.end()) throw InvalidArgument("variable '" + variable + "' is not a model input");
  const auto j = static_cast<Eigen::Index>(it - model.columns.begin());
  const MatrixXd X = train_input.select_columns(model.columns).values;

  PdpCurve c;
  c.variable = variable;
  c.grid = pdp_grid(X.col(j), &c.observed_support);
  c.degenerate = c.grid.size() == 1;
  const bool bart = model.ensemble && model.ensemble->kind == models::EnsembleKind::bart;
  for (double g : c.grid) {
    MatrixXd Xg = X;
    Xg.col(j).setConstant(g);
    if (bart) {
      const VectorXd per_draw = model.ensemble->predict_draws(Xg).colwise().mean().transpose();
      std::vector<double> d(per_draw.data(), per_draw.data() + per_draw.size());
      c.effect.push_back(per_draw.mean());
      std::sort(d.begin(), d.end());
      c.lower.push_back(quantile_sorted(d, 0.025));
      c.upper.push_back(quantile_sorted(d, 0.975));
    } else {
      c.effect.push_back(model.predict(Xg).mean());
    }
  }
  return c;
}

std::string importance_csv(const ImportanceReport& rep) {
  std::ostringstream out;
  out << "variable,category,proportion,lower,upper,significant\n";
  for (const auto& v : rep.variables) {
    out << dataset::csv_escape(v.variable) << ',' << dataset::csv_escape(v.category) << ','
        << dataset::format_number(v.proportion) << ',' << dataset::format_number(v.lower) << ','
        << dataset::format_number(v.upper) << ',' << (v.significant ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string category_csv(const ImportanceReport& rep) {
  std::ostringstream out;
  out << "category,n_variables,mean_proportion,fraction_significant\n";
  for (const auto& c : rep.categories) {
    out << dataset::csv_escape(c.category) << ',' << c.n_variables << ',' << dataset::format_number(c.mean_proportion)
        << ',' << dataset::format_number(c.fraction_significant) << '\n';
  }
  return out.str();
}

std::string importance_markdown(const ImportanceReport& rep, std::size_t top) {
  std::ostringstream out;
  out << "## Variable importance (share of tree splits)\n\n";
  out << "Replicates: " << rep.replicates;
  if (!rep.has_intervals) out << " (fewer than 2, so no intervals and no significance flags)";
  out << "\n\n| Category | Number of variables | Prop. inclusion | Fraction sig. |\n|---|---:|---:|---:|\n";
  for (const auto& c : rep.categories) {
    out << "| " << c.category << " | " << c.n_variables << " | " << percent(c.mean_proportion) << " | "
        << (rep.has_intervals ? percent(c.fraction_significant) : "n/a") << " |\n";
  }
  std::vector<const VariableImportance*> order;
  for (const auto& v : rep.variables) order.push_back(&v);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->proportion > b->proportion; });
  order.resize(std::min(top, order.size()));
  out << "\n### Top " << order.size() << " variables\n\n| Variable | Category | Proportion | 95% interval |\n|---|---|---:|---|\n";
  for (const auto* v : order) {
    out << "| " << v->variable << " | " << v->category << " | " << percent(v->proportion) << " | ";
    if (rep.has_intervals) {
      out << percent(v->lower) << " to " << percent(v->upper) << (v->significant ? " *" : "");
    } else {
      out << "n/a";
    }
    out << " |\n";
  }
  return out.str();
}

std::string pdp_csv(const std::vector<PdpCurve>& curves) {
  std::ostringstream out;
  out << "variable,grid,effect,lower,upper\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      out << dataset::csv_escape(c.variable) << ',' << dataset::format_number(c.grid[i]) << ','
          << dataset::format_number(c.effect[i]) << ',' << (c.lower.empty() ? "" : dataset::format_number(c.lower[i]))
          << ',' << (c.upper.empty() ? "" : dataset::format_number(c.upper[i])) << '\n';
    }
  }
  return out.str();
}

std::string pdp_markdown(const std::vector<PdpCurve>& curves) {
  std::ostringstream out;
  out << "## Partial dependence\n";
  for (const auto& c : curves) {
    out << "\n### " << c.variable << "\n\n";
    if (c.degenerate) out << "Constant in the training data; single grid point.\n\n";
    if (c.observed_support) out << "Grid: observed values.\n\n";
    const bool bands = !c.lower.empty();
    out << (bands ? "| Value | Effect | 95% band |\n|---:|---:|---|\n" : "| Value | Effect |\n|---:|---:|\n");
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      out << "| " << dataset::format_number(c.grid[i]) << " | " << dataset::format_number(c.effect[i]);
      if (bands) out << " | " << dataset::format_number(c.lower[i]) << " to " << dataset::format_number(c.upper[i]);
      out << " |\n";
    }
  }
  return out.str();
}

std::string null_test_csv(const NullTestResult& r) {
  std::ostringstream out;
  out << "resample,full_r2,reduced_r2,reduced_lower\n";
  for (std::size_t i = 0; i < r.full_r2.size(); ++i) {
    out << i << ',' << dataset::format_number(r.full_r2[i]) << ',' << dataset::format_number(r.reduced_r2[i]) << ','
        << (r.reduced_r2[i] < r.full_r2[i] ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace crowdvis::interpret
