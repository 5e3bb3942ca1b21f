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

#include "crowdvis/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "crowdvis/error.hpp"

namespace crowdvis::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const StageContext& ctx, const std::string& line) {
  if (ctx.log) ctx.log(line);
}

dataset::IngestResult load_records(const PipelineConfig& c) {
  if (!fs::exists(c.input)) throw ConfigError("input file " + c.input.string() + " does not exist");
  if (!c.input_format) return dataset::ingest(c.input);
  std::ifstream in(c.input, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + c.input.string());
  return dataset::ingest(in, *c.input_format);
}

dataset::FeatureTable load_features(const StageContext& ctx) {
  const Layout out{ctx.config.output_dir};
  if (!fs::exists(out.features()) || !fs::exists(out.manifest())) {
    throw ConfigError("no feature table in " + out.root.string() + "; run `extract` first");
  }
  return dataset::read_table(out.features(), out.manifest());
}

std::size_t count_lines(const fs::path& p) {
  if (!fs::exists(p)) return 0;
  const auto text = read_file(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// The rows and columns a model of `set` was trained on, rebuilt from the split.
struct Split {
  dataset::FeatureTable train;
  dataset::FeatureTable test;
};

Split split_set(const dataset::FeatureTable& table, const PipelineConfig& c, int set) {
  auto [train, test] = dataset::split(table, c.train_fraction, c.seed);
  return {train.select_set(set), test.select_set(set)};
}

std::string fraction_text(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", f);
  return buf;
}

}  // namespace

IngestSummary run_ingest(const StageContext& ctx) {
  const auto result = load_records(ctx.config);
  write_file(Layout{ctx.config.output_dir}.rejects(), dataset::rejects_jsonl(result.rejects));
  say(ctx, "ingest: " + std::to_string(result.records.size()) + " records, " + std::to_string(result.rejects.size()) +
               " rejects");
  return {result.records.size(), result.rejects.size()};
}

FetchStats run_fetch(const StageContext& ctx) {
  const auto records = load_records(ctx.config).records;
  FetchStats stats;
  const auto images = resolve_images(records, ctx.config, ctx.http.get(), &stats, ctx.sleep);
  write_file(Layout{ctx.config.output_dir}.images(), images_csv(images));
  say(ctx, "fetch-images: " + std::to_string(stats.downloads) + " downloads, " + std::to_string(stats.cache_hits) +
               " cached, " + std::to_string(stats.failures) + " failures");
  return stats;
}

std::size_t run_annotate(const StageContext& ctx) {
  const auto records = load_records(ctx.config).records;
  const auto images = resolve_images(records, ctx.config, ctx.http.get(), nullptr, ctx.sleep);
  const auto clients = make_annotation_clients(ctx.config, ctx.http);
  const auto failures = annotate_images(images, clients);
  std::size_t calls = 0;
  for (const auto& c : clients) calls += c->provider_calls();
  say(ctx, "annotate: " + std::to_string(calls) + " provider calls, " + std::to_string(failures.size()) + " failures");
  return calls;
}

std::size_t run_extract(const StageContext& ctx) {
  const auto records = load_records(ctx.config).records;
  FetchStats stats;
  const auto images = resolve_images(records, ctx.config, ctx.http.get(), &stats, ctx.sleep);
  const auto clients = make_annotation_clients(ctx.config, ctx.http);
  const auto ex = extract_features(records, images, ctx.config, clients);
  const auto table = dataset::assemble(records, ex.blocks);
  const Layout out{ctx.config.output_dir};
  fs::create_directories(out.root);
  write_table(table, out.features(), out.manifest());
  write_file(out.failures(), failures_jsonl(ex.failures));
  say(ctx, "extract: " + std::to_string(table.rows()) + " rows, " + std::to_string(table.cols()) + " columns, " +
               std::to_string(ex.failures.size()) + " failures, " + std::to_string(stats.downloads) + " downloads");
  return ex.failures.size();
}

TrainingGrid run_train(const StageContext& ctx) {
  auto config = ctx.config;
  if (ctx.variable_set) config.variable_sets = {*ctx.variable_set};
  if (ctx.learner) config.learners = {*ctx.learner};
  const auto table = load_features(ctx);
  auto grid = train_grid(table, config);
  const Layout out{config.output_dir};
  for (const auto& cell : grid.cells) {
    write_file(out.model(cell.variable_set, cell.learner), models::to_json(cell.outcome.model));
  }
  write_file(out.evaluation_csv(), grid_csv(grid));
  write_file(out.evaluation_md(), grid_markdown(grid));
  say(ctx, "train: " + std::to_string(grid.cells.size()) + " models");
  return grid;
}

void run_importance(const StageContext& ctx) {
  const auto& c = ctx.config;
  const int set = ctx.variable_set.value_or(c.interpret.variable_set);
  const auto split = split_set(load_features(ctx), c, set);
  const auto report = interpret::inclusion_proportions(split.train, c.interpret.bart, c.interpret.replicates);
  const Layout out{c.output_dir};

  std::string md = "Variable set: " + variable_set_label(set) + "\n\n" + interpret::importance_markdown(report);
  if (!c.interpret.null_tests.empty()) {
    interpret::NullTestConfig nc;
    nc.n_resamples = c.interpret.null_resamples;
    nc.mode = c.interpret.null_mode;
    nc.learner = c.interpret.null_learner;
    nc.train = c.train;
    nc.train.bart_grid = {c.interpret.bart};
    nc.seed = c.seed;
    md += "\n## Null importance tests\n\nShare of bootstrap resamples in which neutralizing the subset lowers the "
          "test-set pseudo-R2.\n\n| Subset | Columns | Resamples | Reduction fraction |\n|---|---:|---:|---:|\n";
    for (const auto& subset : c.interpret.null_tests) {
      const auto cols = subset_columns(split.train, subset);
      const auto r = interpret::null_importance_test(split.train, split.test, cols, nc);
      write_file(out.null_csv(subset.name), interpret::null_test_csv(r));
      md += "| " + subset.name + " | " + std::to_string(cols.size()) + " | " + std::to_string(r.full_r2.size()) +
            " | " + fraction_text(r.fraction) + " |\n";
    }
  }
  write_file(out.importance_csv(), interpret::importance_csv(report));
  write_file(out.categories_csv(), interpret::category_csv(report));
  write_file(out.importance_md(), md);
  say(ctx, "importance: " + std::to_string(report.variables.size()) + " variables, " +
               std::to_string(c.interpret.null_tests.size()) + " null tests");
}

void run_pdp(const StageContext& ctx) {
  const auto& c = ctx.config;
  const int set = ctx.variable_set.value_or(c.interpret.variable_set);
  const auto learner = ctx.learner.value_or(models::Learner::bart);
  const Layout out{c.output_dir};
  const auto model_path = out.model(set, learner);
  if (!fs::exists(model_path)) {
    throw ConfigError("no model at " + model_path.string() + "; run `train` for set " + std::to_string(set) +
                      " and model " + models::learner_name(learner) + " first");
  }
  const auto model = models::model_from_json(read_file(model_path));
  auto train = split_set(load_features(ctx), c, set).train;
  if (train.column_names() != model.columns) {
    throw ConfigError("model " + model_path.string() + " does not match the current feature table; retrain");
  }
  if (model.requires_complete_input && train.has_missing()) train = dataset::impute_missing(train, c.train.knn_k);

  std::vector<std::string> variables = c.interpret.pdp_variables;
  if (variables.empty()) {
    for (const char* v : {"n_images", "n_videos"}) {
      if (train.column_index(v)) variables.emplace_back(v);
    }
  }
  std::vector<interpret::PdpCurve> curves;
  for (const auto& v : variables) {
    if (!train.column_index(v)) throw ConfigError("pdp variable '" + v + "' is not in variable set " + std::to_string(set));
    curves.push_back(interpret::partial_dependence(model, train, v));
  }
  write_file(out.pdp_csv(), interpret::pdp_csv(curves));
  write_file(out.pdp_md(), "Model: " + models::learner_name(learner) + ", variable set " + variable_set_label(set) +
                               "\n\n" + interpret::pdp_markdown(curves));
  say(ctx, "pdp: " + std::to_string(curves.size()) + " curves");
}

void run_report(const StageContext& ctx) {
  const Layout out{ctx.config.output_dir};
  std::ostringstream md;
  md << "# Crowdfunding visual feature report\n\n## Data\n\n";
  if (fs::exists(out.features()) && fs::exists(out.manifest())) {
    const auto table = load_features(ctx);
    std::map<std::string, int> per_tag;
    for (const auto& col : table.columns) ++per_tag[dataset::tag_name(col.tag)];
    md << "Projects: " << table.rows() << "\n\nRejected input rows: " << count_lines(out.rejects())
       << "\n\nExtraction failures: " << count_lines(out.failures()) << "\n\n| Tag | Columns |\n|---|---:|\n";
    for (const auto& [tag, n] : per_tag) md << "| " << tag << " | " << n << " |\n";
  } else {
    md << "No feature table; run `extract`.\n";
  }
  auto section = [&](const std::string& title, const fs::path& path) {
    md << "\n## " << title << "\n\n";
    if (fs::exists(path)) {
      auto text = read_file(path);
      // Demote the section's own headings one level.
      std::string shifted;
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        shifted += (line.rfind("#", 0) == 0 ? "#" + line : line) + "\n";
      }
      md << shifted;
    } else {
      md << "Not run.\n";
    }
  };
  section("Prediction across variable sets", out.evaluation_md());
  section("Importance", out.importance_md());
  section("Partial dependence", out.pdp_md());
  write_file(out.report(), md.str());
  say(ctx, "report: " + out.report().string());
}

void run_all(const StageContext& ctx) {
  run_ingest(ctx);
  run_fetch(ctx);
  run_annotate(ctx);
  run_extract(ctx);
  run_train(ctx);
  run_importance(ctx);
  run_pdp(ctx);
  run_report(ctx);
}

}  // namespace crowdvis::pipeline
