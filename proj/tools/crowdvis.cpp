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

// Command-line front end: one subcommand per pipeline stage.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "crowdvis/color.hpp"
#include "crowdvis/error.hpp"
#include "crowdvis/imaging.hpp"
#include "crowdvis/stages.hpp"

namespace fs = std::filesystem;
using namespace crowdvis;

namespace {

struct Options {
  std::string config;
  std::string cache_dir;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> set;
  std::optional<std::string> model;
  bool offline = false;
  bool quiet = false;
};

pipeline::StageContext make_context(const Options& o) {
  pipeline::StageContext ctx;
  ctx.config = pipeline::load_config(o.config);
  if (o.seed) pipeline::set_seed(ctx.config, *o.seed);
  if (!o.cache_dir.empty()) ctx.config.cache_dir = fs::absolute(o.cache_dir);
  if (!o.output_dir.empty()) ctx.config.output_dir = fs::absolute(o.output_dir);
  ctx.variable_set = o.set;
  if (o.model) ctx.learner = models::parse_learner(*o.model);
  if (!o.offline) ctx.http = make_http_transport();
  if (!o.quiet) ctx.log = [](const std::string& line) { std::cerr << line << '\n'; };
  return ctx;
}

// Pristine 128x128 tiles at stride 128 from every image, files in name order.
int fit_quality(const std::vector<std::string>& inputs, const std::string& output, std::uint64_t seed) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
      }
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  constexpr int kTile = 128;
  std::vector<ImageBuffer> tiles;
  for (const auto& f : files) {
    const auto img = decode_image(f);
    for (int y = 0; y + kTile <= img.height(); y += kTile)
      for (int x = 0; x + kTile <= img.width(); x += kTile) tiles.push_back(crop(img, x, y, kTile, kTile));
  }
  if (tiles.empty()) throw ConfigError("no 128x128 tiles in the given images");
  color::fit_quality_model(tiles, seed).save(output);
  std::cerr << "fit-quality-model: " << tiles.size() << " tiles from " << files.size() << " images -> " << output
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual and textual features of crowdfunding projects, and models of the dollars they raise."};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd, bool selection) {
    cmd->add_option("-c,--config", o.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--cache-dir", o.cache_dir, "Override the config cache directory");
    cmd->add_option("--output-dir", o.output_dir, "Override the config output directory");
    cmd->add_flag("--offline", o.offline, "Never open network connections");
    cmd->add_flag("-q,--quiet", o.quiet, "No progress lines");
    if (selection) {
      cmd->add_option("--set", o.set, "Variable set 1..5")->check(CLI::Range(1, 5));
      cmd->add_option("--model", o.model, "Learner")->check(CLI::IsMember({"ridge", "lasso", "gbt", "bart"}));
    }
  };

  struct Stage {
    const char* name;
    const char* help;
    bool selection;
    std::function<void(const pipeline::StageContext&)> run;
  };
  const std::vector<Stage> stages = {
      {"ingest", "Parse the input and write rejects", false, [](auto& c) { pipeline::run_ingest(c); }},
      {"fetch-images", "Fill the content-addressed image cache", false, [](auto& c) { pipeline::run_fetch(c); }},
      {"annotate", "Cache provider annotations for every image", false, [](auto& c) { pipeline::run_annotate(c); }},
      {"extract", "Write the feature table and its manifest", false, [](auto& c) { pipeline::run_extract(c); }},
      {"train", "Fit learners across variable sets and write the evaluation grid", true,
       [](auto& c) { pipeline::run_train(c); }},
      {"importance", "BART inclusion proportions and null importance tests", true,
       [](auto& c) { pipeline::run_importance(c); }},
      {"pdp", "Partial dependence from a trained model", true, [](auto& c) { pipeline::run_pdp(c); }},
      {"report", "Bundle every report into one markdown file", false, [](auto& c) { pipeline::run_report(c); }},
      {"run", "Every stage in order", false, [](auto& c) { pipeline::run_all(c); }},
  };
  std::vector<std::pair<CLI::App*, const Stage*>> commands;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, s.selection);
    commands.emplace_back(cmd, &s);
  }

  auto* fq = app.add_subcommand("fit-quality-model", "Refit the linear image-quality model from pristine photos");
  std::vector<std::string> fq_inputs{(fs::path(CROWDVIS_DATA_DIR) / "fixtures").string()};
  std::string fq_output = (fs::path(CROWDVIS_DATA_DIR) / "models" / "quality_linear.txt").string();
  std::uint64_t fq_seed = 2026;
  fq->add_option("inputs", fq_inputs, "Images or directories of images");
  fq->add_option("-o,--output", fq_output, "Model file to write");
  fq->add_option("--seed", fq_seed, "Distortion seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fq->parsed()) return fit_quality(fq_inputs, fq_output, fq_seed);
    for (const auto& [cmd, stage] : commands) {
      if (cmd->parsed()) {
        stage->run(make_context(o));
        return 0;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
