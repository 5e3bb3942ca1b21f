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
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crowdvis/text.hpp"

namespace crowdvis::dataset {

using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS[Z|+HH:MM]` or integer Unix seconds.
std::optional<Timestamp> parse_timestamp(const std::string& text);
std::string format_timestamp(Timestamp t);

struct ProjectRecord {
  std::string id;
  double goal_usd = 0.0;
  double pledged_usd = 0.0;
  bool staff_pick = false;
  std::string country;  // upper-case ISO code
  Timestamp launched_at{};
  Timestamp deadline{};
  std::string blurb;
  std::string full_text;
  std::optional<std::string> description_html;
  std::optional<std::string> image_url;
  std::optional<int> n_images;
  std::optional<int> n_videos;
  std::optional<int> backers;  // ingested, never modeled
  /// Precomputed text summary scores (analytic, clout, authentic, tone).
  std::map<std::string, double> text_summary;
};

/// Names of the optional pass-through summary columns.
const std::vector<std::string>& text_summary_fields();

struct Reject {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string reason;
};

struct IngestResult {
  std::vector<ProjectRecord> records;
  std::vector<Reject> rejects;
};

enum class Format { csv, jsonl };

Format format_from_path(const std::filesystem::path& path);
/// Throws ParseError when a required CSV column is absent; row problems become rejects.
IngestResult ingest(std::istream& in, Format format);
IngestResult ingest(const std::filesystem::path& path);
/// One `{"row": n, "reason": "..."}` object per line.
std::string rejects_jsonl(const std::vector<Reject>& rejects);

// --- derived variables ---------------------------------------------------------

struct VisualCounts {
  std::optional<int> n_images;
  std::optional<int> n_videos;
  bool from_html = false;
};

/// Hosts whose iframes/embeds count as videos.
const std::vector<std::string>& default_video_hosts();
/// Counts `img`, `video` and embedded-player frames outside comments, scripts and styles.
VisualCounts count_html_media(const std::string& html, const std::vector<std::string>& video_hosts = default_video_hosts());
/// Explicit counts win; otherwise the description HTML; otherwise missing.
VisualCounts count_visuals(const ProjectRecord& rec, const std::vector<std::string>& video_hosts = default_video_hosts());

/// ln(pledged + 1).
double derive_outcome(const ProjectRecord& rec);

struct BaselineFeatures {
  int staff_pick = 0;
  std::string country;
  int day_of_year = 1;
  int year = 1970;
  int duration_days = 1;
  double log_goal = 0.0;
};

BaselineFeatures derive_baseline(const ProjectRecord& rec);

/// Countries holding at least 1% of records get their own indicator; the rest
/// share `other`.
struct CountryEncoding {
  std::vector<std::string> codes;  // sorted
  bool has_other = false;
  std::vector<std::string> column_names() const;
  std::vector<double> encode(const std::string& country) const;
};
CountryEncoding fit_country_encoding(const std::vector<ProjectRecord>& records);

// --- feature table ---------------------------------------------------------------

enum class Tag { baseline, text, visual_count, image_detail, untagged };

std::string tag_name(Tag t);
Tag parse_tag(const std::string& name);

/// Variable sets 1..5: baseline; +text; +visual counts; +image details; all.
std::vector<Tag> variable_set_tags(int set);

struct Column {
  std::string name;
  Tag tag = Tag::untagged;
  bool operator==(const Column&) const = default;
};

/// Rows are projects. Missing cells hold NaN; the outcome is never missing.
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<Column> columns;
  Eigen::MatrixXd values;  // ids.size() x columns.size()
  Eigen::VectorXd outcome;
  std::string outcome_name = "log_dollars";

  std::size_t rows() const noexcept { return ids.size(); }
  std::size_t cols() const noexcept { return columns.size(); }
  std::optional<std::size_t> column_index(const std::string& name) const;
  std::vector<std::string> column_names() const;
  /// Columns whose tag is in `tags`, original order kept.
  FeatureTable select_tags(const std::vector<Tag>& tags) const;
  FeatureTable select_set(int set) const { return select_tags(variable_set_tags(set)); }
  FeatureTable select_columns(const std::vector<std::string>& names) const;
  FeatureTable select_rows(const std::vector<std::size_t>& rows) const;
  bool has_missing() const;
  /// Throws InvalidArgument on size mismatch, duplicate ids or column names,
  /// or a missing outcome.
  void validate() const;
};

/// Extra per-record columns (text scores, image features) keyed by id.
struct FeatureBlock {
  Tag tag = Tag::image_detail;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>> rows;  // NaN = missing
};

/// Baseline, visual-count and outcome columns come from the records; each
/// block adds its columns, missing where it has no row for an id.
FeatureTable assemble(const std::vector<ProjectRecord>& records, const std::vector<FeatureBlock>& blocks = {},
                      const std::vector<std::string>& video_hosts = default_video_hosts());

/// Text block: percentages for every category of the full-text dictionaries
/// (`text_<dict>_<category>`), blurb dictionary hits (`blurb_<category>`),
/// word count, and any summary pass-through columns present in the records.
FeatureBlock text_block(const std::vector<ProjectRecord>& records, const std::vector<text::Dictionary>& full_text,
                        const std::vector<text::Dictionary>& blurb);

/// k-nearest-neighbor imputation. Distances use columns observed in both rows,
/// standardized by the reference table's observed mean and deviation; each
/// missing cell takes the mean of its k nearest reference rows that observe it.
/// Throws InvalidArgument when a column has no observed reference values or
/// fewer than k donors.
FeatureTable impute_missing(const FeatureTable& table, const FeatureTable& reference, int k = 5);
FeatureTable impute_missing(const FeatureTable& table, int k = 5);

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// floor(fraction * n) training rows drawn uniformly with the seed.
SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed);
std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double train_fraction, std::uint64_t seed);

// --- persistence -------------------------------------------------------------------

/// CSV with `id`, feature columns, then the outcome; missing cells are empty.
/// Numbers use the shortest round-trip representation.
void write_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                 const std::filesystem::path& manifest_path);
FeatureTable read_table(const std::filesystem::path& csv_path, const std::filesystem::path& manifest_path);

std::string format_number(double v);

// --- CSV -----------------------------------------------------------------------------

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}
  /// False at end of input. `line` is the physical line the record starts on.
  bool next(std::vector<std::string>& fields);
  int line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  int physical_line_ = 0;
  int record_line_ = 0;
};

std::string csv_escape(const std::string& field);

}  // namespace crowdvis::dataset
