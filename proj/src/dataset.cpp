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

#include "crowdvis/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "crowdvis/error.hpp"
#include "crowdvis/random.hpp"
#include "json.hpp"

namespace crowdvis::dataset {
namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data() + (s[0] == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(const std::string& raw) {
  const std::string s = lower(trim(raw));
  if (s == "true" || s == "1" || s == "yes" || s == "t" || s == "y") return true;
  if (s == "false" || s == "0" || s == "no" || s == "f" || s == "n") return false;
  return std::nullopt;
}

const std::vector<std::string> kRequired = {"id",         "goal_usd",    "pledged_usd", "staff_pick", "country",
                                            "launched_at", "deadline",    "blurb",       "full_text"};

// A row as field name to raw text; absent optional fields are not present.
using RawRow = std::map<std::string, std::string>;

struct RowError {
  std::string reason;
};

ProjectRecord build_record(const RawRow& row) {
  for (const auto& f : kRequired) {
    if (!row.contains(f)) throw RowError{"missing field '" + f + "'"};
  }
  ProjectRecord r;
  r.id = trim(row.at("id"));
  if (r.id.empty()) throw RowError{"empty id"};

  const auto goal = parse_double(row.at("goal_usd"));
  if (!goal) throw RowError{"invalid goal_usd"};
  if (*goal <= 0) throw RowError{"nonpositive goal"};
  r.goal_usd = *goal;
  const auto pledged = parse_double(row.at("pledged_usd"));
  if (!pledged) throw RowError{"invalid pledged_usd"};
  if (*pledged < 0) throw RowError{"negative pledged amount"};
  r.pledged_usd = *pledged;

  const auto pick = parse_bool(row.at("staff_pick"));
  if (!pick) throw RowError{"invalid staff_pick"};
  r.staff_pick = *pick;

  std::string country = trim(row.at("country"));
  for (auto& c : country) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (country.size() < 2 || country.size() > 3 ||
      !std::all_of(country.begin(), country.end(), [](char c) { return c >= 'A' && c <= 'Z'; })) {
    throw RowError{"invalid country code"};
  }
  r.country = country;

  const auto launched = parse_timestamp(row.at("launched_at"));
  if (!launched) throw RowError{"invalid launched_at"};
  const auto deadline = parse_timestamp(row.at("deadline"));
  if (!deadline) throw RowError{"invalid deadline"};
  if (*deadline <= *launched) throw RowError{"nonpositive duration"};
  r.launched_at = *launched;
  r.deadline = *deadline;

  r.blurb = row.at("blurb");
  r.full_text = row.at("full_text");
  if (row.contains("description_html")) r.description_html = row.at("description_html");
  if (row.contains("image_url")) r.image_url = trim(row.at("image_url"));

  auto count = [&](const std::string& name) -> std::optional<int> {
    if (!row.contains(name)) return std::nullopt;
    const auto v = parse_int(row.at(name));
    if (!v) throw RowError{"invalid " + name};
    if (*v < 0) throw RowError{"negative " + name};
    return static_cast<int>(*v);
  };
  r.n_images = count("n_images");
  r.n_videos = count("n_videos");
  r.backers = count("backers");
  for (const auto& f : text_summary_fields()) {
    if (!row.contains(f)) continue;
    const auto v = parse_double(row.at(f));
    if (!v) throw RowError{"invalid " + f};
    r.text_summary[f] = *v;
  }
  return r;
}

std::string json_scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_number(v.get<double>());
  throw RowError{"non-scalar value"};
}

}  // namespace

// --- timestamps ------------------------------------------------------------------

std::optional<Timestamp> parse_timestamp(const std::string& raw) {
  using namespace std::chrono;
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  if (std::all_of(s.begin() + (s[0] == '-' ? 1 : 0), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) &&
      s != "-") {
    const auto v = parse_int(s);
    if (!v) return std::nullopt;
    return Timestamp{seconds{*v}};
  }
  auto digits = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    if (pos + len > s.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  if (!y || !mo || !d || s[4] != '-' || s[7] != '-') return std::nullopt;
  const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  Timestamp t{sys_days{ymd}};
  if (s.size() == 10) return t;
  if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
  const auto hh = digits(11, 2), mm = digits(14, 2), ss = digits(17, 2);
  if (!hh || !mm || !ss || s[13] != ':' || s[16] != ':' || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
  t += hours{*hh} + minutes{*mm} + seconds{*ss};
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;  // sub-second part dropped
  }
  if (pos == s.size()) return t;
  if ((s[pos] == 'Z' || s[pos] == 'z') && pos + 1 == s.size()) return t;
  if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    const auto oh = digits(pos + 1, 2);
    std::optional<int> om;
    std::size_t end = pos + 3;
    if (end < s.size() && s[end] == ':') {
      om = digits(end + 1, 2);
      end += 3;
    } else {
      om = digits(end, 2);
      end += 2;
    }
    if (!oh || !om || end != s.size() || *oh > 23 || *om > 59) return std::nullopt;
    return t - sign * (hours{*oh} + minutes{*om});
  }
  return std::nullopt;
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_start = floor<days>(t);
  const year_month_day ymd{day_start};
  const hh_mm_ss hms{t - day_start};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

const std::vector<std::string>& text_summary_fields() {
  static const std::vector<std::string> f{"analytic", "clout", "authentic", "tone"};
  return f;
}

// --- CSV -----------------------------------------------------------------------------

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false, any = false, was_quoted = false;
  record_line_ = physical_line_ + 1;
  int c;
  while ((c = in_.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          field.push_back('"');
          in_.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++physical_line_;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty() && !was_quoted) {
      in_quotes = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\r' && in_.peek() == '\n') {
      continue;
    } else if (c == '\n') {
      ++physical_line_;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted CSV field", record_line_);
  if (!any) return false;
  fields.push_back(std::move(field));
  ++physical_line_;
  return true;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// --- ingest ------------------------------------------------------------------------

Format format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".csv") return Format::csv;
  if (ext == ".jsonl" || ext == ".ndjson") return Format::jsonl;
  throw InvalidArgument("cannot infer input format from '" + path.string() + "' (expected .csv or .jsonl)");
}

IngestResult ingest(std::istream& in, Format format) {
  std::vector<RawRow> rows;
  std::vector<std::optional<std::string>> row_errors;

  if (format == Format::csv) {
    CsvReader reader(in);
    std::vector<std::string> header, fields;
    if (!reader.next(header)) throw ParseError("CSV input is empty; expected a header row");
    for (auto& h : header) h = trim(h);
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0] = header[0].substr(3);
    for (const auto& f : kRequired) {
      if (std::find(header.begin(), header.end(), f) == header.end()) {
        throw ParseError("CSV header lacks required column '" + f + "'", 1);
      }
    }
    while (reader.next(fields)) {
      if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
      RawRow row;
      std::optional<std::string> err;
      if (fields.size() != header.size()) {
        err = "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size());
      } else {
        for (std::size_t i = 0; i < header.size(); ++i) {
          const bool required = std::find(kRequired.begin(), kRequired.end(), header[i]) != kRequired.end();
          // Empty optional cells mean "absent"; empty text fields stay empty strings.
          if (fields[i].empty() && required && header[i] != "blurb" && header[i] != "full_text") continue;
          if (fields[i].empty() && !required) continue;
          row[header[i]] = fields[i];
        }
      }
      rows.push_back(std::move(row));
      row_errors.push_back(err);
    }
  } else {
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      RawRow row;
      std::optional<std::string> err;
      try {
        const json obj = json::parse(line);
        if (!obj.is_object()) {
          err = "row is not a JSON object";
        } else {
          for (const auto& [k, v] : obj.items()) {
            if (v.is_null()) continue;
            try {
              row[k] = json_scalar_text(v);
            } catch (const RowError& e) {
              err = "field '" + k + "': " + e.reason;
            }
          }
        }
      } catch (const json::parse_error&) {
        err = "malformed JSON";
      }
      rows.push_back(std::move(row));
      row_errors.push_back(err);
    }
  }

  // Row validation is independent per row; duplicate detection runs after.
  std::vector<std::optional<ProjectRecord>> built(rows.size());
  std::vector<std::string> reasons(rows.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows.size()); ++i) {
    if (row_errors[i]) {
      reasons[i] = *row_errors[i];
      continue;
    }
    try {
      built[i] = build_record(rows[i]);
    } catch (const RowError& e) {
      reasons[i] = e.reason;
    }
  }

  IngestResult out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!built[i]) {
      out.rejects.push_back({i + 1, reasons[i]});
    } else if (!seen.insert(built[i]->id).second) {
      out.rejects.push_back({i + 1, "duplicate id '" + built[i]->id + "'"});
    } else {
      out.records.push_back(std::move(*built[i]));
    }
  }
  return out;
}

IngestResult ingest(const std::filesystem::path& path) {
  const Format fmt = format_from_path(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + path.string());
  return ingest(in, fmt);
}

std::string rejects_jsonl(const std::vector<Reject>& rejects) {
  std::string out;
  for (const auto& r : rejects) out += json{{"reason", r.reason}, {"row", r.row}}.dump() + "\n";
  return out;
}

// --- visual counts -------------------------------------------------------------------

const std::vector<std::string>& default_video_hosts() {
  static const std::vector<std::string> hosts{"youtube.com", "youtube-nocookie.com", "youtu.be", "vimeo.com",
                                              "dailymotion.com", "wistia.com", "wistia.net"};
  return hosts;
}

namespace {

std::string url_host(std::string url) {
  url = lower(trim(url));
  if (const auto p = url.find("://"); p != std::string::npos) url = url.substr(p + 3);
  else if (url.starts_with("//")) url = url.substr(2);
  else return {};
  const auto end = url.find_first_of("/:?#");
  std::string host = url.substr(0, end);
  if (const auto at = host.rfind('@'); at != std::string::npos) host = host.substr(at + 1);
  return host;
}

bool host_allowed(const std::string& host, const std::vector<std::string>& hosts) {
  if (host.empty()) return false;
  return std::any_of(hosts.begin(), hosts.end(), [&](const std::string& h) {
    return host == h || (host.size() > h.size() && host.ends_with(h) && host[host.size() - h.size() - 1] == '.');
  });
}

std::size_t find_ci(const std::string& hay, const std::string& needle, std::size_t from) {
  const auto it = std::search(hay.begin() + static_cast<std::ptrdiff_t>(std::min(from, hay.size())), hay.end(),
                              needle.begin(), needle.end(), [](char a, char b) {
                                return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
                              });
  return it == hay.end() ? std::string::npos : static_cast<std::size_t>(it - hay.begin());
}

}  // namespace

VisualCounts count_html_media(const std::string& html, const std::vector<std::string>& video_hosts) {
  VisualCounts out{0, 0, true};
  std::size_t pos = 0;
  const std::size_t n = html.size();
  while ((pos = html.find('<', pos)) != std::string::npos) {
    if (html.compare(pos, 4, "<!--") == 0) {
      const auto end = html.find("-->", pos + 4);
      if (end == std::string::npos) break;
      pos = end + 3;
      continue;
    }
    if (pos + 1 < n && (html[pos + 1] == '!' || html[pos + 1] == '?' || html[pos + 1] == '/')) {
      const auto end = html.find('>', pos);
      if (end == std::string::npos) break;
      pos = end + 1;
      continue;
    }
    std::size_t p = pos + 1;
    std::string name;
    while (p < n && std::isalnum(static_cast<unsigned char>(html[p]))) name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(html[p++]))));
    if (name.empty()) {
      pos = pos + 1;  // a bare '<' in text
      continue;
    }
    // Attributes up to the closing '>', honoring quotes.
    std::map<std::string, std::string> attrs;
    while (p < n && html[p] != '>') {
      if (std::isspace(static_cast<unsigned char>(html[p])) || html[p] == '/') {
        ++p;
        continue;
      }
      std::string key;
      while (p < n && !std::isspace(static_cast<unsigned char>(html[p])) && html[p] != '=' && html[p] != '>' && html[p] != '/') {
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(html[p++]))));
      }
      while (p < n && std::isspace(static_cast<unsigned char>(html[p]))) ++p;
      std::string value;
      if (p < n && html[p] == '=') {
        ++p;
        while (p < n && std::isspace(static_cast<unsigned char>(html[p]))) ++p;
        if (p < n && (html[p] == '"' || html[p] == '\'')) {
          const char q = html[p++];
          const auto end = html.find(q, p);
          value = html.substr(p, end == std::string::npos ? std::string::npos : end - p);
          p = end == std::string::npos ? n : end + 1;
        } else {
          while (p < n && !std::isspace(static_cast<unsigned char>(html[p])) && html[p] != '>') value.push_back(html[p++]);
        }
      }
      if (!key.empty()) attrs.emplace(key, value);
    }
    pos = p < n ? p + 1 : n;

    if (name == "img") {
      ++*out.n_images;
    } else if (name == "video") {
      ++*out.n_videos;
    } else if (name == "iframe" || name == "embed") {
      const auto src = attrs.find("src");
      if (src != attrs.end() && host_allowed(url_host(src->second), video_hosts)) ++*out.n_videos;
    } else if (name == "script" || name == "style") {
      const auto end = find_ci(html, "</" + name, pos);
      pos = end == std::string::npos ? n : end;
    }
  }
  return out;
}

VisualCounts count_visuals(const ProjectRecord& rec, const std::vector<std::string>& video_hosts) {
  VisualCounts out;
  std::optional<VisualCounts> parsed;
  if ((!rec.n_images || !rec.n_videos) && rec.description_html) parsed = count_html_media(*rec.description_html, video_hosts);
  out.n_images = rec.n_images ? rec.n_images : parsed ? parsed->n_images : std::nullopt;
  out.n_videos = rec.n_videos ? rec.n_videos : parsed ? parsed->n_videos : std::nullopt;
  out.from_html = parsed.has_value();
  return out;
}

// --- baseline ------------------------------------------------------------------------

double derive_outcome(const ProjectRecord& rec) { return std::log1p(rec.pledged_usd); }

BaselineFeatures derive_baseline(const ProjectRecord& rec) {
  using namespace std::chrono;
  BaselineFeatures b;
  b.staff_pick = rec.staff_pick ? 1 : 0;
  b.country = rec.country;
  const auto day = floor<days>(rec.launched_at);
  const year_month_day ymd{day};
  b.year = static_cast<int>(ymd.year());
  b.day_of_year = static_cast<int>((day - sys_days{ymd.year() / January / 1}).count()) + 1;
  const auto secs = (rec.deadline - rec.launched_at).count();
  b.duration_days = static_cast<int>((secs + 86399) / 86400);
  b.log_goal = std::log(rec.goal_usd);
  return b;
}

std::vector<std::string> CountryEncoding::column_names() const {
  std::vector<std::string> out;
  for (const auto& c : codes) out.push_back("country_" + c);
  if (has_other) out.push_back("country_other");
  return out;
}

std::vector<double> CountryEncoding::encode(const std::string& country) const {
  std::vector<double> out(codes.size() + (has_other ? 1 : 0), 0.0);
  const auto it = std::lower_bound(codes.begin(), codes.end(), country);
  if (it != codes.end() && *it == country) {
    out[static_cast<std::size_t>(it - codes.begin())] = 1.0;
  } else if (has_other) {
    out.back() = 1.0;
  }
  return out;
}

CountryEncoding fit_country_encoding(const std::vector<ProjectRecord>& records) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : records) ++freq[r.country];
  CountryEncoding enc;
  for (const auto& [code, count] : freq) {
    if (count * 100 >= records.size()) enc.codes.push_back(code);
    else enc.has_other = true;
  }
  return enc;
}

// --- feature table -------------------------------------------------------------------

std::string tag_name(Tag t) {
  switch (t) {
    case Tag::baseline: return "baseline";
    case Tag::text: return "text";
    case Tag::visual_count: return "visual_count";
    case Tag::image_detail: return "image_detail";
    case Tag::untagged: return "untagged";
  }
  return "untagged";
}

Tag parse_tag(const std::string& name) {
  for (Tag t : {Tag::baseline, Tag::text, Tag::visual_count, Tag::image_detail, Tag::untagged}) {
    if (tag_name(t) == name) return t;
  }
  throw InvalidArgument("unknown variable-set tag '" + name + "'");
}

std::vector<Tag> variable_set_tags(int set) {
  switch (set) {
    case 1: return {Tag::baseline};
    case 2: return {Tag::baseline, Tag::text};
    case 3: return {Tag::baseline, Tag::visual_count};
    case 4: return {Tag::baseline, Tag::image_detail};
    case 5: return {Tag::baseline, Tag::text, Tag::visual_count, Tag::image_detail};
    default: throw InvalidArgument("variable set must be 1..5, got " + std::to_string(set));
  }
}

std::optional<std::size_t> FeatureTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name == name) return j;
  return std::nullopt;
}

std::vector<std::string> FeatureTable::column_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

namespace {

FeatureTable with_columns(const FeatureTable& t, const std::vector<std::size_t>& keep) {
  FeatureTable out;
  out.ids = t.ids;
  out.outcome = t.outcome;
  out.outcome_name = t.outcome_name;
  out.values.resize(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.columns.push_back(t.columns[keep[k]]);
    out.values.col(static_cast<Eigen::Index>(k)) = t.values.col(static_cast<Eigen::Index>(keep[k]));
  }
  return out;
}

}  // namespace

FeatureTable FeatureTable::select_tags(const std::vector<Tag>& tags) const {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (std::find(tags.begin(), tags.end(), columns[j].tag) != tags.end()) keep.push_back(j);
  return with_columns(*this, keep);
}

FeatureTable FeatureTable::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> keep;
  for (const auto& n : names) {
    const auto j = column_index(n);
    if (!j) throw InvalidArgument("unknown column '" + n + "'");
    keep.push_back(*j);
  }
  return with_columns(*this, keep);
}

FeatureTable FeatureTable::select_rows(const std::vector<std::size_t>& rows) const {
  FeatureTable out;
  out.columns = columns;
  out.outcome_name = outcome_name;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  out.outcome.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= ids.size()) throw InvalidArgument("row index out of range");
    out.ids.push_back(ids[rows[i]]);
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    out.outcome(static_cast<Eigen::Index>(i)) = outcome(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

bool FeatureTable::has_missing() const { return values.hasNaN(); }

void FeatureTable::validate() const {
  if (static_cast<std::size_t>(values.rows()) != ids.size() || static_cast<std::size_t>(values.cols()) != columns.size() ||
      static_cast<std::size_t>(outcome.size()) != ids.size()) {
    throw InvalidArgument("feature table dimensions disagree");
  }
  std::set<std::string> names{outcome_name, "id"};
  for (const auto& c : columns)
    if (!names.insert(c.name).second) throw InvalidArgument("duplicate column name '" + c.name + "'");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw InvalidArgument("duplicate id '" + id + "'");
  if (outcome.hasNaN()) throw InvalidArgument("outcome must not be missing");
}

FeatureTable assemble(const std::vector<ProjectRecord>& records, const std::vector<FeatureBlock>& blocks,
                      const std::vector<std::string>& video_hosts) {
  std::set<std::string> seen;
  for (const auto& r : records)
    if (!seen.insert(r.id).second) throw InvalidArgument("duplicate id '" + r.id + "'");

  const auto enc = fit_country_encoding(records);
  const bool any_backers = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.backers.has_value(); });

  FeatureTable t;
  t.columns.push_back({"staff_pick", Tag::baseline});
  for (const auto& n : enc.column_names()) t.columns.push_back({n, Tag::baseline});
  for (const char* n : {"day_of_year", "year", "duration_days", "log_goal"}) t.columns.push_back({n, Tag::baseline});
  t.columns.push_back({"n_images", Tag::visual_count});
  t.columns.push_back({"n_videos", Tag::visual_count});
  if (any_backers) t.columns.push_back({"backers", Tag::untagged});
  for (const auto& b : blocks) {
    for (const auto& [id, row] : b.rows) {
      if (row.size() != b.columns.size()) throw InvalidArgument("feature block row '" + id + "' has the wrong width");
    }
    for (const auto& c : b.columns) t.columns.push_back({c, b.tag});
  }

  const auto n = static_cast<Eigen::Index>(records.size());
  t.values = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(t.columns.size()), kNaN);
  t.outcome.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    t.ids.push_back(r.id);
    t.outcome(i) = derive_outcome(r);
    const auto b = derive_baseline(r);
    Eigen::Index j = 0;
    t.values(i, j++) = b.staff_pick;
    for (double v : enc.encode(b.country)) t.values(i, j++) = v;
    t.values(i, j++) = b.day_of_year;
    t.values(i, j++) = b.year;
    t.values(i, j++) = b.duration_days;
    t.values(i, j++) = b.log_goal;
    const auto vc = count_visuals(r, video_hosts);
    t.values(i, j++) = vc.n_images ? *vc.n_images : kNaN;
    t.values(i, j++) = vc.n_videos ? *vc.n_videos : kNaN;
    if (any_backers) t.values(i, j++) = r.backers ? *r.backers : kNaN;
    for (const auto& blk : blocks) {
      const auto it = blk.rows.find(r.id);
      for (std::size_t c = 0; c < blk.columns.size(); ++c, ++j) {
        if (it != blk.rows.end()) t.values(i, j) = it->second[c];
      }
    }
  }
  t.validate();
  return t;
}

FeatureBlock text_block(const std::vector<ProjectRecord>& records, const std::vector<text::Dictionary>& full_text,
                        const std::vector<text::Dictionary>& blurb) {
  FeatureBlock blk;
  blk.tag = Tag::text;
  blk.columns.push_back("text_word_count");
  for (const auto& d : full_text)
    for (const auto& [cat, _] : d.categories) blk.columns.push_back("text_" + d.name + "_" + cat);
  for (const auto& d : blurb)
    for (const auto& [cat, _] : d.categories) blk.columns.push_back("blurb_" + cat);
  std::vector<std::string> summary;
  for (const auto& f : text_summary_fields()) {
    if (std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.text_summary.contains(f); })) {
      summary.push_back(f);
      blk.columns.push_back("blurb_" + f);
    }
  }
  for (const auto& r : records) {
    std::vector<double> row;
    const auto tokens = text::tokenize(r.full_text);
    row.push_back(static_cast<double>(tokens.size()));
    for (const auto& d : full_text) {
      const auto s = text::score_tokens(tokens, d);
      for (const auto& [cat, _] : d.categories) row.push_back(s.percent.at(cat));
    }
    const auto blurb_tokens = text::tokenize(r.blurb);
    for (const auto& d : blurb) {
      const auto s = text::score_tokens(blurb_tokens, d);
      for (const auto& [cat, _] : d.categories) row.push_back(s.percent.at(cat));
    }
    for (const auto& f : summary) {
      const auto it = r.text_summary.find(f);
      row.push_back(it == r.text_summary.end() ? kNaN : it->second);
    }
    blk.rows[r.id] = std::move(row);
  }
  return blk;
}

// --- imputation ---------------------------------------------------------------------

FeatureTable impute_missing(const FeatureTable& table, const FeatureTable& reference, int k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (table.column_names() != reference.column_names()) throw InvalidArgument("imputation reference has different columns");
  const Eigen::Index p = table.values.cols(), nr = reference.values.rows();

  std::vector<double> mean(static_cast<std::size_t>(p)), scale(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    double s = 0, q = 0;
    int c = 0;
    for (Eigen::Index r = 0; r < nr; ++r) {
      const double v = reference.values(r, j);
      if (std::isnan(v)) continue;
      s += v;
      q += v * v;
      ++c;
    }
    if (c == 0) throw InvalidArgument("column '" + table.columns[static_cast<std::size_t>(j)].name + "' has no observed values");
    mean[j] = s / c;
    const double var = std::max(0.0, q / c - mean[j] * mean[j]);
    scale[j] = var > 0 ? std::sqrt(var) : 1.0;
  }

  FeatureTable out = table;
  const auto rows = static_cast<std::ptrdiff_t>(table.rows());
  std::vector<std::string> failure(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    if (!table.values.row(i).hasNaN()) continue;
    std::vector<double> dist(static_cast<std::size_t>(nr));
    for (Eigen::Index r = 0; r < nr; ++r) {
      double d = 0;
      int mutual = 0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double a = table.values(i, j), b = reference.values(r, j);
        if (std::isnan(a) || std::isnan(b)) continue;
        const double z = (a - b) / scale[j];
        d += z * z;
        ++mutual;
      }
      dist[r] = mutual > 0 ? std::sqrt(d) : std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!std::isnan(table.values(i, j))) continue;
      std::vector<Eigen::Index> donors;
      for (Eigen::Index r = 0; r < nr; ++r)
        if (!std::isnan(reference.values(r, j))) donors.push_back(r);
      if (donors.size() < static_cast<std::size_t>(k)) {
        failure[ii] = "column '" + table.columns[static_cast<std::size_t>(j)].name + "' has fewer than k=" +
                      std::to_string(k) + " observed donors";
        break;
      }
      std::partial_sort(donors.begin(), donors.begin() + k, donors.end(), [&](Eigen::Index a, Eigen::Index b) {
        return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
      });
      double s = 0;
      for (int m = 0; m < k; ++m) s += reference.values(donors[m], j);
      out.values(i, j) = s / k;
    }
  }
  for (const auto& f : failure)
    if (!f.empty()) throw InvalidArgument(f);
  return out;
}

FeatureTable impute_missing(const FeatureTable& table, int k) { return impute_missing(table, table, k); }

// --- split -----------------------------------------------------------------------------

SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double train_fraction, std::uint64_t seed) {
  const auto s = split_indices(table.rows(), train_fraction, seed);
  return {table.select_rows(s.train), table.select_rows(s.test)};
}

// --- persistence -------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                 const std::filesystem::path& manifest_path) {
  table.validate();
  std::ostringstream csv;
  csv << "id";
  for (const auto& c : table.columns) csv << ',' << csv_escape(c.name);
  csv << ',' << csv_escape(table.outcome_name) << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    csv << csv_escape(table.ids[i]);
    for (std::size_t j = 0; j < table.cols(); ++j)
      csv << ',' << format_number(table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    csv << ',' << format_number(table.outcome(static_cast<Eigen::Index>(i))) << '\n';
  }
  json manifest;
  manifest["format_version"] = 1;
  manifest["missing"] = "";
  manifest["outcome"] = table.outcome_name;
  manifest["columns"] = json::array();
  manifest["tags"] = json::object();
  for (const auto& c : table.columns) {
    manifest["columns"].push_back(c.name);
    manifest["tags"][c.name] = tag_name(c.tag);
  }
  std::ofstream(csv_path, std::ios::binary) << csv.str();
  std::ofstream(manifest_path, std::ios::binary) << manifest.dump(2) << '\n';
}

FeatureTable read_table(const std::filesystem::path& csv_path, const std::filesystem::path& manifest_path) {
  std::ifstream min(manifest_path);
  if (!min) throw ConfigError("cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(min);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  FeatureTable t;
  try {
    t.outcome_name = manifest.at("outcome").get<std::string>();
    for (const auto& name : manifest.at("columns")) {
      const auto n = name.get<std::string>();
      t.columns.push_back({n, parse_tag(manifest.at("tags").at(n).get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw ParseError("manifest " + manifest_path.string() + ": " + e.what());
  }

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open feature table " + csv_path.string());
  CsvReader reader(in);
  std::vector<std::string> header, fields;
  if (!reader.next(header)) throw ParseError("feature table " + csv_path.string() + " is empty");
  std::vector<std::string> expected{"id"};
  for (const auto& c : t.columns) expected.push_back(c.name);
  expected.push_back(t.outcome_name);
  if (header != expected) throw ParseError("feature table header does not match its manifest", 1);

  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != expected.size()) throw ParseError("wrong field count", reader.line());
    t.ids.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j + 1 < fields.size(); ++j) {
      if (fields[j].empty()) {
        row.push_back(kNaN);
        continue;
      }
      const auto v = parse_double(fields[j]);
      if (!v) throw ParseError("non-numeric cell in column '" + expected[j] + "'", reader.line());
      row.push_back(*v);
    }
    const auto out = parse_double(fields.back());
    if (!out) throw ParseError("missing or invalid outcome", reader.line());
    rows.push_back(std::move(row));
    y.push_back(*out);
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
  t.outcome.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    t.outcome(static_cast<Eigen::Index>(i)) = y[i];
  }
  t.validate();
  return t;
}

}  // namespace crowdvis::dataset
