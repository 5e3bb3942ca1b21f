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

#include "crowdvis/text.hpp"

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "crowdvis/error.hpp"

namespace crowdvis::text {
namespace {

bool is_apostrophe(UChar32 c) { return c == U'\'' || c == 0x2019; }

std::string lower_utf8(const std::string& s) {
  std::string out;
  icu::UnicodeString::fromUTF8(s).toLower(icu::Locale::getRoot()).toUTF8String(out);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

bool Pattern::matches(std::string_view token) const noexcept {
  return wildcard ? token.starts_with(stem) : token == stem;
}

std::vector<std::string> tokenize(std::string_view utf8) {
  std::vector<std::string> out;
  const auto* s = reinterpret_cast<const std::uint8_t*>(utf8.data());
  const auto n = static_cast<std::int32_t>(utf8.size());
  std::string current;
  bool has_letter = false;
  auto flush = [&] {
    if (has_letter) {
      // Strip apostrophes used as quotes around the word.
      std::size_t b = 0, e = current.size();
      while (b < e && current[b] == '\'') ++b;
      while (e > b && current[e - 1] == '\'') --e;
      out.push_back(lower_utf8(current.substr(b, e - b)));
    }
    current.clear();
    has_letter = false;
  };
  for (std::int32_t i = 0; i < n;) {
    const std::int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c >= 0 && u_isalpha(c)) {
      current.append(utf8.substr(start, i - start));
      has_letter = true;
    } else if (c >= 0 && is_apostrophe(c)) {
      current.push_back('\'');
    } else {
      flush();  // separators, digits and invalid bytes
    }
  }
  flush();
  return out;
}

Dictionary parse_dictionary(std::istream& in, const std::string& name) {
  Dictionary dict{name, {}};
  std::set<std::string> seen;
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'category: word, ...'", line_no);
    const std::string category = trim(std::string_view(line).substr(0, colon));
    if (category.empty()) throw ParseError("missing category name", line_no);
    if (!seen.insert(category).second) throw ParseError("duplicate category '" + category + "'", line_no);

    std::vector<Pattern> patterns;
    std::string_view rest = std::string_view(line).substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string word = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (word.empty()) continue;
      Pattern p;
      p.wildcard = word.back() == '*';
      const std::string stem = p.wildcard ? word.substr(0, word.size() - 1) : word;
      if (stem.find('*') != std::string::npos) {
        throw ParseError("wildcard '*' allowed only at the end of '" + word + "'", line_no);
      }
      const auto tokens = tokenize(stem);
      if (tokens.size() != 1 || tokens[0] != lower_utf8(stem)) {
        throw ParseError("pattern '" + word + "' is not a single word", line_no);
      }
      p.stem = tokens[0];
      patterns.push_back(std::move(p));
    }
    if (patterns.empty()) throw ParseError("category '" + category + "' has no words", line_no);
    dict.categories.emplace_back(category, std::move(patterns));
  }
  return dict;
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dictionary " + path.string());
  return parse_dictionary(in, path.stem().string());
}

TextScores score_tokens(const std::vector<std::string>& tokens, const Dictionary& dict) {
  TextScores out;
  out.word_count = static_cast<int>(tokens.size());
  out.empty = tokens.empty();
  for (const auto& [category, patterns] : dict.categories) {
    std::size_t hits = 0;
    for (const auto& t : tokens) {
      hits += std::any_of(patterns.begin(), patterns.end(), [&](const Pattern& p) { return p.matches(t); }) ? 1 : 0;
    }
    out.percent[category] = tokens.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(tokens.size());
  }
  return out;
}

TextScores score_text(std::string_view utf8, const Dictionary& dict) { return score_tokens(tokenize(utf8), dict); }

}  // namespace crowdvis::text
