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

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crowdvis::text {

/// Lowercase literal word, or a stem ending in `*` that matches by prefix.
struct Pattern {
  std::string stem;
  bool wildcard = false;
  bool matches(std::string_view token) const noexcept;
};

struct Dictionary {
  std::string name;
  /// Category name to patterns, categories in file order.
  std::vector<std::pair<std::string, std::vector<Pattern>>> categories;
};

/// Format: one `category: w1, w2, stem*` per line; `#` starts a comment.
/// Throws ParseError (with line) on duplicate or empty categories, interior
/// wildcards, or patterns that are not single tokens.
Dictionary parse_dictionary(std::istream& in, const std::string& name);
/// Dictionary named after the file stem.
Dictionary load_dictionary(const std::filesystem::path& path);

/// Lowercased maximal runs of letters and apostrophes. Apostrophes at either
/// end of a run are dropped, and U+2019 counts as an apostrophe.
std::vector<std::string> tokenize(std::string_view utf8);

struct TextScores {
  int word_count = 0;
  std::map<std::string, double> percent;  // by category, in [0, 100]
  bool empty = false;                     // no tokens; every percentage is 0
};

TextScores score_tokens(const std::vector<std::string>& tokens, const Dictionary& dict);
TextScores score_text(std::string_view utf8, const Dictionary& dict);

}  // namespace crowdvis::text
