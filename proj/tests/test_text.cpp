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

#include <sstream>

#include "crowdvis/error.hpp"
#include "crowdvis/random.hpp"
#include "crowdvis/text.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace crowdvis;
using namespace crowdvis::text;
using crowdvis::testing::data_path;

namespace {

Dictionary parse(const std::string& s) {
  std::istringstream in(s);
  return parse_dictionary(in, "test");
}

int error_line(const std::string& s) {
  try {
    parse(s);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

Dictionary anger() { return parse("anger: hate, mad, angry, frustr*"); }

}  // namespace

TEST_CASE("tokenizer splits on non-letters and keeps apostrophes") {
  CHECK(tokenize("Don't stop\xE2\x80\x94" "believing!") == std::vector<std::string>{"don't", "stop", "believing"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("abc123def") == std::vector<std::string>{"abc", "def"});
  CHECK(tokenize("  ...  42 ") .empty());
  CHECK(tokenize("'quoted' words") == std::vector<std::string>{"quoted", "words"});
  CHECK(tokenize("it\xE2\x80\x99s") == std::vector<std::string>{"it's"});
}

TEST_CASE("tokenizer lowercases beyond ASCII") {
  CHECK(tokenize("\xC3\x89T\xC3\x89 Stra\xC3\x9F" "e") == std::vector<std::string>{"\xC3\xA9t\xC3\xA9", "stra\xC3\x9F" "e"});
  CHECK(tokenize("\xCE\x91\xCE\x98\xCE\x97\xCE\x9D\xCE\x91") == std::vector<std::string>{"\xCE\xB1\xCE\xB8\xCE\xB7\xCE\xBD\xCE\xB1"});
  // Invalid UTF-8 bytes separate tokens instead of failing.
  CHECK(tokenize("ab\xFF" "cd") == std::vector<std::string>{"ab", "cd"});
}

TEST_CASE("dictionary parsing") {
  const auto d = anger();
  REQUIRE(d.categories.size() == 1);
  CHECK(d.categories[0].first == "anger");
  CHECK(d.categories[0].second.size() == 4);
  CHECK(d.categories[0].second[3].stem == "frustr");
  CHECK(d.categories[0].second[3].wildcard);
  CHECK(parse("").categories.empty());
  CHECK(parse("# only a comment\n\n   \n").categories.empty());
  const auto multi = parse("a: X, y # trailing\n\nb: z*\n");
  REQUIRE(multi.categories.size() == 2);
  CHECK(multi.categories[0].second[0].stem == "x");
}

TEST_CASE("dictionary errors carry line numbers") {
  CHECK(error_line("anger: fr*str") == 1);
  CHECK(error_line("a: x\n\na: y") == 3);
  CHECK(error_line("a: x\nempty:\n") == 2);
  CHECK(error_line("a: x\nno colon here") == 2);
  CHECK(error_line(": x") == 1);
  CHECK(error_line("a: two words") == 1);
  CHECK(error_line("a: *") == 1);
  CHECK(error_line("a: x**") == 1);
}

TEST_CASE("scores are percentages of matching tokens") {
  const auto s = score_text("hate hate mad calm", anger());
  CHECK(s.word_count == 4);
  CHECK(s.percent.at("anger") == doctest::Approx(75.0));
  CHECK(score_text("frustrated", anger()).percent.at("anger") == 100.0);
  CHECK(score_text("madness", anger()).percent.at("anger") == 0.0);
  const auto none = score_text("hate calm", Dictionary{});
  CHECK(none.word_count == 2);
  CHECK(none.percent.empty());
  const auto empty = score_text("123 !!", anger());
  CHECK(empty.empty);
  CHECK(empty.word_count == 0);
  CHECK(empty.percent.at("anger") == 0.0);
}

TEST_CASE("a token counts once per category even if several patterns match") {
  const auto d = parse("c: frus*, frustr*, frustrated");
  CHECK(score_text("frustrated calm", d).percent.at("c") == 50.0);
}

TEST_CASE("bundled dictionaries load") {
  const auto a = load_dictionary(data_path("dictionaries/anger.dic"));
  CHECK(a.name == "anger");
  REQUIRE(a.categories.size() == 1);
  const auto b = load_dictionary(data_path("dictionaries/blurb.dic"));
  REQUIRE(b.categories.size() == 2);
  CHECK(b.categories[0].first == "best");
  CHECK(b.categories[1].first == "innovate");
  const auto s = score_text("The best, most innovative juicer ever invented", b);
  CHECK(s.percent.at("best") == doctest::Approx(100.0 / 7));
  CHECK(s.percent.at("innovate") == doctest::Approx(200.0 / 7));
  CHECK_THROWS_AS(load_dictionary(data_path("dictionaries/nope.dic")), ConfigError);
}

TEST_CASE("scores are bag-of-words, doubling-invariant and bounded") {
  const auto d = parse("a: the, cat*, s*\nb: dog, x\nc: zzz");
  const std::vector<std::string> vocab{"the", "cat", "cats", "sun", "dog", "x", "moon", "don't", "tree"};
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> words;
    const auto n = rng.below(30);
    for (std::uint64_t i = 0; i < n; ++i) words.push_back(vocab[rng.below(vocab.size())]);
    auto join = [](const std::vector<std::string>& w) {
      std::string out;
      for (const auto& s : w) out += s + " ";
      return out;
    };
    const std::string text = join(words);
    const auto base = score_text(text, d);
    auto shuffled = words;
    rng.shuffle(std::span<std::string>(shuffled));
    const auto perm = score_text(join(shuffled), d);
    const auto doubled = score_text(text + " " + text, d);
    for (const auto& [cat, pct] : base.percent) {
      CHECK(pct >= 0.0);
      CHECK(pct <= 100.0);
      CHECK(perm.percent.at(cat) == doctest::Approx(pct));
      CHECK(doubled.percent.at(cat) == doctest::Approx(pct));
    }
    CHECK(doubled.word_count == 2 * base.word_count);
  }
}
