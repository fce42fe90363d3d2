// Copyright 2026 The zsmad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <random>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "zsmad/prompts.hpp"
#include "zsmad/response_parser.hpp"

using namespace zsmad;
using nlohmann::json;

namespace {

struct CorpusRow {
  int prompt_id;
  std::string text;
  ParsedVerdict expected;
};

std::vector<CorpusRow> load_corpus() {
  std::ifstream in(testing::data_dir() / "parser_corpus.jsonl");
  REQUIRE(in);
  std::vector<CorpusRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    rows.push_back({j.at("prompt_id").get<int>(), j.at("text").get<std::string>(),
                    verdict_from_json(j.at("expected_verdict"))});
  }
  return rows;
}

std::string random_utf8(std::mt19937& rng) {
  std::uniform_int_distribution<int> len(0, 80);
  std::uniform_int_distribution<int> pick(0, 9);
  static const std::vector<std::string> pieces = {
      "yes", "no", "morph", "bona fide", "[", "]", ",", ":", "-", "\xe2\x80\x94", "0", "100",
      "85", "1)", "2)", "\n", " ", "\xc3\xa9", "\xf0\x9f\x98\x80", "I can't assist", "eyes",
      "probability", "\xe2\x80\x99", ".", "9", "%", "answer:", "\xef\xbb\xbf"};
  std::uniform_int_distribution<std::size_t> piece(0, pieces.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    if (k < 5) {
      s += pieces[piece(rng)];
    } else if (k < 8) {
      s += static_cast<char>(0x20 + byte(rng) % 0x5f);
    } else {
      // Arbitrary bytes, including invalid UTF-8.
      s += static_cast<char>(byte(rng));
    }
  }
  return s;
}

}  // namespace

TEST_CASE("parser corpus pins every reply") {
  const auto rows = load_corpus();
  std::map<ResponseKind, int> per_kind;
  for (const auto& r : rows) {
    ++per_kind[prompt_spec(r.prompt_id).response_kind];
    INFO("prompt " << r.prompt_id << ": " << r.text);
    const auto got = parse(r.prompt_id, r.text);
    CHECK(to_json(got).dump() == to_json(r.expected).dump());
    CHECK(got == r.expected);
  }
  CHECK(per_kind.size() == 5);
  for (const auto& [kind, n] : per_kind) CHECK(n >= 30);
}

TEST_CASE("documented examples") {
  CHECK(parse(1, "Yes.") == ParsedVerdict(verdict::Binary{true}));
  CHECK(parse(3, "This appears to be a morphing attack") == ParsedVerdict(verdict::Binary{true}));
  CHECK(parse(3, "bona fide") == ParsedVerdict(verdict::Binary{false}));
  CHECK(parse(4, "I'd estimate the probability at 85.") == ParsedVerdict(verdict::Probability{85}));
  CHECK(parse(7, "1) yes; 2) [eyes, asymmetric iris], [skin, blending texture]") ==
        ParsedVerdict(verdict::TraceReport{
            true, {{CanonicalRegion::eyes, "asymmetric iris"}, {CanonicalRegion::skin, "blending texture"}}}));
  CHECK(parse(8, "1) yes; 2) 2, 8, 9") == ParsedVerdict(verdict::ArtifactChecklist{true, {2, 8, 9}}));
  const auto out_of_range = parse(6, "150");
  REQUIRE(std::holds_alternative<verdict::Unparseable>(out_of_range));
  CHECK(std::get<verdict::Unparseable>(out_of_range).reason == "out of range");
}

TEST_CASE("first standalone token decides yes/no") {
  CHECK(parse(1, "yes, no doubt") == ParsedVerdict(verdict::Binary{true}));
  CHECK(parse(1, "no; yes would be wrong") == ParsedVerdict(verdict::Binary{false}));
  CHECK(parse(3, "bona fide rather than morphing attack") == ParsedVerdict(verdict::Binary{false}));
}

TEST_CASE("normalize_region") {
  CHECK(normalize_region("around the eye iris") == CanonicalRegion::eyes);
  CHECK(normalize_region("hairline blending") == CanonicalRegion::hair);
  CHECK(normalize_region("chin contour") == CanonicalRegion::other);
  CHECK(normalize_region("upper lip") == CanonicalRegion::mouth_teeth);
  CHECK(normalize_region("shadow under nose") == CanonicalRegion::lighting_shading);
  CHECK(normalize_region("left eyebrow") == CanonicalRegion::eyebrows);
  for (auto r : kAllRegions) CHECK(parse_region_name(to_string(r)) == r);
}

TEST_CASE("classify_refusal") {
  CHECK(classify_refusal("I'm sorry, I can't assist with that."));
  CHECK_FALSE(classify_refusal("yes"));
  CHECK_FALSE(classify_refusal("I cannot be certain, but probability: 70", 4));
  CHECK(classify_refusal("I'm unable to analyze this image.", 4));
}

TEST_CASE("parse is total over random input") {
  std::mt19937 rng(20240917);
  for (int i = 0; i < 10000; ++i) {
    const auto s = random_utf8(rng);
    const int prompt = 1 + i % 8;
    ParsedVerdict v;
    CHECK_NOTHROW(v = parse(prompt, s));
    CHECK_NOTHROW(classify_refusal(s));
  }
  CHECK(std::holds_alternative<verdict::Unparseable>(parse(0, "yes")));
  CHECK(std::holds_alternative<verdict::Unparseable>(parse(9, "yes")));
}

namespace {

// Plausible renderings of a verdict for its prompt.
std::vector<std::string> render(int prompt_id, const ParsedVerdict& v) {
  std::vector<std::string> out;
  if (const auto* b = std::get_if<verdict::Binary>(&v)) {
    if (prompt_id == 3) {
      const std::string c = b->is_positive ? "morphing attack" : "bona fide";
      out = {c, "Answer: " + c, "After careful analysis, this is " + c + ".", "**" + c + "**"};
    } else {
      const std::string w = b->is_positive ? "yes" : "no";
      out = {w, "Answer: " + w, w + ".", "Final answer: **" + w + "**"};
    }
  } else if (const auto* p = std::get_if<verdict::Probability>(&v)) {
    const auto n = std::to_string(p->value);
    out = {n, "Probability: " + n, "On a scale between 0 and 100, I'd say " + n + ".",
           "Score: " + n + "%"};
  } else if (const auto* t = std::get_if<verdict::TraceReport>(&v)) {
    if (!t->detected) {
      out = {"1) no", "No."};
    } else {
      std::string brackets, lines;
      for (const auto& tr : t->traces) {
        brackets += (brackets.empty() ? "" : ", ") + std::string("[") +
                    std::string(to_string(tr.region)) + ", " + tr.description + "]";
        lines += "\n- " + std::string(to_string(tr.region)) + ": " + tr.description;
      }
      out = {"1) yes; 2) " + brackets, "1) Yes\n2)" + lines};
    }
  } else if (const auto* c = std::get_if<verdict::ArtifactChecklist>(&v)) {
    if (!c->detected) {
      out = {"1) no", "No"};
    } else {
      std::string items;
      for (int i : c->items) items += (items.empty() ? "" : ", ") + std::to_string(i);
      out = {"1) yes; 2) " + items, "Yes. " + items};
    }
  }
  return out;
}

}  // namespace

TEST_CASE("rendered verdicts parse back") {
  std::mt19937 rng(7);
  const char* descriptions[] = {"asymmetric iris", "blending texture", "ghost edge",
                                "smooth patch"};
  for (int round = 0; round < 50; ++round) {
    for (int prompt = 1; prompt <= 8; ++prompt) {
      ParsedVerdict v;
      switch (prompt_spec(prompt).response_kind) {
        case ResponseKind::binary_yes_no:
        case ResponseKind::binary_class_name:
          v = verdict::Binary{rng() % 2 == 0};
          break;
        case ResponseKind::probability_0_100:
          v = verdict::Probability{static_cast<int>(rng() % 101)};
          break;
        case ResponseKind::trace_report: {
          verdict::TraceReport t{rng() % 3 != 0, {}};
          if (t.detected) {
            std::set<CanonicalRegion> used;
            const int n = 1 + static_cast<int>(rng() % 3);
            for (int i = 0; i < n; ++i) {
              // "other" has no keyword of its own to render.
              const auto r = kAllRegions[rng() % (std::size(kAllRegions) - 1)];
              if (used.insert(r).second) t.traces.push_back({r, descriptions[rng() % 4]});
            }
          }
          v = t;
          break;
        }
        case ResponseKind::artifact_checklist: {
          verdict::ArtifactChecklist c{rng() % 3 != 0, {}};
          if (c.detected) {
            const int n = 1 + static_cast<int>(rng() % 4);
            for (int i = 0; i < n; ++i) c.items.insert(1 + static_cast<int>(rng() % 11));
          }
          v = c;
          break;
        }
      }
      for (const auto& text : render(prompt, v)) {
        INFO("prompt " << prompt << ": " << text);
        CHECK(to_json(parse(prompt, text)).dump() == to_json(v).dump());
      }
    }
  }
}

TEST_CASE("verdict JSON round trip") {
  const std::vector<ParsedVerdict> vs = {
      verdict::Binary{true}, verdict::Probability{42},
      verdict::TraceReport{true, {{CanonicalRegion::nose, "blur"}}},
      verdict::ArtifactChecklist{true, {1, 11}}, verdict::Refusal{},
      verdict::Unparseable{"no number"}};
  for (const auto& v : vs) CHECK(verdict_from_json(to_json(v)) == v);
}
