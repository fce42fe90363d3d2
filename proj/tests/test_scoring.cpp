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
#include "zsmad/prompts.hpp"
#include "zsmad/scoring.hpp"

using namespace zsmad;

namespace {

ScoreRecord rec(int round, std::optional<double> s, const std::string& id = "x") {
  return {id, Detector::llm(4), round, s, s ? FailureKind::none : FailureKind::refusal};
}

}  // namespace

TEST_CASE("verdict_to_score examples") {
  CHECK(verdict_to_score(5, verdict::Probability{80}) == doctest::Approx(0.2));
  CHECK(verdict_to_score(2, verdict::Binary{true}) == 0.0);
  CHECK(verdict_to_score(6, verdict::Probability{100}) == 1.0);
  CHECK_FALSE(verdict_to_score(1, verdict::Refusal{}).has_value());
  CHECK_FALSE(verdict_to_score(4, verdict::Unparseable{"x"}).has_value());
  CHECK_THROWS_AS(verdict_to_score(4, verdict::Binary{true}), PromptVerdictMismatch);
  CHECK_THROWS_AS(verdict_to_score(7, verdict::ArtifactChecklist{true, {}}), PromptVerdictMismatch);
}

TEST_CASE("attack verdicts never score below bona fide verdicts") {
  for (int p = 1; p <= 8; ++p) {
    ParsedVerdict attack, bona;
    switch (prompt_spec(p).response_kind) {
      case ResponseKind::binary_yes_no:
      case ResponseKind::binary_class_name:
        attack = verdict::Binary{prompt_spec(p).polarity != Polarity::bonafide_oriented};
        bona = verdict::Binary{prompt_spec(p).polarity == Polarity::bonafide_oriented};
        break;
      case ResponseKind::probability_0_100:
        attack = verdict::Probability{prompt_spec(p).polarity == Polarity::bonafide_oriented ? 10 : 90};
        bona = verdict::Probability{prompt_spec(p).polarity == Polarity::bonafide_oriented ? 90 : 10};
        break;
      case ResponseKind::trace_report:
        attack = verdict::TraceReport{true, {}};
        bona = verdict::TraceReport{false, {}};
        break;
      case ResponseKind::artifact_checklist:
        attack = verdict::ArtifactChecklist{true, {9}};
        bona = verdict::ArtifactChecklist{false, {}};
        break;
    }
    CHECK(*verdict_to_score(p, attack) > *verdict_to_score(p, bona));
  }
}

TEST_CASE("fuse_rounds") {
  const std::vector<ScoreRecord> three = {rec(1, 0.2), rec(2, 0.4), rec(3, 0.6)};
  CHECK(fuse_rounds(three, 3).score == doctest::Approx(0.4));
  CHECK(*fuse_rounds(three, 1).score == 0.2);

  const std::vector<ScoreRecord> gap = {rec(3, 0.7), rec(1, 0.5), rec(2, std::nullopt)};
  const auto f = fuse_rounds(gap, 3);
  CHECK(*f.score == doctest::Approx(0.6));
  CHECK(f.n_valid == 2);

  std::vector<ScoreRecord> same;
  for (int r = 1; r <= 5; ++r) same.push_back(rec(r, 0.3));
  for (int k = 1; k <= 5; ++k) CHECK(*fuse_rounds(same, k).score == doctest::Approx(0.3));

  const std::vector<ScoreRecord> failed = {rec(1, std::nullopt), rec(2, std::nullopt)};
  CHECK_FALSE(fuse_rounds(failed, 2).score.has_value());
  CHECK(fuse_rounds(failed, 2).n_valid == 0);

  CHECK_THROWS_AS(fuse_rounds(three, 4), std::invalid_argument);
  const std::vector<ScoreRecord> mixed = {rec(1, 0.1, "a"), rec(2, 0.1, "b")};
  CHECK_THROWS_AS(fuse_rounds(mixed, 2), std::invalid_argument);
  const std::vector<ScoreRecord> dup = {rec(1, 0.1), rec(1, 0.2)};
  CHECK_THROWS_AS(fuse_rounds(dup, 1), std::invalid_argument);
}

TEST_CASE("fusion stays within round bounds and ignores order") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<ScoreRecord> rs;
    double lo = 2, hi = -1;
    for (int r = 1; r <= 5; ++r) {
      const double v = u(rng);
      rs.push_back(rec(r, v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double fused = *fuse_rounds(rs, 5).score;
    CHECK(fused >= lo);
    CHECK(fused <= hi);
    std::shuffle(rs.begin(), rs.end(), rng);
    CHECK(*fuse_rounds(rs, 5).score == fused);
  }
}

TEST_CASE("score record JSON") {
  const ScoreRecord a{"s1", Detector::vision("resnet34", DistanceMetric::cosine), 1, 0.25,
                      FailureKind::none};
  CHECK(score_record_from_json(to_json(a)) == a);
  const auto b = rec(2, std::nullopt);
  CHECK(score_record_from_json(to_json(b)) == b);
  auto bad = to_json(a);
  bad["failure"] = "refusal";
  CHECK_THROWS_AS(score_record_from_json(bad), std::invalid_argument);
  CHECK(parse_detector("vision:my:model:euclidean").model == "my:model");
  CHECK(Detector::vision("a/b", DistanceMetric::cosine).slug() == "vision_a_b_cosine");
}

TEST_CASE("stability") {
  const std::vector<SampleRounds> rows = {
      {"a", "bona_fide", {70.0, 70.0, 70.0, 70.0, 70.0}},
      {"b", "lma_ubo", {0.0, 100.0}},
      {"c", "lma_ubo", {10.0, std::nullopt, 30.0}},
      {"d", "lma_ubo", {std::nullopt, 5.0, std::nullopt}},
  };
  const auto s = stability_stats(rows, 5);
  REQUIRE(s.samples.size() == 3);  // d has one valid round
  CHECK(s.samples[0].stddev == 0.0);
  CHECK(s.samples[1].stddev == doctest::Approx(50.0));
  CHECK(s.samples[2].stddev == doctest::Approx(10.0));
  CHECK_THROWS_AS(stability_stats(rows, 1), InsufficientRounds);
}

TEST_CASE("class summary over {0, 10, 20}") {
  // numpy.percentile([0, 10, 20], [25, 50, 75]) == [5, 10, 15]
  const std::vector<SampleRounds> rows = {
      {"a", "mipgan2", {50.0, 50.0}},
      {"b", "mipgan2", {40.0, 60.0}},
      {"c", "mipgan2", {30.0, 70.0}},
  };
  const auto s = stability_stats(rows, 2);
  REQUIRE(s.classes.size() == 1);
  const auto& c = s.classes[0];
  CHECK(c.n == 3);
  CHECK(c.min == 0.0);
  CHECK(c.q1 == doctest::Approx(5.0));
  CHECK(c.median == doctest::Approx(10.0));
  CHECK(c.q3 == doctest::Approx(15.0));
  CHECK(c.max == doctest::Approx(20.0));
  CHECK(c.mean == doctest::Approx(10.0));
}
