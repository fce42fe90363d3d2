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

#pragma once

#include <compare>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "zsmad/response_parser.hpp"
#include "zsmad/vision_anchor.hpp"

namespace zsmad {

/// Either an LLM prompt or a (vision model, metric) pair.
struct Detector {
  enum class Kind { llm_prompt, vision };

  Kind kind = Kind::llm_prompt;
  int prompt_id = 0;
  std::string model;
  DistanceMetric metric = DistanceMetric::cosine;

  static Detector llm(int prompt_id);
  static Detector vision(std::string model, DistanceMetric metric);

  /// "llm:prompt4" or "vision:<model>:<metric>".
  std::string name() const;
  /// Name with path separators replaced, usable as a directory name.
  std::string slug() const;

  auto operator<=>(const Detector&) const = default;
};

/// Throws std::invalid_argument.
Detector parse_detector(std::string_view name);

enum class FailureKind { none, refusal, unparseable, transport_error };
std::string_view to_string(FailureKind f);

struct ScoreRecord {
  std::string sample_id;
  Detector detector;
  int round = 1;
  std::optional<double> score;  // empty iff failure != none
  FailureKind failure = FailureKind::none;

  bool operator==(const ScoreRecord&) const = default;
};

nlohmann::json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const nlohmann::json& j);

struct FusedScore {
  std::string sample_id;
  Detector detector;
  int fused_rounds = 0;
  std::optional<double> score;  // empty when every fused round failed
  int n_valid = 0;
};

class PromptVerdictMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientRounds : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Maps a parsed verdict to a score in [0,1] where 1 means attack. Empty for
/// Refusal and Unparseable. Bona fide oriented prompts are complemented.
std::optional<double> verdict_to_score(int prompt_id, const ParsedVerdict& verdict);

FailureKind failure_kind(const ParsedVerdict& verdict);

/// Mean of the valid scores among rounds 1..k of one (sample, detector).
/// Throws std::invalid_argument when the records mix keys or miss a round.
FusedScore fuse_rounds(std::span<const ScoreRecord> records, int k);

// ---------------------------------------------------------------------------
// Round-to-round stability

double population_stddev(std::span<const double> values);
/// Linear interpolation between order statistics; `sorted` must be ascending
/// and non-empty, p in [0,1].
double quantile(std::span<const double> sorted, double p);

struct SampleRounds {
  std::string sample_id;
  std::string cls;  // bona_fide / lma_ubo / mipgan2 / morph_pipe
  std::vector<std::optional<double>> values;  // one entry per round
};

struct SampleStability {
  std::string sample_id;
  std::string cls;
  double stddev = 0.0;
  int n_valid = 0;
};

struct ClassSummary {
  std::string cls;
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

struct StabilityStats {
  int rounds = 0;
  std::vector<SampleStability> samples;  // ordered by class, then sample id
  std::vector<ClassSummary> classes;
};

/// Population standard deviation per sample over its valid rounds, then the
/// distribution of those values per class. Samples with fewer than two valid
/// rounds are left out. Throws InsufficientRounds when `rounds` < 2.
StabilityStats stability_stats(std::span<const SampleRounds> samples, int rounds);

}  // namespace zsmad
