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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsmad/llm_client.hpp"
#include "zsmad/manifest.hpp"
#include "zsmad/metrics.hpp"
#include "zsmad/scoring.hpp"
#include "zsmad/vision_anchor.hpp"

namespace zsmad {

/// Eval or support samples with no embedding for some model.
class MissingEmbedding : public EmbeddingError {
 public:
  MissingEmbedding(std::vector<std::string> ids, const std::string& model);
  std::vector<std::string> ids;
};

/// Provider fields given on the command line; set fields win over the
/// config file, which wins over the built-in defaults.
struct ProviderOverrides {
  std::optional<std::string> base_url;
  std::optional<std::string> model;
  std::optional<std::string> api_key_env;
  std::optional<int> max_parallel;
  std::optional<int> max_retries;
  std::optional<double> request_timeout;
  std::optional<double> temperature;
};

ProviderConfig resolve_provider_config(const std::optional<std::filesystem::path>& file,
                                       const ProviderOverrides& overrides);

/// Mock script for `mock:` URLs, otherwise HTTP with the key read from the
/// environment variable the config names. Throws AuthError when that
/// variable is unset or empty.
std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& config);

struct RunLlmOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::vector<int> prompts;
  int rounds = 5;
  std::optional<std::filesystem::path> provider_config;
  ProviderOverrides overrides;
};

struct PromptFailureSummary {
  int prompt_id = 0;
  FailureStats stats;
};

struct RunLlmResult {
  BatchResult batch;
  std::vector<PromptFailureSummary> per_prompt;
  std::size_t n_score_records = 0;
  /// Problems that left some requested artifact missing.
  std::vector<std::string> failures;
};

/// Queries (through the response cache), parses and scores every eval
/// sample. Writes responses.jsonl, verdicts.jsonl, llm_scores.jsonl and
/// run_llm_summary.json under `out`. Per-sample problems are collected, not
/// thrown. `provider` replaces the configured one when given.
RunLlmResult run_llm(const RunLlmOptions& options, std::ostream& log,
                     ChatProvider* provider = nullptr);

enum class MetricSelection { cosine, euclidean, both };
std::optional<MetricSelection> parse_metric_selection(std::string_view s);

struct RunVisionOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::filesystem::path embeddings;
  MetricSelection metric = MetricSelection::both;
};

struct RunVisionResult {
  std::vector<AnchorEmbedding> anchors;
  std::size_t n_score_records = 0;
};

/// One anchor per model from the support rows, one score per eval sample,
/// model and metric. Writes vision_scores.jsonl. Throws MissingEmbedding.
RunVisionResult run_vision(const RunVisionOptions& options, std::ostream& log);

struct EvaluateOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  /// Defaults to whichever of out/llm_scores.jsonl and out/vision_scores.jsonl
  /// exist.
  std::vector<std::filesystem::path> scores;
  /// Defaults to out/verdicts.jsonl when present.
  std::optional<std::filesystem::path> verdicts;
  /// Defaults to the morph algorithms present among eval rows.
  std::vector<MorphAlgorithm> protocols;
  /// Rounds to fuse; defaults to the highest round seen per detector.
  std::optional<int> rounds;
};

struct EvaluateResult {
  std::vector<EvalReport> reports;
  std::vector<std::string> failures;
};

/// Emits out/reports/<protocol>/<detector>/ per (protocol, detector) plus
/// out/reports/summary.{json,csv}. A failing pair is recorded and skipped.
EvaluateResult evaluate(const EvaluateOptions& options, std::ostream& log);

std::vector<ScoreRecord> load_score_records(const std::filesystem::path& path);
void write_score_records(const std::filesystem::path& path, std::vector<ScoreRecord> records);

/// failures.json: {"command", "failures": [...]}. Removes a stale file when
/// `failures` is empty.
void write_failures(const std::filesystem::path& out, const std::string& command,
                    const std::vector<std::string>& failures);

}  // namespace zsmad
