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

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsmad/manifest.hpp"
#include "zsmad/response_parser.hpp"
#include "zsmad/scoring.hpp"

namespace zsmad {

struct LabeledScore {
  std::string sample_id;
  double score = 0.0;
  Label label = Label::bona_fide;
};

/// Convention: score >= threshold classifies as attack.
struct DetPoint {
  double threshold = 0.0;
  double macer = 0.0;  // attacks scored below threshold / attacks
  double bpcer = 0.0;  // bona fide scored at or above threshold / bona fide
  bool operator==(const DetPoint&) const = default;
};

struct DetCurve {
  /// Ascending thresholds: a sentinel below the minimum, every distinct score
  /// whose error pair differs from its predecessor, a sentinel above the
  /// maximum. MACER is non-decreasing and BPCER non-increasing along it.
  std::vector<DetPoint> points;
  std::size_t n_attack = 0;
  std::size_t n_bonafide = 0;
  std::size_t n_distinct_scores = 0;
  /// Set when the scores take at most two distinct values: the classification
  /// obtained by thresholding at the largest value.
  std::optional<DetPoint> operating_point;

  bool degenerate() const { return n_distinct_scores <= 2; }
  bool operator==(const DetCurve&) const = default;
};

class SingleClass : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws SingleClass unless both labels are present; non-finite scores are
/// rejected with std::invalid_argument.
DetCurve det_sweep(std::span<const LabeledScore> scores);

/// MACER = BPCER crossing, linearly interpolated between the two sweep points
/// that bracket the sign change of MACER - BPCER.
double eer(const DetCurve& det);

/// For each k in 1..k_max: fuse rounds 1..k per sample, drop samples whose
/// fused score failed, and compute the EER. Only samples present in `labels`
/// take part.
std::map<int, double> fused_round_table(std::span<const ScoreRecord> records,
                                        const std::map<std::string, Label>& labels, int k_max);

/// Fused LabeledScores over rounds 1..k; samples with no valid round are
/// appended to `failed` when given.
std::vector<LabeledScore> fused_labeled_scores(std::span<const ScoreRecord> records,
                                               const std::map<std::string, Label>& labels, int k,
                                               std::vector<std::string>* failed = nullptr);

struct FailureStats {
  std::size_t total_queries = 0;
  std::size_t refusals = 0;
  std::size_t unparseable = 0;
  std::size_t transport_errors = 0;
  /// (refusals + unparseable) / total_queries; 0 when there are no queries.
  double failure_rate = 0.0;
  /// Samples where every round failed; these are left out of the DET.
  std::vector<std::string> failed_samples;

  bool operator==(const FailureStats&) const = default;
};

FailureStats failure_rate(std::span<const ScoreRecord> records);

struct ClassedVerdict {
  std::string cls;
  ParsedVerdict verdict;
};

struct HistogramRow {
  std::string cls;
  std::string bucket;
  std::size_t count = 0;
  double frequency = 0.0;  // count / verdicts of that class
  bool operator==(const HistogramRow&) const = default;
};

struct TraceHistogram {
  std::vector<HistogramRow> rows;
  std::map<std::string, std::size_t> class_totals;
  bool operator==(const TraceHistogram&) const = default;
};

/// Counts, per class, how many replies name each region (trace reports) or
/// item (checklists); each reply counts a bucket at most once. Replies that
/// detect nothing land in "none", detections without detail in
/// "unspecified". Refusal and Unparseable verdicts are skipped.
TraceHistogram trace_histograms(std::span<const ClassedVerdict> verdicts);

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  std::string protocol;
  Detector detector;
  int rounds = 1;
  double eer = 0.0;
  DetCurve det;
  FailureStats failure;
  std::map<int, double> fused_round_eers;
  std::optional<StabilityStats> stability;
  std::string stability_note;  // why stability is absent
  std::optional<TraceHistogram> histograms;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
bool same_report(const EvalReport& a, const EvalReport& b);

/// Writes report.json, det.csv, histograms.csv and stability.csv into
/// `out_dir`, creating it. Throws std::runtime_error on I/O failure.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace zsmad
