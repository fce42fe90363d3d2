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

#include "zsmad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "zsmad/prompts.hpp"

namespace zsmad {

using nlohmann::json;

Detector Detector::llm(int prompt_id) {
  prompt_spec(prompt_id);
  Detector d;
  d.kind = Kind::llm_prompt;
  d.prompt_id = prompt_id;
  return d;
}

Detector Detector::vision(std::string model, DistanceMetric metric) {
  if (model.empty()) throw std::invalid_argument("vision detector needs a model id");
  Detector d;
  d.kind = Kind::vision;
  d.model = std::move(model);
  d.metric = metric;
  return d;
}

std::string Detector::name() const {
  if (kind == Kind::llm_prompt) return "llm:prompt" + std::to_string(prompt_id);
  return "vision:" + model + ":" + std::string(to_string(metric));
}

std::string Detector::slug() const {
  auto s = name();
  for (auto& c : s) {
    if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return s;
}

Detector parse_detector(std::string_view name) {
  if (name.starts_with("llm:prompt")) {
    const auto digits = std::string(name.substr(10));
    if (digits.size() == 1 && digits[0] >= '1' && digits[0] <= '8') {
      return Detector::llm(digits[0] - '0');
    }
  } else if (name.starts_with("vision:")) {
    const auto rest = name.substr(7);
    const auto colon = rest.rfind(':');
    if (colon != std::string_view::npos && colon > 0) {
      if (auto m = parse_distance_metric(rest.substr(colon + 1))) {
        return Detector::vision(std::string(rest.substr(0, colon)), *m);
      }
    }
  }
  throw std::invalid_argument("bad detector name '" + std::string(name) + "'");
}

std::string_view to_string(FailureKind f) {
  switch (f) {
    case FailureKind::none: return "none";
    case FailureKind::refusal: return "refusal";
    case FailureKind::unparseable: return "unparseable";
    case FailureKind::transport_error: return "transport_error";
  }
  return "?";
}

namespace {

std::optional<FailureKind> parse_failure_kind(std::string_view s) {
  for (auto f : {FailureKind::none, FailureKind::refusal, FailureKind::unparseable,
                 FailureKind::transport_error}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

}  // namespace

json to_json(const ScoreRecord& r) {
  json j = {{"sample_id", r.sample_id}, {"detector", r.detector.name()}, {"round", r.round}};
  j["score"] = r.score ? json(*r.score) : json(nullptr);
  j["failure"] = to_string(r.failure);
  return j;
}

ScoreRecord score_record_from_json(const json& j) {
  ScoreRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.detector = parse_detector(j.at("detector").get<std::string>());
    r.round = j.at("round").get<int>();
    if (!j.at("score").is_null()) r.score = j.at("score").get<double>();
    const auto f = parse_failure_kind(j.value("failure", "none"));
    if (!f) throw std::invalid_argument("unknown failure kind");
    r.failure = *f;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed score record: ") + e.what());
  }
  if (r.round < 1) throw std::invalid_argument("score record round must be >= 1");
  if (r.score.has_value() == (r.failure != FailureKind::none)) {
    throw std::invalid_argument("score record: score must be present iff failure is none");
  }
  if (r.score && !std::isfinite(*r.score)) {
    throw std::invalid_argument("score record: non-finite score");
  }
  return r;
}

FailureKind failure_kind(const ParsedVerdict& verdict) {
  if (std::holds_alternative<verdict::Refusal>(verdict)) return FailureKind::refusal;
  if (std::holds_alternative<verdict::Unparseable>(verdict)) return FailureKind::unparseable;
  return FailureKind::none;
}

std::optional<double> verdict_to_score(int prompt_id, const ParsedVerdict& v) {
  const auto& spec = prompt_spec(prompt_id);
  if (is_failure(v)) return std::nullopt;

  auto mismatch = [&] {
    return PromptVerdictMismatch("prompt " + std::to_string(prompt_id) + " expects " +
                                 std::string(to_string(spec.response_kind)) + ", got " +
                                 std::string(verdict_kind(v)));
  };

  switch (spec.response_kind) {
    case ResponseKind::binary_yes_no:
    case ResponseKind::binary_class_name: {
      const auto* b = std::get_if<verdict::Binary>(&v);
      if (!b) throw mismatch();
      const bool attack = spec.polarity == Polarity::bonafide_oriented ? !b->is_positive
                                                                       : b->is_positive;
      return attack ? 1.0 : 0.0;
    }
    case ResponseKind::probability_0_100: {
      const auto* p = std::get_if<verdict::Probability>(&v);
      if (!p) throw mismatch();
      const double share = static_cast<double>(p->value) / 100.0;
      return spec.polarity == Polarity::bonafide_oriented ? 1.0 - share : share;
    }
    case ResponseKind::trace_report: {
      const auto* t = std::get_if<verdict::TraceReport>(&v);
      if (!t) throw mismatch();
      return t->detected ? 1.0 : 0.0;
    }
    case ResponseKind::artifact_checklist: {
      const auto* c = std::get_if<verdict::ArtifactChecklist>(&v);
      if (!c) throw mismatch();
      return c->detected ? 1.0 : 0.0;
    }
  }
  throw mismatch();
}

FusedScore fuse_rounds(std::span<const ScoreRecord> records, int k) {
  if (k < 1) throw std::invalid_argument("fuse_rounds: k must be >= 1");
  if (records.empty()) throw std::invalid_argument("fuse_rounds: no records");

  FusedScore out;
  out.sample_id = records.front().sample_id;
  out.detector = records.front().detector;
  out.fused_rounds = k;

  std::vector<const ScoreRecord*> by_round(static_cast<std::size_t>(k), nullptr);
  for (const auto& r : records) {
    if (r.sample_id != out.sample_id || r.detector != out.detector) {
      throw std::invalid_argument("fuse_rounds: records mix samples or detectors");
    }
    if (r.round < 1 || r.round > k) continue;
    auto& slot = by_round[static_cast<std::size_t>(r.round - 1)];
    if (slot) throw std::invalid_argument("fuse_rounds: duplicate round " + std::to_string(r.round));
    slot = &r;
  }

  double sum = 0.0;
  for (int round = 1; round <= k; ++round) {
    const auto* r = by_round[static_cast<std::size_t>(round - 1)];
    if (!r) {
      throw std::invalid_argument("fuse_rounds: " + out.sample_id + " has no round " +
                                  std::to_string(round));
    }
    if (r->score) {
      sum += *r->score;
      ++out.n_valid;
    }
  }
  if (out.n_valid > 0) out.score = sum / out.n_valid;
  return out;
}

double population_stddev(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty set");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

int class_rank(std::string_view cls) {
  static constexpr std::string_view kOrder[] = {"bona_fide", "lma_ubo", "mipgan2", "morph_pipe"};
  for (int i = 0; i < 4; ++i) {
    if (kOrder[i] == cls) return i;
  }
  return 4;
}

}  // namespace

StabilityStats stability_stats(std::span<const SampleRounds> samples, int rounds) {
  if (rounds < 2) {
    throw InsufficientRounds("stability needs at least 2 rounds, got " + std::to_string(rounds));
  }
  StabilityStats out;
  out.rounds = rounds;
  for (const auto& s : samples) {
    std::vector<double> valid;
    for (std::size_t i = 0; i < s.values.size() && i < static_cast<std::size_t>(rounds); ++i) {
      if (s.values[i]) valid.push_back(*s.values[i]);
    }
    if (valid.size() < 2) continue;
    out.samples.push_back({s.sample_id, s.cls, population_stddev(valid),
                           static_cast<int>(valid.size())});
  }
  std::sort(out.samples.begin(), out.samples.end(), [](const auto& a, const auto& b) {
    const int ra = class_rank(a.cls), rb = class_rank(b.cls);
    if (ra != rb) return ra < rb;
    if (a.cls != b.cls) return a.cls < b.cls;
    return a.sample_id < b.sample_id;
  });

  std::map<std::pair<int, std::string>, std::vector<double>> by_class;
  for (const auto& s : out.samples) by_class[{class_rank(s.cls), s.cls}].push_back(s.stddev);
  for (auto& [key, values] : by_class) {
    std::sort(values.begin(), values.end());
    ClassSummary c;
    c.cls = key.second;
    c.n = values.size();
    c.min = values.front();
    c.q1 = quantile(values, 0.25);
    c.median = quantile(values, 0.5);
    c.q3 = quantile(values, 0.75);
    c.max = values.back();
    c.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(c.n);
    out.classes.push_back(c);
  }
  return out;
}

}  // namespace zsmad
