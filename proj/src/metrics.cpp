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

#include "zsmad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "zsmad/prompts.hpp"

namespace zsmad {

DetCurve det_sweep(std::span<const LabeledScore> scores) {
  std::vector<double> attacks, bona;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) {
      throw std::invalid_argument("det_sweep: non-finite score for '" + s.sample_id + "'");
    }
    (s.label == Label::morph ? attacks : bona).push_back(s.score);
  }
  if (attacks.empty() || bona.empty()) {
    throw SingleClass("det_sweep needs both classes (attacks=" + std::to_string(attacks.size()) +
                      ", bona fide=" + std::to_string(bona.size()) + ")");
  }
  std::sort(attacks.begin(), attacks.end());
  std::sort(bona.begin(), bona.end());

  std::vector<double> thresholds;
  thresholds.reserve(attacks.size() + bona.size());
  std::merge(attacks.begin(), attacks.end(), bona.begin(), bona.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  DetCurve det;
  det.n_attack = attacks.size();
  det.n_bonafide = bona.size();
  det.n_distinct_scores = thresholds.size();

  const double na = static_cast<double>(attacks.size());
  const double nb = static_cast<double>(bona.size());
  auto point_at = [&](double t) {
    const auto attacks_below = std::lower_bound(attacks.begin(), attacks.end(), t) - attacks.begin();
    const auto bona_below = std::lower_bound(bona.begin(), bona.end(), t) - bona.begin();
    return DetPoint{t, static_cast<double>(attacks_below) / na,
                    static_cast<double>(bona.size() - static_cast<std::size_t>(bona_below)) / nb};
  };
  auto push = [&](const DetPoint& p) {
    if (!det.points.empty() && det.points.back().macer == p.macer &&
        det.points.back().bpcer == p.bpcer) {
      return;
    }
    det.points.push_back(p);
  };

  push(point_at(thresholds.front() - 1.0));
  for (double t : thresholds) push(point_at(t));
  push(point_at(thresholds.back() + 1.0));

  if (det.degenerate()) det.operating_point = point_at(thresholds.back());
  return det;
}

double eer(const DetCurve& det) {
  if (det.points.empty()) throw std::invalid_argument("eer: empty DET curve");
  const auto& pts = det.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].macer - pts[i].bpcer;
    if (d == 0.0) return pts[i].macer;
    if (d > 0.0) {
      if (i == 0) return pts[0].macer;  // unreachable for a well-formed sweep
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      const double d0 = a.macer - a.bpcer;
      const double lambda = -d0 / (d - d0);
      return a.macer + lambda * (b.macer - a.macer);
    }
  }
  return pts.back().macer;
}

std::vector<LabeledScore> fused_labeled_scores(std::span<const ScoreRecord> records,
                                               const std::map<std::string, Label>& labels, int k,
                                               std::vector<std::string>* failed) {
  std::map<std::string, std::vector<ScoreRecord>> by_sample;
  for (const auto& r : records) {
    if (labels.count(r.sample_id)) by_sample[r.sample_id].push_back(r);
  }
  std::vector<LabeledScore> out;
  for (const auto& [id, recs] : by_sample) {
    const auto fused = fuse_rounds(recs, k);
    if (fused.score) {
      out.push_back({id, *fused.score, labels.at(id)});
    } else if (failed) {
      failed->push_back(id);
    }
  }
  return out;
}

std::map<int, double> fused_round_table(std::span<const ScoreRecord> records,
                                        const std::map<std::string, Label>& labels, int k_max) {
  if (k_max < 1) throw std::invalid_argument("fused_round_table: k_max must be >= 1");
  std::map<int, double> out;
  for (int k = 1; k <= k_max; ++k) {
    const auto scores = fused_labeled_scores(records, labels, k);
    out[k] = eer(det_sweep(scores));
  }
  return out;
}

FailureStats failure_rate(std::span<const ScoreRecord> records) {
  FailureStats f;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_sample;  // (failed, total)
  for (const auto& r : records) {
    ++f.total_queries;
    auto& [failed, total] = per_sample[r.sample_id];
    ++total;
    switch (r.failure) {
      case FailureKind::none: break;
      case FailureKind::refusal: ++f.refusals; ++failed; break;
      case FailureKind::unparseable: ++f.unparseable; ++failed; break;
      case FailureKind::transport_error: ++f.transport_errors; ++failed; break;
    }
  }
  if (f.total_queries > 0) {
    f.failure_rate = static_cast<double>(f.refusals + f.unparseable) /
                     static_cast<double>(f.total_queries);
  }
  for (const auto& [id, counts] : per_sample) {
    if (counts.first == counts.second) f.failed_samples.push_back(id);
  }
  return f;
}

namespace {

int class_order(const std::string& cls) {
  static const std::string kOrder[] = {"bona_fide", "lma_ubo", "mipgan2", "morph_pipe"};
  for (int i = 0; i < 4; ++i) {
    if (kOrder[i] == cls) return i;
  }
  return 4;
}

}  // namespace

TraceHistogram trace_histograms(std::span<const ClassedVerdict> verdicts) {
  TraceHistogram h;
  bool saw_traces = false, saw_items = false;
  std::map<std::string, std::map<std::string, std::size_t>> counts;

  for (const auto& cv : verdicts) {
    std::set<std::string> buckets;
    if (const auto* t = std::get_if<verdict::TraceReport>(&cv.verdict)) {
      saw_traces = true;
      if (!t->detected) {
        buckets.insert("none");
      } else if (t->traces.empty()) {
        buckets.insert("unspecified");
      } else {
        for (const auto& tr : t->traces) buckets.insert(std::string(to_string(tr.region)));
      }
    } else if (const auto* c = std::get_if<verdict::ArtifactChecklist>(&cv.verdict)) {
      saw_items = true;
      if (!c->detected) {
        buckets.insert("none");
      } else if (c->items.empty()) {
        buckets.insert("unspecified");
      } else {
        for (int item : c->items) buckets.insert("item_" + std::to_string(item));
      }
    } else {
      continue;
    }
    ++h.class_totals[cv.cls];
    for (const auto& b : buckets) ++counts[cv.cls][b];
  }

  std::vector<std::string> order;
  if (saw_traces) {
    for (auto r : kAllRegions) order.emplace_back(to_string(r));
  }
  if (saw_items) {
    for (std::size_t i = 1; i <= kArtifactItemCount; ++i) order.push_back("item_" + std::to_string(i));
  }
  order.emplace_back("unspecified");
  order.emplace_back("none");

  std::vector<std::string> classes;
  for (const auto& [cls, n] : h.class_totals) classes.push_back(cls);
  std::stable_sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) {
    return class_order(a) < class_order(b);
  });

  for (const auto& cls : classes) {
    const double total = static_cast<double>(h.class_totals.at(cls));
    for (const auto& bucket : order) {
      const auto& m = counts[cls];
      const auto it = m.find(bucket);
      const std::size_t n = it == m.end() ? 0 : it->second;
      h.rows.push_back({cls, bucket, n, static_cast<double>(n) / total});
    }
  }
  return h;
}

}  // namespace zsmad
