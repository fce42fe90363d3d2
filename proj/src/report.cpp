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

#include <charconv>
#include <fstream>
#include <system_error>

#include "zsmad/metrics.hpp"

namespace zsmad {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

namespace {

json det_point_json(const DetPoint& p) {
  return {{"threshold", p.threshold}, {"macer", p.macer}, {"bpcer", p.bpcer}};
}

DetPoint det_point_from(const json& j) {
  return {j.at("threshold").get<double>(), j.at("macer").get<double>(),
          j.at("bpcer").get<double>()};
}

json stability_json(const StabilityStats& s) {
  json samples = json::array();
  for (const auto& x : s.samples) {
    samples.push_back(
        {{"sample_id", x.sample_id}, {"class", x.cls}, {"stddev", x.stddev}, {"n_valid", x.n_valid}});
  }
  json classes = json::array();
  for (const auto& c : s.classes) {
    classes.push_back({{"class", c.cls}, {"n", c.n}, {"min", c.min}, {"q1", c.q1},
                       {"median", c.median}, {"q3", c.q3}, {"max", c.max}, {"mean", c.mean}});
  }
  return {{"rounds", s.rounds}, {"classes", classes}, {"samples", samples}};
}

StabilityStats stability_from(const json& j) {
  StabilityStats s;
  s.rounds = j.at("rounds").get<int>();
  for (const auto& x : j.at("samples")) {
    s.samples.push_back({x.at("sample_id").get<std::string>(), x.at("class").get<std::string>(),
                         x.at("stddev").get<double>(), x.at("n_valid").get<int>()});
  }
  for (const auto& c : j.at("classes")) {
    ClassSummary cs;
    cs.cls = c.at("class").get<std::string>();
    cs.n = c.at("n").get<std::size_t>();
    cs.min = c.at("min").get<double>();
    cs.q1 = c.at("q1").get<double>();
    cs.median = c.at("median").get<double>();
    cs.q3 = c.at("q3").get<double>();
    cs.max = c.at("max").get<double>();
    cs.mean = c.at("mean").get<double>();
    s.classes.push_back(cs);
  }
  return s;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

json to_json(const EvalReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["protocol"] = r.protocol;
  j["detector"] = r.detector.name();
  j["rounds"] = r.rounds;
  j["eer"] = r.eer;

  json det;
  det["n_attack"] = r.det.n_attack;
  det["n_bonafide"] = r.det.n_bonafide;
  det["n_distinct_scores"] = r.det.n_distinct_scores;
  det["degenerate"] = r.det.degenerate();
  det["operating_point"] = r.det.operating_point ? det_point_json(*r.det.operating_point) : json();
  det["points"] = json::array();
  for (const auto& p : r.det.points) det["points"].push_back(det_point_json(p));
  j["det"] = det;

  j["failures"] = {{"total_queries", r.failure.total_queries},
                   {"refusals", r.failure.refusals},
                   {"unparseable", r.failure.unparseable},
                   {"transport_errors", r.failure.transport_errors},
                   {"failure_rate", r.failure.failure_rate},
                   {"failed_samples", r.failure.failed_samples}};

  json fused = json::object();
  for (const auto& [k, e] : r.fused_round_eers) fused[std::to_string(k)] = e;
  j["fused_round_eer"] = fused;

  j["stability"] = r.stability ? stability_json(*r.stability) : json();
  if (!r.stability_note.empty()) j["stability_note"] = r.stability_note;

  if (r.histograms) {
    json rows = json::array();
    for (const auto& row : r.histograms->rows) {
      rows.push_back({{"class", row.cls}, {"bucket", row.bucket}, {"count", row.count},
                      {"frequency", row.frequency}});
    }
    j["histograms"] = {{"class_totals", r.histograms->class_totals}, {"rows", rows}};
  } else {
    j["histograms"] = nullptr;
  }
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw std::invalid_argument("unsupported report schema_version " +
                                  std::to_string(r.schema_version));
    }
    r.protocol = j.at("protocol").get<std::string>();
    r.detector = parse_detector(j.at("detector").get<std::string>());
    r.rounds = j.at("rounds").get<int>();
    r.eer = j.at("eer").get<double>();

    const auto& det = j.at("det");
    r.det.n_attack = det.at("n_attack").get<std::size_t>();
    r.det.n_bonafide = det.at("n_bonafide").get<std::size_t>();
    r.det.n_distinct_scores = det.at("n_distinct_scores").get<std::size_t>();
    if (!det.at("operating_point").is_null()) {
      r.det.operating_point = det_point_from(det.at("operating_point"));
    }
    for (const auto& p : det.at("points")) r.det.points.push_back(det_point_from(p));

    const auto& f = j.at("failures");
    r.failure.total_queries = f.at("total_queries").get<std::size_t>();
    r.failure.refusals = f.at("refusals").get<std::size_t>();
    r.failure.unparseable = f.at("unparseable").get<std::size_t>();
    r.failure.transport_errors = f.at("transport_errors").get<std::size_t>();
    r.failure.failure_rate = f.at("failure_rate").get<double>();
    r.failure.failed_samples = f.at("failed_samples").get<std::vector<std::string>>();

    for (const auto& [k, e] : j.at("fused_round_eer").items()) {
      r.fused_round_eers[std::stoi(k)] = e.get<double>();
    }
    if (!j.at("stability").is_null()) r.stability = stability_from(j.at("stability"));
    r.stability_note = j.value("stability_note", "");

    if (!j.at("histograms").is_null()) {
      TraceHistogram h;
      const auto& hj = j.at("histograms");
      h.class_totals = hj.at("class_totals").get<std::map<std::string, std::size_t>>();
      for (const auto& row : hj.at("rows")) {
        h.rows.push_back({row.at("class").get<std::string>(), row.at("bucket").get<std::string>(),
                          row.at("count").get<std::size_t>(), row.at("frequency").get<double>()});
      }
      r.histograms = std::move(h);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
  return r;
}

bool same_report(const EvalReport& a, const EvalReport& b) { return to_json(a) == to_json(b); }

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  write_file(out_dir / "report.json", to_json(report).dump(2) + "\n");

  std::string det = "threshold,macer,bpcer\n";
  for (const auto& p : report.det.points) {
    det += format_double(p.threshold) + "," + format_double(p.macer) + "," +
           format_double(p.bpcer) + "\n";
  }
  write_file(out_dir / "det.csv", det);

  std::string hist = "class,bucket,count,frequency\n";
  if (report.histograms) {
    for (const auto& row : report.histograms->rows) {
      hist += row.cls + "," + row.bucket + "," + std::to_string(row.count) + "," +
              format_double(row.frequency) + "\n";
    }
  }
  write_file(out_dir / "histograms.csv", hist);

  std::string stab = "class,sample_id,stddev\n";
  if (report.stability) {
    for (const auto& s : report.stability->samples) {
      stab += s.cls + "," + s.sample_id + "," + format_double(s.stddev) + "\n";
    }
  }
  write_file(out_dir / "stability.csv", stab);
}

}  // namespace zsmad
