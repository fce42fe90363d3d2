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

#include "zsmad/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "zsmad/response_parser.hpp"

namespace zsmad {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

std::string fmt_rate(const FailureStats& f) {
  return format_double(f.failure_rate) + " (" + std::to_string(f.refusals) + " refusals, " +
         std::to_string(f.unparseable) + " unparseable, " + std::to_string(f.transport_errors) +
         " transport errors, " + std::to_string(f.total_queries) + " queries; " +
         std::to_string(f.failed_samples.size()) + " samples failed every round)";
}

json failure_stats_json(const FailureStats& f) {
  return {{"total_queries", f.total_queries},     {"refusals", f.refusals},
          {"unparseable", f.unparseable},         {"transport_errors", f.transport_errors},
          {"failure_rate", f.failure_rate},       {"failed_samples", f.failed_samples}};
}

}  // namespace

MissingEmbedding::MissingEmbedding(std::vector<std::string> ids_, const std::string& model)
    : EmbeddingError("no embedding for model '" + model + "': " + join(ids_, ", ")),
      ids(std::move(ids_)) {}

ProviderConfig resolve_provider_config(const std::optional<fs::path>& file,
                                       const ProviderOverrides& o) {
  ProviderConfig c = file ? load_provider_config(*file) : ProviderConfig{};
  if (o.base_url) c.base_url = *o.base_url;
  if (o.model) c.model_name = *o.model;
  if (o.api_key_env) c.api_key_env = *o.api_key_env;
  if (o.max_parallel) c.max_parallel = *o.max_parallel;
  if (o.max_retries) c.max_retries = *o.max_retries;
  if (o.request_timeout) c.request_timeout = *o.request_timeout;
  if (o.temperature) c.temperature = *o.temperature;
  c.validate();
  return c;
}

std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& config) {
  if (config.is_mock()) return ScriptedProvider::from_jsonl(config.mock_script());
  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("environment variable " + config.api_key_env +
                    " is not set; it must hold the API key for " + config.base_url);
  }
  return std::make_unique<HttpChatProvider>(key);
}

// ---------------------------------------------------------------------------
// Score files

std::vector<ScoreRecord> load_score_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file " + path.string());
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(score_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_score_records(const fs::path& path, std::vector<ScoreRecord> records) {
  std::sort(records.begin(), records.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
    if (a.detector != b.detector) return a.detector < b.detector;
    if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
    return a.round < b.round;
  });
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

void write_failures(const fs::path& out, const std::string& command,
                    const std::vector<std::string>& failures) {
  const auto path = out / "failures.json";
  if (failures.empty()) {
    std::error_code ec;
    fs::remove(path, ec);
    return;
  }
  ensure_dir(out);
  write_text(path, json{{"command", command}, {"failures", failures}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// run-llm

RunLlmResult run_llm(const RunLlmOptions& options, std::ostream& log, ChatProvider* provider) {
  if (options.prompts.empty()) throw ConfigError("no prompts selected");
  for (int p : options.prompts) {
    if (!is_valid_prompt_id(p)) throw ConfigError("unknown prompt id " + std::to_string(p));
  }
  if (options.rounds < 1) throw ConfigError("--rounds must be >= 1");

  const Manifest manifest = load_manifest(options.manifest);
  const ProviderConfig config = resolve_provider_config(options.provider_config, options.overrides);
  std::unique_ptr<ChatProvider> owned;
  if (provider == nullptr) {
    owned = make_provider(config);
    provider = owned.get();
  }

  std::vector<int> prompts = options.prompts;
  std::sort(prompts.begin(), prompts.end());
  prompts.erase(std::unique(prompts.begin(), prompts.end()), prompts.end());

  ensure_dir(options.out);
  ResponseCache cache(options.out / "responses.jsonl");
  LlmClient client(config, *provider, cache);

  RunLlmResult result;
  result.batch = run_batch(manifest, prompts, options.rounds, client);
  result.failures = result.batch.failures;

  std::vector<ScoreRecord> records;
  std::string verdict_lines;
  const auto eval = manifest.with_role(Role::eval);
  for (int p : prompts) {
    std::vector<const Sample*> ordered;
    for (const auto& s : eval) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const Sample* a, const Sample* b) { return a->id < b->id; });
    for (const Sample* s : ordered) {
      for (int round = 1; round <= options.rounds; ++round) {
        const auto cached = cache.lookup({s->id, p, round});
        if (!cached) continue;  // image could not be read; listed in failures

        ScoreRecord rec{s->id, Detector::llm(p), round, std::nullopt, FailureKind::none};
        json line = {{"sample_id", s->id},
                     {"prompt_id", p},
                     {"round", round},
                     {"class", sample_class(*s)},
                     {"status", to_string(cached->status)}};
        if (cached->status == ResponseStatus::transport_error) {
          rec.failure = FailureKind::transport_error;
          line["verdict"] = nullptr;
        } else {
          const ParsedVerdict v = cached->status == ResponseStatus::refusal
                                      ? ParsedVerdict(verdict::Refusal{})
                                      : parse(p, cached->text);
          rec.failure = failure_kind(v);
          rec.score = verdict_to_score(p, v);
          line["verdict"] = to_json(v);
        }
        records.push_back(std::move(rec));
        verdict_lines += line.dump() + "\n";
      }
    }
  }

  json per_prompt = json::array();
  for (int p : prompts) {
    std::vector<ScoreRecord> mine;
    for (const auto& r : records) {
      if (r.detector.prompt_id == p) mine.push_back(r);
    }
    PromptFailureSummary summary{p, failure_rate(mine)};
    log << "prompt " << p << ": failure rate " << fmt_rate(summary.stats) << "\n";
    per_prompt.push_back({{"prompt_id", p}, {"failures", failure_stats_json(summary.stats)}});
    result.per_prompt.push_back(std::move(summary));
  }

  result.n_score_records = records.size();
  write_text(options.out / "verdicts.jsonl", verdict_lines);
  write_score_records(options.out / "llm_scores.jsonl", std::move(records));

  json summary = {{"manifest", manifest.name},
                  {"model", config.model_name},
                  {"prompts", prompts},
                  {"rounds", options.rounds},
                  {"score_records", result.n_score_records},
                  {"per_prompt", per_prompt}};
  write_text(options.out / "run_llm_summary.json", summary.dump(2) + "\n");

  log << "queries: " << result.batch.cached << " cached, " << result.batch.ok << " ok, "
      << result.batch.refusal << " refusals, " << result.batch.transport_error
      << " transport errors\n";
  return result;
}

// ---------------------------------------------------------------------------
// run-vision

std::optional<MetricSelection> parse_metric_selection(std::string_view s) {
  if (s == "cosine") return MetricSelection::cosine;
  if (s == "euclidean") return MetricSelection::euclidean;
  if (s == "both") return MetricSelection::both;
  return std::nullopt;
}

RunVisionResult run_vision(const RunVisionOptions& options, std::ostream& log) {
  const Manifest manifest = load_manifest(options.manifest);
  const auto embeddings = load_embeddings(options.embeddings);
  if (embeddings.empty()) throw EmbeddingError("no embeddings in " + options.embeddings.string());

  std::map<std::string, std::map<std::string, const EmbeddingVector*>> by_model;
  for (const auto& e : embeddings) by_model[e.model_id][e.sample_id] = &e;

  std::vector<DistanceMetric> metrics;
  if (options.metric != MetricSelection::euclidean) metrics.push_back(DistanceMetric::cosine);
  if (options.metric != MetricSelection::cosine) metrics.push_back(DistanceMetric::euclidean);

  const auto eval = manifest.with_role(Role::eval);
  const auto support = manifest.with_role(Role::support);

  RunVisionResult result;
  std::vector<ScoreRecord> records;
  for (const auto& [model, vectors] : by_model) {
    std::vector<std::string> missing;
    for (const auto* set : {&support, &eval}) {
      for (const auto& s : *set) {
        if (!vectors.count(s.id)) missing.push_back(s.id);
      }
    }
    if (!missing.empty()) throw MissingEmbedding(std::move(missing), model);

    std::vector<EmbeddingVector> support_vectors;
    for (const auto& s : support) support_vectors.push_back(*vectors.at(s.id));
    const AnchorEmbedding anchor = compute_anchor(support_vectors);
    log << "model " << model << ": anchor from " << anchor.n_support << " support samples, dim "
        << anchor.dim() << "\n";

    for (const auto& s : eval) {
      for (auto metric : metrics) {
        records.push_back({s.id, Detector::vision(model, metric), 1,
                           score(anchor, *vectors.at(s.id), metric), FailureKind::none});
      }
    }
    result.anchors.push_back(anchor);
  }

  ensure_dir(options.out);
  result.n_score_records = records.size();
  write_score_records(options.out / "vision_scores.jsonl", std::move(records));
  log << "wrote " << result.n_score_records << " vision scores\n";
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

struct VerdictRow {
  std::string sample_id;
  int round = 0;
  ParsedVerdict verdict;
};

std::map<int, std::vector<VerdictRow>> load_verdicts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open verdicts file " + path.string());
  std::map<int, std::vector<VerdictRow>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      if (j.at("verdict").is_null()) continue;
      out[j.at("prompt_id").get<int>()].push_back({j.at("sample_id").get<std::string>(),
                                                   j.at("round").get<int>(),
                                                   verdict_from_json(j.at("verdict"))});
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

EvalReport build_report(const Manifest& protocol, const Detector& detector,
                        const std::vector<ScoreRecord>& all, std::optional<int> rounds_flag,
                        const std::map<int, std::vector<VerdictRow>>* verdicts,
                        std::vector<std::string>& warnings) {
  std::map<std::string, Label> labels;
  std::map<std::string, std::string> classes;
  for (const auto& s : protocol.samples) {
    labels[s.id] = s.label;
    classes[s.id] = std::string(sample_class(s));
  }

  int max_round = 0;
  for (const auto& r : all) {
    if (labels.count(r.sample_id)) max_round = std::max(max_round, r.round);
  }
  if (max_round == 0) throw std::runtime_error("no scores for any sample of the protocol");
  const bool llm = detector.kind == Detector::Kind::llm_prompt;
  const int k = llm && rounds_flag ? *rounds_flag : max_round;

  std::vector<ScoreRecord> records;
  std::set<std::string> seen;
  for (const auto& r : all) {
    if (labels.count(r.sample_id) && r.round <= k) {
      records.push_back(r);
      seen.insert(r.sample_id);
    }
  }
  if (seen.size() != labels.size()) {
    warnings.push_back(std::to_string(labels.size() - seen.size()) + " samples have no scores");
  }

  EvalReport rep;
  rep.protocol = protocol.name;
  rep.detector = detector;
  rep.rounds = k;
  rep.failure = failure_rate(records);
  rep.det = det_sweep(fused_labeled_scores(records, labels, k));
  rep.eer = eer(rep.det);
  rep.fused_round_eers = fused_round_table(records, labels, k);

  if (k >= 2) {
    std::map<std::string, SampleRounds> per_sample;
    for (const auto& r : records) {
      auto& sr = per_sample[r.sample_id];
      sr.sample_id = r.sample_id;
      sr.cls = classes.at(r.sample_id);
      sr.values.resize(static_cast<std::size_t>(k));
      if (r.score) sr.values[static_cast<std::size_t>(r.round - 1)] = llm ? *r.score * 100.0 : *r.score;
    }
    std::vector<SampleRounds> rows;
    for (auto& [id, sr] : per_sample) rows.push_back(std::move(sr));
    rep.stability = stability_stats(rows, k);
  } else {
    rep.stability_note = "stability needs at least 2 rounds; this detector has 1";
  }

  if (llm && verdicts && (detector.prompt_id == 7 || detector.prompt_id == 8)) {
    const auto it = verdicts->find(detector.prompt_id);
    if (it != verdicts->end()) {
      std::vector<ClassedVerdict> cv;
      for (const auto& v : it->second) {
        if (labels.count(v.sample_id) && v.round <= k) cv.push_back({classes.at(v.sample_id), v.verdict});
      }
      rep.histograms = trace_histograms(cv);
    }
  }
  return rep;
}

}  // namespace

EvaluateResult evaluate(const EvaluateOptions& options, std::ostream& log) {
  if (options.rounds && *options.rounds < 1) throw ConfigError("--rounds must be >= 1");
  const Manifest manifest = load_manifest(options.manifest);

  std::vector<fs::path> score_files = options.scores;
  if (score_files.empty()) {
    for (const char* name : {"llm_scores.jsonl", "vision_scores.jsonl"}) {
      if (fs::exists(options.out / name)) score_files.push_back(options.out / name);
    }
  }
  if (score_files.empty()) throw ConfigError("no score files found in " + options.out.string());

  std::map<Detector, std::vector<ScoreRecord>> by_detector;
  for (const auto& f : score_files) {
    for (auto& r : load_score_records(f)) by_detector[r.detector].push_back(std::move(r));
  }

  std::optional<fs::path> verdict_path = options.verdicts;
  if (!verdict_path && fs::exists(options.out / "verdicts.jsonl")) {
    verdict_path = options.out / "verdicts.jsonl";
  }
  std::optional<std::map<int, std::vector<VerdictRow>>> verdicts;
  if (verdict_path) verdicts = load_verdicts(*verdict_path);

  std::vector<MorphAlgorithm> protocols = options.protocols;
  if (protocols.empty()) {
    for (auto alg : kMorphAlgorithms) {
      const bool present = std::any_of(manifest.samples.begin(), manifest.samples.end(), [&](const Sample& s) {
        return s.role == Role::eval && s.morph_algorithm == alg;
      });
      if (present) protocols.push_back(alg);
    }
  }
  if (protocols.empty()) throw EmptyProtocol("manifest has no eval morph samples");

  EvaluateResult result;
  std::map<std::string, std::map<std::string, double>> table;  // detector -> protocol -> eer
  std::vector<std::string> protocol_names;
  const fs::path reports_dir = options.out / "reports";

  for (auto alg : protocols) {
    const std::string pname(to_string(alg));
    protocol_names.push_back(pname);
    Manifest protocol;
    try {
      protocol = filter_by_protocol(manifest, alg);
    } catch (const EmptyProtocol& e) {
      result.failures.push_back("protocol " + pname + ": " + e.what());
      log << "protocol " << pname << ": " << e.what() << "\n";
      continue;
    }
    for (const auto& [detector, records] : by_detector) {
      const std::string where = "protocol " + pname + ", detector " + detector.name();
      try {
        std::vector<std::string> warnings;
        EvalReport rep = build_report(protocol, detector, records, options.rounds,
                                      verdicts ? &*verdicts : nullptr, warnings);
        emit_report(rep, reports_dir / pname / detector.slug());
        for (const auto& w : warnings) result.failures.push_back(where + ": " + w);
        log << pname << " " << detector.name() << ": EER " << format_double(rep.eer)
            << (rep.det.degenerate() ? " (degenerate)" : "") << ", failure rate "
            << format_double(rep.failure.failure_rate) << "\n";
        table[detector.name()][pname] = rep.eer;
        result.reports.push_back(std::move(rep));
      } catch (const std::exception& e) {
        result.failures.push_back(where + ": " + e.what());
        log << where << ": " << e.what() << "\n";
      }
    }
  }

  ensure_dir(reports_dir);
  json detectors = json::array();
  std::string csv = "detector";
  for (const auto& p : protocol_names) csv += "," + p;
  csv += ",overall\n";
  for (const auto& [name, eers] : table) {
    json row = {{"detector", name}, {"eer", eers}};
    csv += name;
    double sum = 0.0;
    for (const auto& p : protocol_names) {
      const auto it = eers.find(p);
      csv += ",";
      if (it != eers.end()) {
        csv += format_double(it->second);
        sum += it->second;
      }
    }
    const double overall = sum / static_cast<double>(eers.size());
    row["overall"] = overall;
    csv += "," + format_double(overall) + "\n";
    detectors.push_back(std::move(row));
  }
  json summary = {{"schema_version", kReportSchemaVersion},
                  {"protocols", protocol_names},
                  {"detectors", detectors}};
  write_text(reports_dir / "summary.json", summary.dump(2) + "\n");
  write_text(reports_dir / "summary.csv", csv);
  return result;
}

}  // namespace zsmad
