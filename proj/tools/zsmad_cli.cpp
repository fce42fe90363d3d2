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

#include <csignal>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "zsmad/pipeline.hpp"

namespace {

using namespace zsmad;
namespace fs = std::filesystem;

std::vector<int> parse_prompt_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("bad prompt id '" + item + "'");
    out.push_back(id);
  }
  return out;
}

std::vector<MorphAlgorithm> parse_protocols(const std::vector<std::string>& names) {
  std::vector<MorphAlgorithm> out;
  for (const auto& n : names) {
    const auto alg = parse_morph_algorithm(n);
    if (!alg || *alg == MorphAlgorithm::none) throw ConfigError("unknown protocol '" + n + "'");
    out.push_back(*alg);
  }
  return out;
}

template <typename T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

int report_error(const std::string& command, const fs::path& out, const std::string& what,
                 int code) {
  std::cerr << "zsmad " << command << ": " << what << "\n";
  try {
    if (!out.empty()) write_failures(out, command, {what});
  } catch (const std::exception&) {
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot morphing attack detection benchmark toolkit"};
  app.require_subcommand(1);

  // run-llm
  auto* llm = app.add_subcommand("run-llm", "Query the LLM for every eval sample and score the replies");
  fs::path llm_manifest, llm_out = "out", llm_config;
  std::string llm_prompts = "1,2,3,4,5,6,7,8";
  int llm_rounds = 5;
  std::string base_url, model, api_key_env;
  int max_parallel = 0, max_retries = 0;
  double timeout = 0, temperature = 0;
  llm->add_option("--manifest", llm_manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  llm->add_option("--out", llm_out, "Output directory")->capture_default_str();
  llm->add_option("--prompts", llm_prompts, "Comma separated prompt ids")->capture_default_str();
  llm->add_option("--rounds", llm_rounds, "Rounds per query")->capture_default_str();
  auto* cfg_opt = llm->add_option("--provider-config", llm_config, "Provider config JSON")
                      ->check(CLI::ExistingFile);
  auto* url_opt = llm->add_option("--base-url", base_url, "Override base_url");
  auto* model_opt = llm->add_option("--model", model, "Override model");
  auto* key_opt = llm->add_option("--api-key-env", api_key_env, "Override api_key_env");
  auto* par_opt = llm->add_option("--max-parallel", max_parallel, "Override max_parallel");
  auto* ret_opt = llm->add_option("--max-retries", max_retries, "Override max_retries");
  auto* to_opt = llm->add_option("--request-timeout", timeout, "Override request_timeout (s)");
  auto* temp_opt = llm->add_option("--temperature", temperature, "Override temperature");

  // run-vision
  auto* vis = app.add_subcommand("run-vision", "Score eval samples by distance to the bona fide anchor");
  fs::path vis_manifest, vis_out = "out", vis_embeddings;
  std::string vis_metric = "both";
  vis->add_option("--manifest", vis_manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  vis->add_option("--out", vis_out, "Output directory")->capture_default_str();
  vis->add_option("--embeddings", vis_embeddings, "Embeddings JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  vis->add_option("--metric", vis_metric, "cosine, euclidean or both")
      ->check(CLI::IsMember({"cosine", "euclidean", "both"}))
      ->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compute DET, EER, fusion, stability and histograms");
  fs::path ev_manifest, ev_out = "out", ev_verdicts;
  std::vector<fs::path> ev_scores;
  std::vector<std::string> ev_protocols;
  int ev_rounds = 0;
  ev->add_option("--manifest", ev_manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Directory holding the score files")->capture_default_str();
  ev->add_option("--scores", ev_scores, "Score JSONL files")->check(CLI::ExistingFile);
  auto* verd_opt = ev->add_option("--verdicts", ev_verdicts, "Verdicts JSONL")->check(CLI::ExistingFile);
  ev->add_option("--protocols", ev_protocols, "lma_ubo, mipgan2, morph_pipe")->delimiter(',');
  auto* ev_rounds_opt = ev->add_option("--rounds", ev_rounds, "Rounds to fuse for LLM detectors");

  // mock-server
  auto* ms = app.add_subcommand("mock-server", "Serve scripted replies over the chat-completions API");
  fs::path ms_script;
  std::string ms_host = "127.0.0.1", ms_key;
  int ms_port = 8089;
  ms->add_option("--script", ms_script, "Mock script JSONL")->required()->check(CLI::ExistingFile);
  ms->add_option("--host", ms_host)->capture_default_str();
  ms->add_option("--port", ms_port)->capture_default_str();
  auto* ms_key_opt = ms->add_option("--require-key", ms_key, "Reject requests without this bearer key");

  CLI11_PARSE(app, argc, argv);

  if (llm->parsed()) {
    try {
      RunLlmOptions o;
      o.manifest = llm_manifest;
      o.out = llm_out;
      o.prompts = parse_prompt_list(llm_prompts);
      o.rounds = llm_rounds;
      if (cfg_opt->count()) o.provider_config = llm_config;
      o.overrides.base_url = opt_if(url_opt, base_url);
      o.overrides.model = opt_if(model_opt, model);
      o.overrides.api_key_env = opt_if(key_opt, api_key_env);
      o.overrides.max_parallel = opt_if(par_opt, max_parallel);
      o.overrides.max_retries = opt_if(ret_opt, max_retries);
      o.overrides.request_timeout = opt_if(to_opt, timeout);
      o.overrides.temperature = opt_if(temp_opt, temperature);
      const auto result = run_llm(o, std::cout);
      write_failures(llm_out, "run-llm", result.failures);
      if (!result.failures.empty()) {
        std::cerr << "zsmad run-llm: " << result.failures.size()
                  << " queries incomplete; see failures.json\n";
        return 1;
      }
      return 0;
    } catch (const AuthError& e) {
      return report_error("run-llm", llm_out, std::string("AuthError: ") + e.what(), 3);
    } catch (const std::exception& e) {
      return report_error("run-llm", llm_out, e.what(), 2);
    }
  }

  if (vis->parsed()) {
    try {
      RunVisionOptions o{vis_manifest, vis_out, vis_embeddings, *parse_metric_selection(vis_metric)};
      run_vision(o, std::cout);
      write_failures(vis_out, "run-vision", {});
      return 0;
    } catch (const MissingEmbedding& e) {
      std::vector<std::string> f;
      for (const auto& id : e.ids) f.push_back("missing embedding: " + id);
      std::cerr << "zsmad run-vision: MissingEmbedding: " << e.what() << "\n";
      write_failures(vis_out, "run-vision", f);
      return 2;
    } catch (const std::exception& e) {
      return report_error("run-vision", vis_out, e.what(), 2);
    }
  }

  if (ev->parsed()) {
    try {
      EvaluateOptions o;
      o.manifest = ev_manifest;
      o.out = ev_out;
      o.scores = ev_scores;
      if (verd_opt->count()) o.verdicts = ev_verdicts;
      o.protocols = parse_protocols(ev_protocols);
      if (ev_rounds_opt->count()) o.rounds = ev_rounds;
      const auto result = evaluate(o, std::cout);
      write_failures(ev_out, "evaluate", result.failures);
      if (!result.failures.empty()) {
        std::cerr << "zsmad evaluate: " << result.failures.size()
                  << " problems; see failures.json\n";
        return 1;
      }
      return 0;
    } catch (const std::exception& e) {
      return report_error("evaluate", ev_out, e.what(), 2);
    }
  }

  if (ms->parsed()) {
    try {
      auto provider = ScriptedProvider::from_jsonl(ms_script);
      MockChatServer server(*provider);
      if (ms_key_opt->count()) server.require_api_key(ms_key);
      std::cout << "serving " << ms_script.string() << " on http://" << ms_host << ":" << ms_port
                << "/v1" << std::endl;
      server.listen_blocking(ms_host, ms_port);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "zsmad mock-server: " << e.what() << "\n";
      return 2;
    }
  }
  return 0;
}
