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

#include "zsmad/vision_anchor.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

namespace zsmad {

using nlohmann::json;

std::string_view to_string(DistanceMetric m) {
  return m == DistanceMetric::cosine ? "cosine" : "euclidean";
}

std::optional<DistanceMetric> parse_distance_metric(std::string_view s) {
  if (s == "cosine") return DistanceMetric::cosine;
  if (s == "euclidean") return DistanceMetric::euclidean;
  return std::nullopt;
}

MalformedLine::MalformedLine(std::size_t line, const std::string& what)
    : EmbeddingError("embeddings line " + std::to_string(line) + ": " + what), line(line) {}

std::vector<EmbeddingVector> parse_embeddings(std::istream& in) {
  std::vector<EmbeddingVector> out;
  std::map<std::string, Eigen::Index> dims;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedLine(line_no, e.what());
    }
    if (!j.is_object()) throw MalformedLine(line_no, "not a JSON object");
    if (j.contains("metadata")) continue;

    EmbeddingVector v;
    std::int64_t dim = 0;
    try {
      v.sample_id = j.at("id").get<std::string>();
      v.model_id = j.at("model").get<std::string>();
      dim = j.at("dim").get<std::int64_t>();
    } catch (const json::exception& e) {
      throw MalformedLine(line_no, e.what());
    }
    const auto it = j.find("vector");
    if (it == j.end() || !it->is_array()) throw MalformedLine(line_no, "missing vector array");
    if (dim <= 0) throw MalformedLine(line_no, "dim must be positive");
    if (static_cast<std::int64_t>(it->size()) != dim) {
      throw DimMismatch("embeddings line " + std::to_string(line_no) + ": dim " +
                        std::to_string(dim) + " but vector has " + std::to_string(it->size()) +
                        " values");
    }
    v.values.resize(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < v.values.size(); ++k) {
      const auto& x = (*it)[static_cast<std::size_t>(k)];
      if (!x.is_number()) {
        throw MalformedLine(line_no, "non-numeric vector entry at index " + std::to_string(k));
      }
      v.values[k] = x.get<double>();
      if (!std::isfinite(v.values[k])) {
        throw NonFiniteValue("embeddings line " + std::to_string(line_no) +
                             ": non-finite value at index " + std::to_string(k));
      }
    }
    if (auto [d, inserted] = dims.emplace(v.model_id, v.dim()); !inserted && d->second != v.dim()) {
      throw DimMismatch("embeddings line " + std::to_string(line_no) + ": model '" + v.model_id +
                        "' has dim " + std::to_string(d->second) + " elsewhere");
    }
    if (!seen.emplace(v.sample_id, v.model_id).second) {
      throw MalformedLine(line_no, "duplicate embedding for '" + v.sample_id + "'");
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open embeddings " + path.string());
  return parse_embeddings(in);
}

AnchorEmbedding compute_anchor(std::span<const EmbeddingVector> support) {
  if (support.empty()) throw EmptySupport("anchor needs at least one support embedding");
  const auto& first = support.front();
  for (const auto& v : support) {
    if (v.model_id != first.model_id) {
      throw MixedModels("support mixes models '" + first.model_id + "' and '" + v.model_id + "'");
    }
    if (v.dim() != first.dim()) throw DimMismatch("support vectors differ in dimension");
  }

  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return support[a].sample_id < support[b].sample_id;
  });

  Eigen::MatrixXd columns(first.dim(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t c = 0; c < order.size(); ++c) {
    columns.col(static_cast<Eigen::Index>(c)) = support[order[c]].values;
  }

  AnchorEmbedding anchor;
  anchor.model_id = first.model_id;
  anchor.values = mean_embedding(columns);
  anchor.n_support = support.size();
  return anchor;
}

double score(const AnchorEmbedding& anchor, const EmbeddingVector& input, DistanceMetric metric) {
  if (anchor.model_id != input.model_id) {
    throw MixedModels("anchor model '" + anchor.model_id + "' vs input model '" + input.model_id +
                      "'");
  }
  if (anchor.dim() != input.dim()) {
    throw DimMismatch("anchor dim " + std::to_string(anchor.dim()) + " vs input dim " +
                      std::to_string(input.dim()));
  }
  if (metric == DistanceMetric::cosine &&
      (anchor.values.squaredNorm() == 0.0 || input.values.squaredNorm() == 0.0)) {
    throw ZeroVector("cosine distance of a zero vector ('" + input.sample_id + "')");
  }
  return distance(anchor.values, input.values, metric);
}

}  // namespace zsmad
