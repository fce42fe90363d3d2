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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zsmad {

enum class DistanceMetric { cosine, euclidean };

std::string_view to_string(DistanceMetric m);
std::optional<DistanceMetric> parse_distance_metric(std::string_view s);

// ---------------------------------------------------------------------------
// Dense kernels. Any Eigen vector expression works as an argument.

/// L2 norm of the difference.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  return (a - b).norm();
}

/// 1 - cos(a, b), clamped to [0, 2]. Undefined for zero vectors; callers check.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_distance(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar sim = a.dot(b) / (a.norm() * b.norm());
  return std::clamp(Scalar(1) - sim, Scalar(0), Scalar(2));
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar distance(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b, DistanceMetric metric) {
  return metric == DistanceMetric::cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

/// Column mean of a dim x N matrix of embeddings.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> mean_embedding(
    const Eigen::MatrixBase<Derived>& columns) {
  return columns.rowwise().mean();
}

// ---------------------------------------------------------------------------
// Domain types

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct BasicEmbedding {
  std::string sample_id;
  std::string model_id;
  DenseVector<Scalar> values;

  Eigen::Index dim() const { return values.size(); }
};

template <typename Scalar>
struct BasicAnchor {
  std::string model_id;
  DenseVector<Scalar> values;
  std::size_t n_support = 0;

  Eigen::Index dim() const { return values.size(); }
};

using EmbeddingVector = BasicEmbedding<double>;
using AnchorEmbedding = BasicAnchor<double>;

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DimMismatch : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};
class NonFiniteValue : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};
class MalformedLine : public EmbeddingError {
 public:
  MalformedLine(std::size_t line, const std::string& what);
  std::size_t line;
};
class EmptySupport : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};
class MixedModels : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};
class ZeroVector : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

/// JSONL, one `{"id", "model", "dim", "vector"}` object per line. Lines whose
/// object carries a top-level "metadata" key are skipped. Dimensions must
/// agree per model and (id, model) pairs must be unique.
std::vector<EmbeddingVector> parse_embeddings(std::istream& in);
std::vector<EmbeddingVector> load_embeddings(const std::filesystem::path& path);

/// Elementwise mean of the support vectors. Vectors are summed in sample-id
/// order, so the result does not depend on the order they are passed in.
AnchorEmbedding compute_anchor(std::span<const EmbeddingVector> support);

/// Distance from the bona fide anchor; larger means more attack-like.
double score(const AnchorEmbedding& anchor, const EmbeddingVector& input, DistanceMetric metric);

}  // namespace zsmad
