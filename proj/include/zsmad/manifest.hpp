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
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zsmad {

enum class Label { bona_fide, morph };
enum class MorphAlgorithm { none, lma_ubo, mipgan2, morph_pipe };
enum class Medium { digital, print_scan };
enum class Role { eval, support };

std::string_view to_string(Label v);
std::string_view to_string(MorphAlgorithm v);
std::string_view to_string(Medium v);
std::string_view to_string(Role v);

std::optional<Label> parse_label(std::string_view s);
std::optional<MorphAlgorithm> parse_morph_algorithm(std::string_view s);
std::optional<Medium> parse_medium(std::string_view s);
std::optional<Role> parse_role(std::string_view s);

/// The three attack algorithms, in reporting order.
inline constexpr MorphAlgorithm kMorphAlgorithms[] = {
    MorphAlgorithm::lma_ubo, MorphAlgorithm::mipgan2, MorphAlgorithm::morph_pipe};

struct Sample {
  std::string id;
  std::string path;  // as written in the manifest
  Label label = Label::bona_fide;
  MorphAlgorithm morph_algorithm = MorphAlgorithm::none;
  Medium medium = Medium::digital;
  Role role = Role::eval;

  bool operator==(const Sample&) const = default;
};

/// Class used for per-class summaries: "bona_fide" or the morph algorithm name.
std::string_view sample_class(const Sample& s);

struct Manifest {
  std::string name;
  /// Directory that relative sample paths are resolved against. Not serialized.
  std::filesystem::path base_dir;
  std::vector<Sample> samples;

  std::filesystem::path resolve(const Sample& s) const;
  const Sample* find(std::string_view id) const;
  std::vector<Sample> with_role(Role role) const;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad enum value, wrong column count, or bad header. `line` is 1-based.
class MalformedRow : public ManifestError {
 public:
  MalformedRow(std::size_t line, const std::string& what);
  std::size_t line;
};

class DuplicateId : public ManifestError {
 public:
  DuplicateId(std::size_t line, const std::string& id);
  std::size_t line;
};

class InvariantViolation : public ManifestError {
 public:
  InvariantViolation(std::size_t line, const std::string& what);
  std::size_t line;
};

class EmptyProtocol : public ManifestError {
 public:
  using ManifestError::ManifestError;
};

/// Checks the per-sample invariants; returns a description of the first
/// violation or nullopt.
std::optional<std::string> check_sample(const Sample& s);

Manifest parse_manifest(std::istream& in, std::string name,
                        std::filesystem::path base_dir);
Manifest load_manifest(const std::filesystem::path& path);

/// Header plus one LF-terminated row per sample, in manifest order.
std::string serialize_manifest(const Manifest& m);

/// All bona fide eval samples plus eval morphs of `algorithm`. Support rows
/// are dropped. Throws EmptyProtocol if either class ends up empty.
Manifest filter_by_protocol(const Manifest& m, MorphAlgorithm algorithm);

}  // namespace zsmad
