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

#include "zsmad/manifest.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace zsmad {
namespace {

constexpr std::string_view kHeader = "id,path,label,morph_algorithm,medium,role";
constexpr std::size_t kColumns = 6;

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Label, std::string_view>, 2> kLabels{
    {{Label::bona_fide, "bona_fide"}, {Label::morph, "morph"}}};
constexpr std::array<std::pair<MorphAlgorithm, std::string_view>, 4> kAlgorithms{
    {{MorphAlgorithm::none, "none"},
     {MorphAlgorithm::lma_ubo, "lma_ubo"},
     {MorphAlgorithm::mipgan2, "mipgan2"},
     {MorphAlgorithm::morph_pipe, "morph_pipe"}}};
constexpr std::array<std::pair<Medium, std::string_view>, 2> kMedia{
    {{Medium::digital, "digital"}, {Medium::print_scan, "print_scan"}}};
constexpr std::array<std::pair<Role, std::string_view>, 2> kRoles{
    {{Role::eval, "eval"}, {Role::support, "support"}}};

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string_view to_string(Label v) { return name_of(kLabels, v); }
std::string_view to_string(MorphAlgorithm v) { return name_of(kAlgorithms, v); }
std::string_view to_string(Medium v) { return name_of(kMedia, v); }
std::string_view to_string(Role v) { return name_of(kRoles, v); }

std::optional<Label> parse_label(std::string_view s) { return lookup(kLabels, s); }
std::optional<MorphAlgorithm> parse_morph_algorithm(std::string_view s) {
  return lookup(kAlgorithms, s);
}
std::optional<Medium> parse_medium(std::string_view s) { return lookup(kMedia, s); }
std::optional<Role> parse_role(std::string_view s) { return lookup(kRoles, s); }

std::string_view sample_class(const Sample& s) {
  return s.label == Label::bona_fide ? "bona_fide" : to_string(s.morph_algorithm);
}

MalformedRow::MalformedRow(std::size_t line, const std::string& what)
    : ManifestError("manifest line " + std::to_string(line) + ": " + what), line(line) {}

DuplicateId::DuplicateId(std::size_t line, const std::string& id)
    : ManifestError("manifest line " + std::to_string(line) + ": duplicate id '" + id + "'"),
      line(line) {}

InvariantViolation::InvariantViolation(std::size_t line, const std::string& what)
    : ManifestError("manifest line " + std::to_string(line) + ": " + what), line(line) {}

std::filesystem::path Manifest::resolve(const Sample& s) const {
  std::filesystem::path p(s.path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

const Sample* Manifest::find(std::string_view id) const {
  for (const auto& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::vector<Sample> Manifest::with_role(Role role) const {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.role == role) out.push_back(s);
  }
  return out;
}

std::optional<std::string> check_sample(const Sample& s) {
  if (s.id.empty()) return "empty id";
  if (s.path.empty()) return "empty path";
  if ((s.label == Label::bona_fide) != (s.morph_algorithm == MorphAlgorithm::none)) {
    return "label '" + std::string(to_string(s.label)) + "' contradicts morph_algorithm '" +
           std::string(to_string(s.morph_algorithm)) + "'";
  }
  if (s.role == Role::support &&
      (s.label != Label::bona_fide || s.medium != Medium::digital)) {
    return "support samples must be digital bona fide";
  }
  return std::nullopt;
}

Manifest parse_manifest(std::istream& in, std::string name, std::filesystem::path base_dir) {
  Manifest m;
  m.name = std::move(name);
  m.base_dir = std::move(base_dir);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw MalformedRow(1, "missing header");
  ++line_no;
  strip_cr(line);
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  if (line != kHeader) {
    throw MalformedRow(line_no, "expected header '" + std::string(kHeader) + "', got '" +
                                    line + "'");
  }

  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != kColumns) {
      throw MalformedRow(line_no, "expected " + std::to_string(kColumns) + " columns, got " +
                                      std::to_string(fields.size()));
    }
    Sample s;
    s.id = fields[0];
    s.path = fields[1];
    const auto label = parse_label(fields[2]);
    const auto algo = parse_morph_algorithm(fields[3]);
    const auto medium = parse_medium(fields[4]);
    const auto role = parse_role(fields[5]);
    if (!label) throw MalformedRow(line_no, "bad label '" + fields[2] + "'");
    if (!algo) throw MalformedRow(line_no, "bad morph_algorithm '" + fields[3] + "'");
    if (!medium) throw MalformedRow(line_no, "bad medium '" + fields[4] + "'");
    if (!role) throw MalformedRow(line_no, "bad role '" + fields[5] + "'");
    s.label = *label;
    s.morph_algorithm = *algo;
    s.medium = *medium;
    s.role = *role;
    if (auto why = check_sample(s)) throw InvariantViolation(line_no, *why);
    if (!seen.insert(s.id).second) throw DuplicateId(line_no, s.id);
    m.samples.push_back(std::move(s));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  return parse_manifest(in, path.stem().string(), path.parent_path());
}

std::string serialize_manifest(const Manifest& m) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& s : m.samples) {
    out << s.id << ',' << s.path << ',' << to_string(s.label) << ','
        << to_string(s.morph_algorithm) << ',' << to_string(s.medium) << ','
        << to_string(s.role) << '\n';
  }
  return out.str();
}

Manifest filter_by_protocol(const Manifest& m, MorphAlgorithm algorithm) {
  if (algorithm == MorphAlgorithm::none) {
    throw std::invalid_argument("filter_by_protocol: algorithm must not be 'none'");
  }
  Manifest out;
  out.name = std::string(to_string(algorithm));
  out.base_dir = m.base_dir;
  std::size_t n_bona = 0, n_morph = 0;
  for (const auto& s : m.samples) {
    if (s.role != Role::eval) continue;
    if (s.label == Label::bona_fide) {
      ++n_bona;
      out.samples.push_back(s);
    } else if (s.morph_algorithm == algorithm) {
      ++n_morph;
      out.samples.push_back(s);
    }
  }
  if (n_bona == 0 || n_morph == 0) {
    throw EmptyProtocol("protocol '" + out.name + "' has " + std::to_string(n_bona) +
                        " bona fide and " + std::to_string(n_morph) + " morph eval samples");
  }
  return out;
}

}  // namespace zsmad
