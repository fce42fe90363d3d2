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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace zsmad::testing {

namespace fs = std::filesystem;

#ifndef ZSMAD_TEST_DATA_DIR
#define ZSMAD_TEST_DATA_DIR "tests/data"
#endif

inline fs::path data_dir() { return ZSMAD_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "zsmad-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 1x1 RGBA PNG.
inline std::vector<std::uint8_t> tiny_png() {
  return {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48,
          0x44, 0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00,
          0x00, 0x1F, 0x15, 0xC4, 0x89, 0x00, 0x00, 0x00, 0x0A, 0x49, 0x44, 0x41, 0x54, 0x78,
          0x9C, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0D, 0x0A, 0x2D, 0xB4, 0x00,
          0x00, 0x00, 0x00, 0x49, 0x45, 0x4E, 0x44, 0xAE, 0x42, 0x60, 0x82};
}

inline void write_png(const fs::path& p) {
  const auto bytes = tiny_png();
  write_file(p, std::string(bytes.begin(), bytes.end()));
}

struct SyntheticRow {
  std::string id, label, algorithm, medium, role;
};

/// Writes images and a manifest CSV; returns the manifest path.
inline fs::path write_manifest(const fs::path& dir, const std::vector<SyntheticRow>& rows,
                               const std::string& name = "manifest.csv") {
  std::string csv = "id,path,label,morph_algorithm,medium,role\n";
  for (const auto& r : rows) {
    const std::string rel = "imgs/" + r.id + ".png";
    write_png(dir / rel);
    csv += r.id + "," + rel + "," + r.label + "," + r.algorithm + "," + r.medium + "," + r.role + "\n";
  }
  write_file(dir / name, csv);
  return dir / name;
}

/// n_bona bona fide eval rows, n_per_algo morphs per algorithm, n_support
/// support rows.
inline std::vector<SyntheticRow> protocol_rows(int n_bona, int n_per_algo, int n_support) {
  std::vector<SyntheticRow> rows;
  auto id = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
    return std::string(buf);
  };
  for (int i = 1; i <= n_bona; ++i) {
    rows.push_back({id("b", i), "bona_fide", "none", i % 2 ? "print_scan" : "digital", "eval"});
  }
  const char* algos[] = {"lma_ubo", "mipgan2", "morph_pipe"};
  const char* prefixes[] = {"l", "g", "p"};
  for (int a = 0; a < 3; ++a) {
    for (int i = 1; i <= n_per_algo; ++i) {
      rows.push_back({id(prefixes[a], i), "morph", algos[a], "print_scan", "eval"});
    }
  }
  for (int i = 1; i <= n_support; ++i) {
    rows.push_back({id("s", i), "bona_fide", "none", "digital", "support"});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Oracles. Deliberately naive.

struct OraclePoint {
  double macer, bpcer;
};

/// Error rates at every candidate threshold: below all scores, every midpoint
/// between consecutive distinct scores, above all scores. Counted directly.
inline std::vector<OraclePoint> oracle_sweep(const std::vector<double>& attacks,
                                             const std::vector<double>& bona) {
  std::set<double> uniq(attacks.begin(), attacks.end());
  uniq.insert(bona.begin(), bona.end());
  std::vector<double> u(uniq.begin(), uniq.end());
  std::vector<double> cands{u.front() - 1.0};
  for (std::size_t i = 0; i + 1 < u.size(); ++i) cands.push_back((u[i] + u[i + 1]) / 2.0);
  cands.push_back(u.back() + 1.0);

  std::vector<OraclePoint> pts;
  for (double t : cands) {
    int missed = 0, false_alarms = 0;
    for (double a : attacks) missed += a < t ? 1 : 0;
    for (double b : bona) false_alarms += b >= t ? 1 : 0;
    pts.push_back({double(missed) / double(attacks.size()), double(false_alarms) / double(bona.size())});
  }
  return pts;
}

inline double oracle_eer(const std::vector<double>& attacks, const std::vector<double>& bona) {
  const auto pts = oracle_sweep(attacks, bona);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].macer - pts[i].bpcer;
    if (d == 0) return pts[i].macer;
    if (d > 0) {
      const auto& p = pts[i - 1];
      const auto& q = pts[i];
      // Intersect the segment p->q with the diagonal macer == bpcer.
      const double dp = p.macer - p.bpcer;
      const double s = dp / (dp - d);
      return p.macer + s * (q.macer - p.macer);
    }
  }
  return pts.back().macer;
}

/// Element-wise mean with long double accumulation.
inline std::vector<double> oracle_mean(const std::vector<std::vector<double>>& vs) {
  std::vector<double> out(vs.front().size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    long double acc = 0;
    for (const auto& v : vs) acc += v[d];
    out[d] = static_cast<double>(acc / vs.size());
  }
  return out;
}

}  // namespace zsmad::testing
