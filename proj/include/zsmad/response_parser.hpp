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

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace zsmad {

enum class CanonicalRegion {
  eyes,
  eyebrows,
  nose,
  mouth_teeth,
  ears,
  hair,
  skin,
  forehead,
  cheek,
  lighting_shading,
  background,
  edges,
  other,
};

inline constexpr CanonicalRegion kAllRegions[] = {
    CanonicalRegion::eyes,        CanonicalRegion::eyebrows,
    CanonicalRegion::nose,        CanonicalRegion::mouth_teeth,
    CanonicalRegion::ears,        CanonicalRegion::hair,
    CanonicalRegion::skin,        CanonicalRegion::forehead,
    CanonicalRegion::cheek,       CanonicalRegion::lighting_shading,
    CanonicalRegion::background,  CanonicalRegion::edges,
    CanonicalRegion::other,
};

std::string_view to_string(CanonicalRegion r);
std::optional<CanonicalRegion> parse_region_name(std::string_view s);

/// Maps a free-text region to the canonical set by keyword lookup. The first
/// word that hits the table wins; no hit gives `other`.
CanonicalRegion normalize_region(std::string_view free_text);

struct Trace {
  CanonicalRegion region = CanonicalRegion::other;
  std::string description;
  bool operator==(const Trace&) const = default;
};

namespace verdict {
struct Binary {
  bool is_positive = false;
  bool operator==(const Binary&) const = default;
};
struct Probability {
  int value = 0;  // 0..100
  bool operator==(const Probability&) const = default;
};
struct TraceReport {
  bool detected = false;
  std::vector<Trace> traces;
  bool operator==(const TraceReport&) const = default;
};
struct ArtifactChecklist {
  bool detected = false;
  std::set<int> items;  // subset of 1..11
  bool operator==(const ArtifactChecklist&) const = default;
};
struct Refusal {
  bool operator==(const Refusal&) const = default;
};
struct Unparseable {
  std::string reason;
  // Reasons are diagnostics; two Unparseable verdicts compare equal.
  bool operator==(const Unparseable&) const { return true; }
};
}  // namespace verdict

using ParsedVerdict =
    std::variant<verdict::Binary, verdict::Probability, verdict::TraceReport,
                 verdict::ArtifactChecklist, verdict::Refusal, verdict::Unparseable>;

/// Refusal or Unparseable.
bool is_failure(const ParsedVerdict& v);
std::string_view verdict_kind(const ParsedVerdict& v);

/// Parses a model reply under the grammar of `prompt_id`. Never throws on
/// text content: anything without a grammar match comes back as Unparseable,
/// or Refusal when the reply also carries a refusal phrase.
///
/// Grammars:
///  - yes/no prompts: first standalone "yes"/"no" token.
///  - class-name prompt: first "morph..." or "bona fide" mention; a directly
///    negated morph mention ("not a morphing attack") reads as bona fide.
///  - probability prompts: first number in [0,100] that is not part of an
///    identifier, an enumerator like "1)", or a restated range such as
///    "between 0 and 100". Decimals are rounded; a bare fraction in (0,1) is
///    read as a share and scaled by 100.
///  - trace prompt: yes/no, then `[region, trace]` pairs, or one
///    `region: trace` / `- region - trace` entry per line or `;` segment.
///  - checklist prompt: yes/no, then item numbers 1..11 or item names.
///
/// For the first three grammars, text after the last answer marker
/// ("answer:", "conclusion:", ...) is tried before the whole reply.
ParsedVerdict parse(int prompt_id, std::string_view text);

/// True iff the reply contains a refusal phrase and no verdict parses under
/// the prompt's grammar (under any grammar when no prompt is given).
bool classify_refusal(std::string_view text, std::optional<int> prompt_id = std::nullopt);

/// True iff the reply contains one of the fixed refusal phrases.
bool contains_refusal_phrase(std::string_view text);

nlohmann::json to_json(const ParsedVerdict& v);
/// Throws std::invalid_argument on a malformed object.
ParsedVerdict verdict_from_json(const nlohmann::json& j);

}  // namespace zsmad
