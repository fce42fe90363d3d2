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

#include "zsmad/response_parser.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "zsmad/prompts.hpp"

namespace zsmad {
namespace {

// ---------------------------------------------------------------------------
// Tokenizer. Offsets index into the original reply so descriptions keep their
// original spelling.

enum class TokKind { word, number, punct };

struct Token {
  TokKind kind;
  std::size_t begin;
  std::size_t end;
  std::string text;  // lowercase; punct canonicalized
  double value = 0.0;
  bool decimal = false;
};

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

// Three-byte UTF-8 punctuation that should not glue onto words.
std::optional<std::string_view> special_punct(std::string_view text, std::size_t i) {
  if (i + 2 >= text.size() || static_cast<unsigned char>(text[i]) != 0xE2 ||
      static_cast<unsigned char>(text[i + 1]) != 0x80) {
    return std::nullopt;
  }
  switch (static_cast<unsigned char>(text[i + 2])) {
    case 0x93:  // en dash
    case 0x94:  // em dash
    case 0xA2:  // bullet
      return "-";
    case 0x98:
    case 0x99:
      return "'";
    case 0x9C:
    case 0x9D:
      return "\"";
    default:
      return std::nullopt;
  }
}

bool is_word_byte(std::string_view text, std::size_t i) {
  const auto c = static_cast<unsigned char>(text[i]);
  if (is_ascii_digit(c) || is_ascii_alpha(c)) return true;
  return c >= 0x80 && !special_punct(text, i);
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_space(c)) {
      ++i;
      continue;
    }
    if (auto p = special_punct(text, i)) {
      out.push_back({TokKind::punct, i, i + 3, std::string(*p)});
      i += 3;
      continue;
    }
    if (!is_word_byte(text, i)) {
      out.push_back({TokKind::punct, i, i + 1, std::string(1, static_cast<char>(c))});
      ++i;
      continue;
    }
    std::size_t j = i;
    bool all_numeric = true;
    bool decimal = false;
    while (j < n) {
      if (is_word_byte(text, j)) {
        if (!is_ascii_digit(static_cast<unsigned char>(text[j]))) all_numeric = false;
        ++j;
      } else if (text[j] == '.' && j > i && j + 1 < n &&
                 is_ascii_digit(static_cast<unsigned char>(text[j - 1])) &&
                 is_ascii_digit(static_cast<unsigned char>(text[j + 1]))) {
        decimal = true;
        ++j;
      } else {
        break;
      }
    }
    Token t{all_numeric ? TokKind::number : TokKind::word, i, j, lower(text.substr(i, j - i))};
    if (all_numeric) {
      t.decimal = decimal;
      t.value = std::strtod(t.text.c_str(), nullptr);
    }
    out.push_back(std::move(t));
    i = j;
  }
  return out;
}

bool adjacent(const Token& a, const Token& b) { return a.end == b.begin; }

bool is_word(const Token& t, std::string_view w) { return t.kind == TokKind::word && t.text == w; }
bool is_punct(const Token& t, std::string_view p) { return t.kind == TokKind::punct && t.text == p; }

// ---------------------------------------------------------------------------
// Spans of tokens.

struct Span {
  std::size_t first;
  std::size_t last;  // exclusive
};

/// Index just past the last answer marker, if any.
std::optional<std::size_t> answer_marker_end(const std::vector<Token>& toks) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    const auto& a = toks[i];
    const auto& b = toks[i + 1];
    if (a.kind != TokKind::word) continue;
    const bool marker =
        ((a.text == "answer" || a.text == "conclusion" || a.text == "verdict" ||
          a.text == "classification" || a.text == "score" || a.text == "probability" ||
          a.text == "result") &&
         is_punct(b, ":")) ||
        (a.text == "final" && is_word(b, "answer")) || (a.text == "answer" && is_word(b, "is"));
    if (marker) found = i + 2;
  }
  return found;
}

std::optional<std::size_t> first_yes_no(const std::vector<Token>& toks, Span s) {
  for (std::size_t i = s.first; i < s.last; ++i) {
    if (is_word(toks[i], "yes") || is_word(toks[i], "no")) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Grammars.

ParsedVerdict parse_yes_no(const std::vector<Token>& toks, Span s) {
  if (auto i = first_yes_no(toks, s)) return verdict::Binary{toks[*i].text == "yes"};
  return verdict::Unparseable{"no yes/no answer"};
}

bool negated_before(const std::vector<Token>& toks, std::size_t i, std::size_t floor) {
  std::size_t k = i;
  while (k > floor) {
    --k;
    const auto& t = toks[k];
    if (t.kind == TokKind::punct && (t.text == "-" || t.text == "'")) continue;
    if (is_word(t, "a") || is_word(t, "an") || is_word(t, "the") || is_word(t, "t")) continue;
    return t.kind == TokKind::word &&
           (t.text == "not" || t.text == "no" || t.text == "non" || t.text == "isn" ||
            t.text == "without");
  }
  return false;
}

ParsedVerdict parse_class_name(const std::vector<Token>& toks, Span s) {
  for (std::size_t i = s.first; i < s.last; ++i) {
    const auto& t = toks[i];
    if (t.kind != TokKind::word) continue;
    if (t.text.starts_with("morph")) {
      return verdict::Binary{!negated_before(toks, i, s.first)};
    }
    if (t.text == "bonafide" || t.text == "genuine") return verdict::Binary{false};
    if (t.text == "bona") {
      std::size_t j = i + 1;
      if (j < s.last && is_punct(toks[j], "-")) ++j;
      if (j < s.last && is_word(toks[j], "fide")) return verdict::Binary{false};
    }
  }
  return verdict::Unparseable{"no class name"};
}

/// Marks numbers that belong to restated ranges, enumerators, step labels or
/// identifiers such as "gpt-4".
std::vector<bool> masked_numbers(const std::vector<Token>& toks) {
  std::vector<bool> mask(toks.size(), false);
  auto is_num = [&](std::size_t k, double v) {
    return k < toks.size() && toks[k].kind == TokKind::number && !toks[k].decimal &&
           toks[k].value == v;
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.kind != TokKind::number) continue;

    // "0 and 100", "0-100", "0 (…) and 100 (…)", "[0, 100]", "0 to 100"
    if (is_num(i, 0)) {
      std::size_t j = i + 1;
      if (j < toks.size() && is_punct(toks[j], "%")) ++j;
      if (j < toks.size() && is_punct(toks[j], "(")) {
        std::size_t k = j + 1;
        while (k < toks.size() && k < j + 16 && !is_punct(toks[k], ")")) ++k;
        if (k < toks.size() && is_punct(toks[k], ")")) j = k + 1;
      }
      if (j < toks.size() &&
          (is_word(toks[j], "and") || is_word(toks[j], "to") || is_punct(toks[j], "-") ||
           is_punct(toks[j], ",") || is_punct(toks[j], "/"))) {
        if (is_num(j + 1, 100)) {
          mask[i] = true;
          mask[j + 1] = true;
        }
      }
    }
    // "out of 100", "/100"
    if (is_num(i, 100) && i >= 1) {
      if (is_punct(toks[i - 1], "/") || (i >= 2 && is_word(toks[i - 1], "of") &&
                                         is_word(toks[i - 2], "out"))) {
        mask[i] = true;
      }
    }
    // "step 1"
    if (i >= 1 && is_word(toks[i - 1], "step")) mask[i] = true;
    // "1)" enumerator, but not "(85)"
    if (i + 1 < toks.size() && is_punct(toks[i + 1], ")") && adjacent(t, toks[i + 1]) &&
        !(i >= 1 && is_punct(toks[i - 1], "("))) {
      mask[i] = true;
    }
    // "gpt-4"
    if (i >= 2 && is_punct(toks[i - 1], "-") && adjacent(toks[i - 1], t) &&
        toks[i - 2].kind == TokKind::word && adjacent(toks[i - 2], toks[i - 1])) {
      mask[i] = true;
    }
  }
  return mask;
}

ParsedVerdict parse_probability(const std::vector<Token>& toks, const std::vector<bool>& mask,
                                Span s) {
  bool saw_number = false;
  for (std::size_t i = s.first; i < s.last; ++i) {
    const auto& t = toks[i];
    if (t.kind != TokKind::number || mask[i]) continue;
    saw_number = true;
    double v = t.value;
    const bool percent = i + 1 < toks.size() && is_punct(toks[i + 1], "%");
    if (t.decimal && v > 0.0 && v < 1.0 && !percent) v *= 100.0;
    if (v >= 0.0 && v <= 100.0) {
      return verdict::Probability{static_cast<int>(std::lround(v))};
    }
  }
  return verdict::Unparseable{saw_number ? "out of range" : "no number"};
}

/// Parses `toks[s]`, first restricted to the text after the last answer marker.
template <typename Grammar>
ParsedVerdict with_marker_tail(const std::vector<Token>& toks, Grammar&& grammar) {
  const Span whole{0, toks.size()};
  if (auto tail = answer_marker_end(toks); tail && *tail < toks.size()) {
    auto v = grammar(Span{*tail, toks.size()});
    if (!std::holds_alternative<verdict::Unparseable>(v)) return v;
  }
  return grammar(whole);
}

std::string_view trim(std::string_view s) {
  auto junk = [](char c) {
    return is_ascii_space(static_cast<unsigned char>(c)) || c == '*' || c == '`' || c == '"' ||
           c == '_' || c == '#';
  };
  while (!s.empty() && junk(s.front())) s.remove_prefix(1);
  while (!s.empty() && junk(s.back())) s.remove_suffix(1);
  return s;
}

std::string_view trim_description(std::string_view s) {
  s = trim(s);
  while (!s.empty() && (s.back() == '.' || s.back() == ';' || s.back() == ',')) {
    s.remove_suffix(1);
    s = trim(s);
  }
  return s;
}

std::vector<Trace> bracket_traces(std::string_view text) {
  std::vector<Trace> out;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string_view::npos) {
    std::size_t close = pos + 1;
    while (close < text.size() && text[close] != ']' && text[close] != '[' &&
           text[close] != '\n') {
      ++close;
    }
    if (close >= text.size() || text[close] != ']') {
      pos = close;
      continue;
    }
    const auto inner = text.substr(pos + 1, close - pos - 1);
    const auto comma = inner.find(',');
    if (comma != std::string_view::npos) {
      const auto region = trim(inner.substr(0, comma));
      const auto desc = trim_description(inner.substr(comma + 1));
      if (!region.empty() && !desc.empty() && lower(region) != "region") {
        out.push_back({normalize_region(region), std::string(desc)});
      }
    }
    pos = close + 1;
  }
  return out;
}

std::string_view strip_bullet(std::string_view seg) {
  seg = trim(seg);
  if (seg.starts_with("- ") || seg.starts_with("* ") || seg.starts_with("+ ")) {
    seg.remove_prefix(2);
  } else if (seg.starts_with("\xE2\x80\xA2") || seg.starts_with("\xE2\x80\x93") ||
             seg.starts_with("\xE2\x80\x94")) {
    seg.remove_prefix(3);
  } else {
    std::size_t k = 0;
    while (k < seg.size() && is_ascii_digit(static_cast<unsigned char>(seg[k]))) ++k;
    if (k == 0 && !seg.empty() && is_ascii_alpha(static_cast<unsigned char>(seg[0]))) k = 1;
    if (k > 0 && k < 4 && k < seg.size() && (seg[k] == ')' || seg[k] == '.')) {
      seg.remove_prefix(k + 1);
    }
  }
  return trim(seg);
}

bool is_heading_word(std::string_view left) {
  static constexpr std::string_view kHeadings[] = {
      "answer",  "conclusion", "explanation", "traces", "trace",   "regions",
      "region",  "note",       "verdict",     "reason", "reasoning", "summary",
      "analysis", "result",    "yes",         "no",     "if yes",  "observations",
      "findings", "final answer", "details"};
  const auto l = lower(left);
  return std::find(std::begin(kHeadings), std::end(kHeadings), l) != std::end(kHeadings) ||
         l.starts_with("yes") || l.starts_with("no ") || l.starts_with("if yes");
}

std::vector<Trace> line_traces(std::string_view text) {
  std::vector<Trace> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t stop = text.find_first_of("\n;", start);
    if (stop == std::string_view::npos) stop = text.size();
    const auto seg = strip_bullet(text.substr(start, stop - start));
    start = stop + 1;
    if (seg.empty()) continue;

    std::size_t split = std::string_view::npos, skip = 0;
    for (std::string_view sep : {std::string_view(":"), std::string_view(" \xE2\x80\x94 "),
                                 std::string_view(" \xE2\x80\x93 "), std::string_view(" - ")}) {
      const auto p = seg.find(sep);
      if (p != std::string_view::npos && p < split) {
        split = p;
        skip = sep.size();
      }
    }
    if (split == std::string_view::npos) continue;
    const auto left = trim(seg.substr(0, split));
    const auto right = trim_description(seg.substr(split + skip));
    if (left.empty() || right.empty() || left.size() > 40 || is_heading_word(left)) continue;
    if (std::count(left.begin(), left.end(), ' ') > 4) continue;
    out.push_back({normalize_region(left), std::string(right)});
  }
  return out;
}

ParsedVerdict parse_trace_report(std::string_view text, const std::vector<Token>& toks) {
  const auto yn = first_yes_no(toks, Span{0, toks.size()});
  if (yn && toks[*yn].text == "no") return verdict::TraceReport{false, {}};
  const auto rest = yn ? text.substr(toks[*yn].end) : text;
  auto traces = bracket_traces(rest);
  if (traces.empty()) traces = line_traces(rest);
  if (!yn && traces.empty()) return verdict::Unparseable{"no yes/no answer"};
  return verdict::TraceReport{true, std::move(traces)};
}

ParsedVerdict parse_checklist(std::string_view text, const std::vector<Token>& toks,
                              const std::vector<bool>& mask) {
  const auto yn = first_yes_no(toks, Span{0, toks.size()});
  if (yn && toks[*yn].text == "no") return verdict::ArtifactChecklist{false, {}};
  const std::size_t from = yn ? *yn + 1 : 0;
  std::set<int> items;
  for (std::size_t i = from; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.kind != TokKind::number || t.decimal || mask[i]) continue;
    if (t.value >= 1 && t.value <= static_cast<double>(kArtifactItemCount)) {
      items.insert(static_cast<int>(t.value));
    }
  }
  const auto rest = lower(yn ? text.substr(toks[*yn].end) : text);
  const auto& names = artifact_item_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (rest.find(names[k]) != std::string::npos) items.insert(static_cast<int>(k + 1));
  }
  if (!yn && items.empty()) return verdict::Unparseable{"no yes/no answer"};
  return verdict::ArtifactChecklist{true, std::move(items)};
}

ParsedVerdict parse_grammar(ResponseKind kind, std::string_view text) {
  const auto toks = tokenize(text);
  switch (kind) {
    case ResponseKind::binary_yes_no:
      return with_marker_tail(toks, [&](Span s) { return parse_yes_no(toks, s); });
    case ResponseKind::binary_class_name:
      return with_marker_tail(toks, [&](Span s) { return parse_class_name(toks, s); });
    case ResponseKind::probability_0_100: {
      const auto mask = masked_numbers(toks);
      return with_marker_tail(toks, [&](Span s) { return parse_probability(toks, mask, s); });
    }
    case ResponseKind::trace_report:
      return parse_trace_report(text, toks);
    case ResponseKind::artifact_checklist:
      return parse_checklist(text, toks, masked_numbers(toks));
  }
  return verdict::Unparseable{"unknown grammar"};
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return is_ascii_space(static_cast<unsigned char>(c)); });
}

struct RegionKeyword {
  std::string_view word;
  CanonicalRegion region;
};

constexpr RegionKeyword kRegionTable[] = {
    {"eyebrow", CanonicalRegion::eyebrows},       {"eyebrows", CanonicalRegion::eyebrows},
    {"brow", CanonicalRegion::eyebrows},          {"brows", CanonicalRegion::eyebrows},
    {"eye", CanonicalRegion::eyes},               {"eyes", CanonicalRegion::eyes},
    {"iris", CanonicalRegion::eyes},              {"irises", CanonicalRegion::eyes},
    {"pupil", CanonicalRegion::eyes},             {"pupils", CanonicalRegion::eyes},
    {"eyelid", CanonicalRegion::eyes},            {"eyelids", CanonicalRegion::eyes},
    {"eyelash", CanonicalRegion::eyes},           {"eyelashes", CanonicalRegion::eyes},
    {"sclera", CanonicalRegion::eyes},            {"periocular", CanonicalRegion::eyes},
    {"nose", CanonicalRegion::nose},              {"nostril", CanonicalRegion::nose},
    {"nostrils", CanonicalRegion::nose},          {"nasal", CanonicalRegion::nose},
    {"mouth", CanonicalRegion::mouth_teeth},      {"teeth", CanonicalRegion::mouth_teeth},
    {"tooth", CanonicalRegion::mouth_teeth},      {"lip", CanonicalRegion::mouth_teeth},
    {"lips", CanonicalRegion::mouth_teeth},       {"smile", CanonicalRegion::mouth_teeth},
    {"ear", CanonicalRegion::ears},               {"ears", CanonicalRegion::ears},
    {"earring", CanonicalRegion::ears},           {"earrings", CanonicalRegion::ears},
    {"earlobe", CanonicalRegion::ears},           {"earlobes", CanonicalRegion::ears},
    {"hair", CanonicalRegion::hair},              {"hairline", CanonicalRegion::hair},
    {"hairs", CanonicalRegion::hair},             {"mustache", CanonicalRegion::hair},
    {"moustache", CanonicalRegion::hair},         {"beard", CanonicalRegion::hair},
    {"skin", CanonicalRegion::skin},              {"complexion", CanonicalRegion::skin},
    {"pores", CanonicalRegion::skin},             {"forehead", CanonicalRegion::forehead},
    {"temple", CanonicalRegion::forehead},        {"temples", CanonicalRegion::forehead},
    {"cheek", CanonicalRegion::cheek},            {"cheeks", CanonicalRegion::cheek},
    {"cheekbone", CanonicalRegion::cheek},        {"cheekbones", CanonicalRegion::cheek},
    {"lighting", CanonicalRegion::lighting_shading},
    {"light", CanonicalRegion::lighting_shading},
    {"shadow", CanonicalRegion::lighting_shading},
    {"shadows", CanonicalRegion::lighting_shading},
    {"shading", CanonicalRegion::lighting_shading},
    {"illumination", CanonicalRegion::lighting_shading},
    {"highlights", CanonicalRegion::lighting_shading},
    {"reflection", CanonicalRegion::lighting_shading},
    {"reflections", CanonicalRegion::lighting_shading},
    {"background", CanonicalRegion::background},  {"backdrop", CanonicalRegion::background},
    {"edge", CanonicalRegion::edges},             {"edges", CanonicalRegion::edges},
    {"boundary", CanonicalRegion::edges},         {"boundaries", CanonicalRegion::edges},
    {"outline", CanonicalRegion::edges},          {"halo", CanonicalRegion::edges},
    {"border", CanonicalRegion::edges},           {"borders", CanonicalRegion::edges},
    {"seam", CanonicalRegion::edges},             {"seams", CanonicalRegion::edges},
};

constexpr std::string_view kRefusalPhrases[] = {
    "i can't assist",        "i cannot assist",        "i can't help",
    "i cannot help",         "i'm unable to",          "i am unable to",
    "unable to analyze",     "unable to analyse",      "not able to identify",
    "i'm not able to",       "i am not able to",       "i can't provide",
    "i cannot provide",      "i can't determine",      "i cannot determine",
    "i can't analyze",       "i cannot analyze",       "i won't be able",
    "i can't comply",        "i cannot comply",        "i can't do that",
    "i can't evaluate",      "i cannot evaluate",      "can't identify real people",
    "i can't make that determination",                 "i'm not able to help",
};

}  // namespace

std::string_view to_string(CanonicalRegion r) {
  switch (r) {
    case CanonicalRegion::eyes: return "eyes";
    case CanonicalRegion::eyebrows: return "eyebrows";
    case CanonicalRegion::nose: return "nose";
    case CanonicalRegion::mouth_teeth: return "mouth_teeth";
    case CanonicalRegion::ears: return "ears";
    case CanonicalRegion::hair: return "hair";
    case CanonicalRegion::skin: return "skin";
    case CanonicalRegion::forehead: return "forehead";
    case CanonicalRegion::cheek: return "cheek";
    case CanonicalRegion::lighting_shading: return "lighting_shading";
    case CanonicalRegion::background: return "background";
    case CanonicalRegion::edges: return "edges";
    case CanonicalRegion::other: return "other";
  }
  return "other";
}

std::optional<CanonicalRegion> parse_region_name(std::string_view s) {
  for (auto r : kAllRegions) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

CanonicalRegion normalize_region(std::string_view free_text) {
  for (const auto& t : tokenize(free_text)) {
    if (t.kind != TokKind::word) continue;
    for (const auto& [word, region] : kRegionTable) {
      if (t.text == word) return region;
    }
  }
  return CanonicalRegion::other;
}

bool is_failure(const ParsedVerdict& v) {
  return std::holds_alternative<verdict::Refusal>(v) ||
         std::holds_alternative<verdict::Unparseable>(v);
}

std::string_view verdict_kind(const ParsedVerdict& v) {
  static constexpr std::string_view kNames[] = {"binary",  "probability", "trace_report",
                                                "artifact_checklist", "refusal",
                                                "unparseable"};
  return kNames[v.index()];
}

bool contains_refusal_phrase(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (auto p = special_punct(text, i); p && *p == "'") {
      norm.push_back('\'');
      i += 2;
    } else {
      norm.push_back(ascii_lower(text[i]));
    }
  }
  return std::any_of(std::begin(kRefusalPhrases), std::end(kRefusalPhrases),
                     [&](std::string_view p) { return norm.find(p) != std::string::npos; });
}

bool classify_refusal(std::string_view text, std::optional<int> prompt_id) {
  if (!contains_refusal_phrase(text)) return false;
  if (prompt_id && is_valid_prompt_id(*prompt_id)) {
    return is_failure(parse_grammar(prompt_spec(*prompt_id).response_kind, text));
  }
  for (auto kind : {ResponseKind::binary_yes_no, ResponseKind::binary_class_name,
                    ResponseKind::probability_0_100, ResponseKind::trace_report,
                    ResponseKind::artifact_checklist}) {
    if (!is_failure(parse_grammar(kind, text))) return false;
  }
  return true;
}

ParsedVerdict parse(int prompt_id, std::string_view text) {
  if (!is_valid_prompt_id(prompt_id)) return verdict::Unparseable{"unknown prompt"};
  if (blank(text)) return verdict::Unparseable{"empty reply"};
  auto v = parse_grammar(prompt_spec(prompt_id).response_kind, text);
  if (std::holds_alternative<verdict::Unparseable>(v) && contains_refusal_phrase(text)) {
    return verdict::Refusal{};
  }
  return v;
}

nlohmann::json to_json(const ParsedVerdict& v) {
  using nlohmann::json;
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, verdict::Binary>) {
          return {{"kind", "binary"}, {"is_positive", x.is_positive}};
        } else if constexpr (std::is_same_v<T, verdict::Probability>) {
          return {{"kind", "probability"}, {"value", x.value}};
        } else if constexpr (std::is_same_v<T, verdict::TraceReport>) {
          json traces = json::array();
          for (const auto& t : x.traces) {
            traces.push_back({{"region", to_string(t.region)}, {"description", t.description}});
          }
          return {{"kind", "trace_report"}, {"detected", x.detected}, {"traces", traces}};
        } else if constexpr (std::is_same_v<T, verdict::ArtifactChecklist>) {
          return {{"kind", "artifact_checklist"}, {"detected", x.detected}, {"items", x.items}};
        } else if constexpr (std::is_same_v<T, verdict::Refusal>) {
          return {{"kind", "refusal"}};
        } else {
          return {{"kind", "unparseable"}, {"reason", x.reason}};
        }
      },
      v);
}

ParsedVerdict verdict_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "binary") return verdict::Binary{j.at("is_positive").get<bool>()};
    if (kind == "probability") {
      const int value = j.at("value").get<int>();
      if (value < 0 || value > 100) throw std::invalid_argument("probability out of range");
      return verdict::Probability{value};
    }
    if (kind == "trace_report") {
      verdict::TraceReport r{j.at("detected").get<bool>(), {}};
      for (const auto& t : j.value("traces", nlohmann::json::array())) {
        auto region = parse_region_name(t.at("region").get<std::string>());
        if (!region) throw std::invalid_argument("unknown region");
        r.traces.push_back({*region, t.at("description").get<std::string>()});
      }
      return r;
    }
    if (kind == "artifact_checklist") {
      verdict::ArtifactChecklist c{j.at("detected").get<bool>(), {}};
      for (const auto& i : j.value("items", nlohmann::json::array())) {
        const int item = i.get<int>();
        if (item < 1 || item > static_cast<int>(kArtifactItemCount)) {
          throw std::invalid_argument("artifact item out of range");
        }
        c.items.insert(item);
      }
      return c;
    }
    if (kind == "refusal") return verdict::Refusal{};
    if (kind == "unparseable") return verdict::Unparseable{j.value("reason", "")};
    throw std::invalid_argument("unknown verdict kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed verdict: ") + e.what());
  }
}

}  // namespace zsmad
