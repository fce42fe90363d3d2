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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "zsmad/manifest.hpp"

namespace zsmad {

enum class ResponseKind {
  binary_yes_no,
  binary_class_name,
  probability_0_100,
  trace_report,
  artifact_checklist,
};

enum class Polarity { attack_oriented, bonafide_oriented, bidirectional };

std::string_view to_string(ResponseKind k);
std::string_view to_string(Polarity p);

struct PromptSpec {
  int prompt_id;
  std::string_view text;
  ResponseKind response_kind;
  Polarity polarity;
};

inline constexpr int kMinPromptId = 1;
inline constexpr int kMaxPromptId = 8;
inline constexpr std::size_t kArtifactItemCount = 11;

bool is_valid_prompt_id(int prompt_id);

/// Reasoning preamble sent ahead of every question.
std::string_view cot_preamble();

/// Throws std::out_of_range for ids outside 1..8.
const PromptSpec& prompt_spec(int prompt_id);

/// Artifact names of the checklist prompt, index 0 is item 1.
const std::array<std::string_view, kArtifactItemCount>& artifact_item_names();

enum class MediaType { png, jpeg };
std::string_view mime_type(MediaType t);

struct ImagePayload {
  MediaType media_type = MediaType::png;
  std::vector<std::uint8_t> bytes;
  std::string base64;

  /// `data:<mime>;base64,<payload>`
  std::string data_url() const;
};

struct RequestMessages {
  int prompt_id = 0;
  std::string system_text;
  std::string user_text;
  ImagePayload image;
};

class ImageReadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedImageFormat : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sniffs PNG/JPEG by magic bytes; throws UnsupportedImageFormat otherwise.
MediaType detect_media_type(std::span<const std::uint8_t> bytes, const std::string& origin);

RequestMessages build_request(const std::vector<std::uint8_t>& image_bytes, int prompt_id,
                              const std::string& origin = "<memory>");
RequestMessages build_request(const std::filesystem::path& image_path, int prompt_id);
RequestMessages build_request(const Manifest& manifest, const Sample& sample, int prompt_id);

}  // namespace zsmad
