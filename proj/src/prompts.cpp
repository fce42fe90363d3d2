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

#include "zsmad/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "zsmad/digest.hpp"

namespace zsmad {
namespace {

constexpr std::string_view kCot =
    "I want you to act as an image forensic expert to check suspicious face images. "
    "Think step-by-step, first analyze the visual characteristics of the image and then "
    "answer.";

constexpr std::array<PromptSpec, 8> kPrompts{{
    {1,
     "Tell me if this is a face morphing attack. You must ONLY answer yes or no.",
     ResponseKind::binary_yes_no, Polarity::attack_oriented},
    {2, "Tell me if this is a bona fide image. You must ONLY answer yes or no.",
     ResponseKind::binary_yes_no, Polarity::bonafide_oriented},
    {3,
     "Tell me if this is a face morphing attack or a bona fide image. You must ONLY answer "
     "morphing attack or bona fide.",
     ResponseKind::binary_class_name, Polarity::bidirectional},
    {4,
     "Tell me the probability of this image being a face morphing attack. You must ONLY "
     "answer a probability score between 0 and 100.",
     ResponseKind::probability_0_100, Polarity::attack_oriented},
    {5,
     "Tell me the probability of this image being a bona fide image. You must ONLY answer a "
     "probability score between 0 and 100.",
     ResponseKind::probability_0_100, Polarity::bonafide_oriented},
    {6,
     "Tell me the probability of this image being a face morphing attack or a bona fide "
     "image. You must ONLY answer a probability score between 0 (hundred-percent bonafide) "
     "and 100 (hundred-percent morphing attack).",
     ResponseKind::probability_0_100, Polarity::bidirectional},
    {7,
     "Tell me if traces of morphing are in the face. Must return with 1) yes or no; 2) if "
     "yes, explain where the traces exist by answering in [region, trace] form.",
     ResponseKind::trace_report, Polarity::attack_oriented},
    {8,
     "Tell me if the image has the artifact attribute listed in the following list and "
     "return 1) yes or no; 2) if yes, the attribute number(s) if you have noticed in this "
     "image. The artifact list is [1- asymmetric eye iris; 2-strange artifacts around eye "
     "iris; 3-strange artifacts around nose; 4-strange artifacts around eyebrow; "
     "5-irregular teeth shape or texture; 6-irregular ears or earrings; 7-strange hair "
     "texture; 8-inconsistent skin texture; 9-inconsistent lighting and shading; "
     "10-strange background; 11-unnatural edges].",
     ResponseKind::artifact_checklist, Polarity::attack_oriented},
}};

constexpr std::array<std::string_view, kArtifactItemCount> kArtifactItems{
    "asymmetric eye iris",
    "strange artifacts around eye iris",
    "strange artifacts around nose",
    "strange artifacts around eyebrow",
    "irregular teeth shape or texture",
    "irregular ears or earrings",
    "strange hair texture",
    "inconsistent skin texture",
    "inconsistent lighting and shading",
    "strange background",
    "unnatural edges",
};

}  // namespace

std::string_view to_string(ResponseKind k) {
  switch (k) {
    case ResponseKind::binary_yes_no: return "binary_yes_no";
    case ResponseKind::binary_class_name: return "binary_class_name";
    case ResponseKind::probability_0_100: return "probability_0_100";
    case ResponseKind::trace_report: return "trace_report";
    case ResponseKind::artifact_checklist: return "artifact_checklist";
  }
  return "?";
}

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::attack_oriented: return "attack_oriented";
    case Polarity::bonafide_oriented: return "bonafide_oriented";
    case Polarity::bidirectional: return "bidirectional";
  }
  return "?";
}

bool is_valid_prompt_id(int prompt_id) {
  return prompt_id >= kMinPromptId && prompt_id <= kMaxPromptId;
}

std::string_view cot_preamble() { return kCot; }

const PromptSpec& prompt_spec(int prompt_id) {
  if (!is_valid_prompt_id(prompt_id)) {
    throw std::out_of_range("prompt id " + std::to_string(prompt_id) + " not in 1..8");
  }
  return kPrompts[static_cast<std::size_t>(prompt_id - 1)];
}

const std::array<std::string_view, kArtifactItemCount>& artifact_item_names() {
  return kArtifactItems;
}

std::string_view mime_type(MediaType t) {
  return t == MediaType::png ? "image/png" : "image/jpeg";
}

std::string ImagePayload::data_url() const {
  return "data:" + std::string(mime_type(media_type)) + ";base64," + base64;
}

MediaType detect_media_type(std::span<const std::uint8_t> bytes, const std::string& origin) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  static constexpr std::uint8_t kJpeg[] = {0xFF, 0xD8, 0xFF};
  if (bytes.size() >= sizeof kPng && std::equal(std::begin(kPng), std::end(kPng), bytes.begin())) {
    return MediaType::png;
  }
  if (bytes.size() >= sizeof kJpeg &&
      std::equal(std::begin(kJpeg), std::end(kJpeg), bytes.begin())) {
    return MediaType::jpeg;
  }
  throw UnsupportedImageFormat(origin + ": only PNG and JPEG images are accepted");
}

RequestMessages build_request(const std::vector<std::uint8_t>& image_bytes, int prompt_id,
                              const std::string& origin) {
  const auto& spec = prompt_spec(prompt_id);
  RequestMessages r;
  r.prompt_id = prompt_id;
  r.system_text = std::string(kCot);
  r.user_text = std::string(spec.text);
  r.image.media_type = detect_media_type(image_bytes, origin);
  r.image.bytes = image_bytes;
  r.image.base64 = base64_encode(image_bytes);
  return r;
}

RequestMessages build_request(const std::filesystem::path& image_path, int prompt_id) {
  if (!is_valid_prompt_id(prompt_id)) prompt_spec(prompt_id);
  std::ifstream in(image_path, std::ios::binary);
  if (!in) throw ImageReadError("cannot read image " + image_path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw ImageReadError("error reading image " + image_path.string());
  return build_request(bytes, prompt_id, image_path.string());
}

RequestMessages build_request(const Manifest& manifest, const Sample& sample, int prompt_id) {
  return build_request(manifest.resolve(sample), prompt_id);
}

}  // namespace zsmad
