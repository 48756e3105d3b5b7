/*
 * Copyright 2026 The lmkb Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lmkb/common.hpp"
#include "lmkb/llmclient.hpp"
#include "lmkb/promptkit.hpp"

namespace lmkb {

class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& message);
  /// Byte offset into the raw input where parsing gave up.
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Parses a model answer of the form `Answer: ["a", 'b']`.
///
/// Tolerated: an optional leading "Answer:" label, prose before the first
/// '[' and after the matching ']', single- or double-quoted items with
/// backslash escapes, a trailing comma, and a missing opening bracket when a
/// closing one is present (`Answer: "a", "b"]`). Anything else inside the
/// brackets is a ParseError, so an apostrophe that closes a single-quoted
/// item early (`['book's']`) is rejected.
std::vector<std::string> parse_list_literal(std::string_view raw);

/// Trim, strip stray wrapping quotes, collapse inner whitespace. Case and
/// non-ASCII bytes are preserved.
std::string normalize_surface(std::string_view s);

enum class ParseStatus { Clean, Repaired, Failed };

std::string_view parse_status_name(ParseStatus s) noexcept;

struct ParsedAnswer {
  std::vector<std::string> items;  // normalized, non-empty, deduplicated
  ParseStatus status = ParseStatus::Failed;
  std::string raw;
  int repair_attempts = 0;
  std::string failure;  // last parse or transport error, when any
};

/// Normalizes, drops empties and removes exact duplicates (first wins).
std::vector<std::string> clean_items(const std::vector<std::string>& items);

struct RepairSettings {
  Dialect dialect = Dialect::LlamaChat;
  GenerationParams generation;
  int max_repairs = 1;
};

/// Parses `raw`; on failure renders the format-repair prompt, asks the model
/// once more and re-parses. Model and parse errors end up in `failure` with
/// status Failed and no items; InfrastructureError (replay miss, corrupt
/// cache) propagates so offline batches can abort.
ParsedAnswer parse_with_repair(std::string_view raw, LlmClient& llm, const PromptLibrary& prompts,
                               const RepairSettings& settings = {});

}  // namespace lmkb
