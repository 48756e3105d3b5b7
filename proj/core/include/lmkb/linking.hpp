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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmkb/corpus.hpp"
#include "lmkb/llmclient.hpp"
#include "lmkb/promptkit.hpp"

namespace lmkb {

enum class LinkPath { ExactOption, LlmChoice, WikipediaFallback, Unresolved };

std::string_view link_path_name(LinkPath p) noexcept;
std::optional<LinkPath> link_path_from_name(std::string_view name) noexcept;

struct LinkedObject {
  std::string surface;
  std::optional<std::string> entity_id;     // set iff path != Unresolved
  std::optional<std::string> chosen_title;
  LinkPath path = LinkPath::Unresolved;
  std::string note;  // why an earlier strategy was skipped or failed
  bool operator==(const LinkedObject&) const = default;
};

/// Case-insensitive comparison after whitespace collapsing.
bool titles_match(std::string_view a, std::string_view b);

/// Candidate titles as shown to the model, plus the way back to an entity.
struct OptionsBlock {
  std::string text;                        // serialized list, "[]" when empty
  std::vector<std::string> titles;         // as presented, rank order
  std::vector<CandidateEntity> entities;   // parallel to titles
  /// Entity whose presented title matches `title` under titles_match.
  const CandidateEntity* find(std::string_view title) const;
};

/// Drops repeated entity ids, then makes titles unique: a title shared by
/// several entities gets " (description)" appended, or " (Qid)" when the
/// description is empty or does not separate them.
OptionsBlock build_options_block(std::span<const CandidateEntity> candidates);

struct LinkSettings {
  Dialect dialect = Dialect::LlamaChat;
  GenerationParams generation;
  std::size_t candidate_limit = kDefaultCandidateLimit;
};

/// Resolves one predicted surface string. Strategies in order: a unique
/// exact title match among the Wikidata candidates, the option-selection
/// prompt, then the Wikipedia search fallback on the model's pick (or on
/// the surface when there were no candidates). Never fails for model or
/// API errors; those end as Unresolved with a note. InfrastructureError
/// propagates.
LinkedObject link(std::string_view surface, std::string_view question, LlmClient& llm,
                  Corpus& corpus, const PromptLibrary& prompts, const LinkSettings& settings = {});

/// Order-preserving; resolved objects collapse by entity id, unresolved
/// ones by normalized surface.
std::vector<LinkedObject> dedupe_predictions(std::vector<LinkedObject> linked);

}  // namespace lmkb
