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

#include "lmkb/linking.hpp"

#include <map>
#include <unordered_set>

#include "lmkb/answerparse.hpp"

namespace lmkb {

namespace {

std::string match_key(std::string_view s) { return ascii_lower(collapse_whitespace(s)); }

// The model's pick from a Prompt-3 completion: the first list item when the
// output parses as a list, else the whole trimmed output.
std::string extract_choice(std::string_view raw) {
  try {
    auto items = clean_items(parse_list_literal(raw));
    return items.empty() ? std::string() : items.front();
  } catch (const ParseError&) {
    std::string_view v = trim(raw);
    if (starts_with_ci(v, "answer:")) v = trim(v.substr(7));
    return normalize_surface(v);
  }
}

LinkedObject unresolved(std::string surface, std::string note) {
  LinkedObject out;
  out.surface = std::move(surface);
  out.note = std::move(note);
  return out;
}

void append_note(std::string& note, std::string_view more) {
  if (!note.empty()) note += "; ";
  note += more;
}

}  // namespace

std::string_view link_path_name(LinkPath p) noexcept {
  switch (p) {
    case LinkPath::ExactOption: return "exact-option";
    case LinkPath::LlmChoice: return "llm-choice";
    case LinkPath::WikipediaFallback: return "wikipedia-fallback";
    case LinkPath::Unresolved: return "unresolved";
  }
  return "?";
}

std::optional<LinkPath> link_path_from_name(std::string_view name) noexcept {
  for (auto p : {LinkPath::ExactOption, LinkPath::LlmChoice, LinkPath::WikipediaFallback,
                 LinkPath::Unresolved}) {
    if (link_path_name(p) == name) return p;
  }
  return std::nullopt;
}

bool titles_match(std::string_view a, std::string_view b) { return match_key(a) == match_key(b); }

const CandidateEntity* OptionsBlock::find(std::string_view title) const {
  const std::string key = match_key(title);
  for (std::size_t i = 0; i < titles.size(); ++i) {
    if (match_key(titles[i]) == key) return &entities[i];
  }
  return nullptr;
}

OptionsBlock build_options_block(std::span<const CandidateEntity> candidates) {
  OptionsBlock block;
  std::unordered_set<std::string> seen_ids;
  for (const auto& c : candidates) {
    if (!seen_ids.insert(c.entity_id).second) continue;
    block.entities.push_back(c);
  }

  auto count_keys = [](const std::vector<std::string>& titles) {
    std::map<std::string, int> counts;
    for (const auto& t : titles) ++counts[match_key(t)];
    return counts;
  };

  std::vector<std::string> titles;
  titles.reserve(block.entities.size());
  for (const auto& e : block.entities) titles.push_back(e.title);

  auto raw_counts = count_keys(titles);
  for (std::size_t i = 0; i < titles.size(); ++i) {
    const auto& e = block.entities[i];
    if (raw_counts[match_key(e.title)] > 1 && !trim(e.description).empty()) {
      titles[i] = e.title + " (" + collapse_whitespace(e.description) + ")";
    }
  }
  auto counts = count_keys(titles);
  for (std::size_t i = 0; i < titles.size(); ++i) {
    const auto& e = block.entities[i];
    if (raw_counts[match_key(e.title)] > 1 &&
        (counts[match_key(titles[i])] > 1 || trim(e.description).empty())) {
      titles[i] = e.title + " (" + e.entity_id + ")";
    }
  }

  block.titles = std::move(titles);
  block.text = serialize_answer_list(block.titles);
  return block;
}

LinkedObject link(std::string_view surface_in, std::string_view question, LlmClient& llm,
                  Corpus& corpus, const PromptLibrary& prompts, const LinkSettings& settings) {
  std::string surface = normalize_surface(surface_in);
  if (surface.empty()) throw PreconditionError("cannot link an empty surface string");

  std::string note;
  std::vector<CandidateEntity> candidates;
  try {
    candidates = corpus.search_wikidata(surface, settings.candidate_limit);
  } catch (const InfrastructureError&) {
    throw;
  } catch (const std::exception& e) {
    append_note(note, std::string("wikidata search failed: ") + e.what());
  }

  // 1. unique exact title match
  const CandidateEntity* exact = nullptr;
  int exact_count = 0;
  for (const auto& c : candidates) {
    if (titles_match(c.title, surface)) {
      if (!exact) exact = &c;
      ++exact_count;
    }
  }
  if (exact_count == 1) {
    return {surface, exact->entity_id, exact->title, LinkPath::ExactOption, note};
  }

  // 2. option selection by the model
  std::string fallback_query = surface;
  if (!candidates.empty()) {
    OptionsBlock block = build_options_block(candidates);
    try {
      PromptSlots slots;
      slots.options = block.text;
      slots.question = std::string(question);
      RenderedPrompt prompt =
          prompts.render_inference(PromptKind::OptionSelect, settings.dialect, slots);
      Completion c = llm.complete(prompt, settings.generation);
      std::string choice = extract_choice(c.text);
      if (const CandidateEntity* hit = choice.empty() ? nullptr : block.find(choice)) {
        std::size_t idx = static_cast<std::size_t>(hit - block.entities.data());
        return {surface, hit->entity_id, block.titles[idx], LinkPath::LlmChoice, note};
      }
      if (!choice.empty()) fallback_query = choice;
      append_note(note, "model choice '" + choice + "' is not among the options");
    } catch (const InfrastructureError&) {
      throw;
    } catch (const std::exception& e) {
      append_note(note, std::string("option selection failed: ") + e.what());
    }
  }

  // 3. Wikipedia search on the model's output (or the surface)
  try {
    if (auto hit = corpus.search_wikipedia_fallback(fallback_query)) {
      return {surface, hit->entity_id, hit->title, LinkPath::WikipediaFallback, note};
    }
    append_note(note, "wikipedia search for '" + fallback_query + "' found no linked entity");
  } catch (const InfrastructureError&) {
    throw;
  } catch (const std::exception& e) {
    append_note(note, std::string("wikipedia search failed: ") + e.what());
  }

  log_warn("unresolved '" + surface + "': " + note);
  return unresolved(std::move(surface), std::move(note));
}

std::vector<LinkedObject> dedupe_predictions(std::vector<LinkedObject> linked) {
  std::vector<LinkedObject> out;
  std::unordered_set<std::string> seen;
  for (auto& obj : linked) {
    std::string key = obj.entity_id ? "id:" + *obj.entity_id : "s:" + normalize_surface(obj.surface);
    if (!seen.insert(std::move(key)).second) continue;
    out.push_back(std::move(obj));
  }
  return out;
}

}  // namespace lmkb
