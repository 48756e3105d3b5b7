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

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmkb/common.hpp"

namespace lmkb {

/// Chat formatting expected by the base model.
enum class Dialect { LlamaChat, Beluga };

enum class PromptKind {
  ContextQa,     // Prompt 1: context + question -> answer list
  NoContextQa,   // Prompt 2: question only, empty context
  OptionSelect,  // Prompt 3: pick one candidate title
  FormatRepair,  // Prompt 4: in-context list repair
};

enum class Phase { Training, Inference };

/// How the {answer} slot is written into a template body.
enum class AnswerFormat {
  List,  // bracketed, double-quoted list via serialize_answer_list
  Raw,   // the single answer value verbatim
};

std::string_view dialect_name(Dialect d) noexcept;
/// Accepts "llama", "llama-chat" and "beluga".
std::optional<Dialect> dialect_from_name(std::string_view name) noexcept;
std::string_view prompt_kind_name(PromptKind k) noexcept;
std::optional<PromptKind> prompt_kind_from_name(std::string_view name) noexcept;

class TemplateError : public Error {
 public:
  using Error::Error;
};

struct PromptTemplate {
  Dialect dialect = Dialect::LlamaChat;
  PromptKind kind = PromptKind::ContextQa;
  AnswerFormat answer_format = AnswerFormat::List;
  std::string trim_marker;
  std::string body;

  /// Parses the on-disk form: "key: value" header lines, a "---" line, then
  /// the raw body up to end of file. Validates slot and marker invariants.
  static PromptTemplate parse(std::string_view document);
};

struct RenderedPrompt {
  std::string text;
  Dialect dialect = Dialect::LlamaChat;
  PromptKind kind = PromptKind::ContextQa;
  Phase phase = Phase::Training;
};

/// Slot values. Only the slots whose markers appear in the rendered part of
/// the template are required; extra slots are ignored.
struct PromptSlots {
  std::optional<std::string> context;
  std::optional<std::string> question;
  std::optional<std::string> options;
  std::optional<std::vector<std::string>> answer;
};

/// Double-quoted list literal with backslash escapes: ["a", "b \"c\""].
std::string serialize_answer_list(std::span<const std::string> items);

/// All eight (dialect, kind) templates. Immutable once loaded.
class PromptLibrary {
 public:
  /// Loads <dir>/<dialect>/<kind>.tmpl for every dialect and kind.
  static PromptLibrary load(const std::filesystem::path& dir);
  static PromptLibrary load_default();

  const PromptTemplate& get(Dialect d, PromptKind k) const;

  RenderedPrompt render_training(PromptKind k, Dialect d, const PromptSlots& slots) const;
  /// Renders only up to the end of the template's trim marker.
  RenderedPrompt render_inference(PromptKind k, Dialect d, const PromptSlots& slots) const;
  /// Format-repair prompt around a raw, unparseable model answer.
  RenderedPrompt render_repair(Dialect d, std::string_view bad_answer) const;

 private:
  std::array<PromptTemplate, 8> templates_;
};

}  // namespace lmkb
