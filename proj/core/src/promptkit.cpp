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

#include "lmkb/promptkit.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace lmkb {

namespace {

enum class Slot { Context, Question, Options, Answer };

struct Marker {
  Slot slot;
  std::string_view text;
};

constexpr std::array<Marker, 4> kMarkers = {{
    {Slot::Context, "{context}"},
    {Slot::Question, "{question}"},
    {Slot::Options, "{options}"},
    {Slot::Answer, "{answer}"},
}};

constexpr std::array<Dialect, 2> kDialects = {Dialect::LlamaChat, Dialect::Beluga};
constexpr std::array<PromptKind, 4> kKinds = {PromptKind::ContextQa, PromptKind::NoContextQa,
                                              PromptKind::OptionSelect, PromptKind::FormatRepair};

std::size_t library_slot(Dialect d, PromptKind k) {
  return static_cast<std::size_t>(d) * kKinds.size() + static_cast<std::size_t>(k);
}

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::Context: return "context";
    case Slot::Question: return "question";
    case Slot::Options: return "options";
    case Slot::Answer: return "answer";
  }
  return "?";
}

// Which slot markers each kind must (and must not) contain.
std::array<bool, 4> expected_slots(PromptKind k) {
  switch (k) {
    case PromptKind::ContextQa: return {true, true, false, true};
    case PromptKind::NoContextQa: return {false, true, false, true};
    case PromptKind::OptionSelect: return {false, true, true, true};
    case PromptKind::FormatRepair: return {false, false, false, true};
  }
  return {};
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string answer_text(const std::vector<std::string>& items, AnswerFormat format) {
  if (format == AnswerFormat::List) return serialize_answer_list(items);
  if (items.size() != 1) {
    throw TemplateError("raw answer slot takes exactly one value, got " +
                        std::to_string(items.size()));
  }
  return items.front();
}

// Single left-to-right pass: substituted values are never rescanned, and
// every byte outside a marker is copied unchanged.
std::string substitute(std::string_view body, const PromptSlots& slots, AnswerFormat format,
                       const PromptTemplate& tmpl) {
  std::string out;
  out.reserve(body.size() + 256);
  std::size_t i = 0;
  while (i < body.size()) {
    std::size_t brace = body.find('{', i);
    if (brace == std::string_view::npos) {
      out.append(body.substr(i));
      break;
    }
    out.append(body.substr(i, brace - i));
    const Marker* hit = nullptr;
    for (const auto& m : kMarkers) {
      if (body.substr(brace, m.text.size()) == m.text) {
        hit = &m;
        break;
      }
    }
    if (!hit) {
      out.push_back('{');
      i = brace + 1;
      continue;
    }
    auto missing = [&]() {
      return TemplateError(std::string("missing slot '") + std::string(slot_name(hit->slot)) +
                           "' for " + std::string(dialect_name(tmpl.dialect)) + "/" +
                           std::string(prompt_kind_name(tmpl.kind)));
    };
    switch (hit->slot) {
      case Slot::Context:
        if (!slots.context) throw missing();
        out += *slots.context;
        break;
      case Slot::Question:
        if (!slots.question) throw missing();
        out += *slots.question;
        break;
      case Slot::Options:
        if (!slots.options) throw missing();
        out += *slots.options;
        break;
      case Slot::Answer:
        if (!slots.answer) throw missing();
        out += answer_text(*slots.answer, format);
        break;
    }
    i = brace + hit->text.size();
  }
  return out;
}

}  // namespace

std::string_view dialect_name(Dialect d) noexcept {
  return d == Dialect::LlamaChat ? "llama-chat" : "beluga";
}

std::optional<Dialect> dialect_from_name(std::string_view name) noexcept {
  if (name == "llama" || name == "llama-chat") return Dialect::LlamaChat;
  if (name == "beluga") return Dialect::Beluga;
  return std::nullopt;
}

std::string_view prompt_kind_name(PromptKind k) noexcept {
  switch (k) {
    case PromptKind::ContextQa: return "context-qa";
    case PromptKind::NoContextQa: return "no-context-qa";
    case PromptKind::OptionSelect: return "option-select";
    case PromptKind::FormatRepair: return "format-repair";
  }
  return "?";
}

std::optional<PromptKind> prompt_kind_from_name(std::string_view name) noexcept {
  for (PromptKind k : kKinds) {
    if (prompt_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string serialize_answer_list(std::span<const std::string> items) {
  std::string out = "[";
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += ", ";
    first = false;
    out.push_back('"');
    for (char c : item) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
            out += buf;
          } else {
            out.push_back(c);
          }
      }
    }
    out.push_back('"');
  }
  out.push_back(']');
  return out;
}

PromptTemplate PromptTemplate::parse(std::string_view document) {
  PromptTemplate t;
  bool have_dialect = false, have_kind = false, have_trim = false;

  std::size_t pos = 0;
  for (;;) {
    std::size_t nl = document.find('\n', pos);
    if (nl == std::string_view::npos) throw TemplateError("template has no '---' separator");
    std::string_view line = document.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == "---") break;
    if (trim(line).empty()) continue;

    std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw TemplateError("bad header line '" + std::string(line) + "'");
    }
    std::string_view key = trim(line.substr(0, colon));
    std::string value(trim(line.substr(colon + 1)));
    if (!value.empty() && value.front() == '"') {
      try {
        value = nlohmann::json::parse(value).get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw TemplateError("bad quoted value for " + std::string(key) + ": " + e.what());
      }
    }
    if (key == "dialect") {
      auto d = dialect_from_name(value);
      if (!d) throw TemplateError("unknown dialect '" + value + "'");
      t.dialect = *d;
      have_dialect = true;
    } else if (key == "kind") {
      auto k = prompt_kind_from_name(value);
      if (!k) throw TemplateError("unknown prompt kind '" + value + "'");
      t.kind = *k;
      have_kind = true;
    } else if (key == "trim_marker") {
      t.trim_marker = value;
      have_trim = true;
    } else if (key == "answer_format") {
      if (value == "list") {
        t.answer_format = AnswerFormat::List;
      } else if (value == "raw") {
        t.answer_format = AnswerFormat::Raw;
      } else {
        throw TemplateError("unknown answer_format '" + value + "'");
      }
    } else {
      throw TemplateError("unknown header key '" + std::string(key) + "'");
    }
  }
  if (!have_dialect || !have_kind || !have_trim) {
    throw TemplateError("template header needs dialect, kind and trim_marker");
  }
  t.body = std::string(document.substr(pos));

  std::string where = std::string(dialect_name(t.dialect)) + "/" +
                      std::string(prompt_kind_name(t.kind));
  if (t.trim_marker.empty() || count_occurrences(t.body, t.trim_marker) != 1) {
    throw TemplateError(where + ": trim marker must occur exactly once");
  }
  auto expected = expected_slots(t.kind);
  for (std::size_t i = 0; i < kMarkers.size(); ++i) {
    std::size_t n = count_occurrences(t.body, kMarkers[i].text);
    if (expected[i] && n != 1) {
      throw TemplateError(where + ": expected exactly one " + std::string(kMarkers[i].text));
    }
    if (!expected[i] && n != 0) {
      throw TemplateError(where + ": unexpected " + std::string(kMarkers[i].text));
    }
  }
  if (t.kind != PromptKind::FormatRepair) {
    std::size_t trim_end = t.body.find(t.trim_marker) + t.trim_marker.size();
    if (t.body.find("{answer}") < trim_end) {
      throw TemplateError(where + ": {answer} must follow the trim marker");
    }
  }
  return t;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  for (Dialect d : kDialects) {
    for (PromptKind k : kKinds) {
      auto path = dir / std::string(dialect_name(d)) / (std::string(prompt_kind_name(k)) + ".tmpl");
      PromptTemplate t;
      try {
        t = PromptTemplate::parse(read_file(path));
      } catch (const TemplateError& e) {
        throw TemplateError(path.string() + ": " + e.what());
      } catch (const Error& e) {
        throw TemplateError(e.what());
      }
      if (t.dialect != d || t.kind != k) {
        throw TemplateError(path.string() + ": header does not match file location");
      }
      lib.templates_[library_slot(d, k)] = std::move(t);
    }
  }
  return lib;
}

PromptLibrary PromptLibrary::load_default() { return load(default_data_dir() / "templates"); }

const PromptTemplate& PromptLibrary::get(Dialect d, PromptKind k) const {
  return templates_[library_slot(d, k)];
}

RenderedPrompt PromptLibrary::render_training(PromptKind k, Dialect d,
                                              const PromptSlots& slots) const {
  const auto& t = get(d, k);
  return {substitute(t.body, slots, t.answer_format, t), d, k, Phase::Training};
}

RenderedPrompt PromptLibrary::render_inference(PromptKind k, Dialect d,
                                               const PromptSlots& slots) const {
  const auto& t = get(d, k);
  std::string_view body = t.body;
  body = body.substr(0, body.find(t.trim_marker) + t.trim_marker.size());
  return {substitute(body, slots, t.answer_format, t), d, k, Phase::Inference};
}

RenderedPrompt PromptLibrary::render_repair(Dialect d, std::string_view bad_answer) const {
  if (bad_answer.empty()) throw PreconditionError("repair prompt needs a non-empty answer");
  PromptSlots slots;
  slots.answer = std::vector<std::string>{std::string(bad_answer)};
  return render_inference(PromptKind::FormatRepair, d, slots);
}

}  // namespace lmkb
