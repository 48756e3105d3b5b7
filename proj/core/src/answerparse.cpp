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

#include "lmkb/answerparse.hpp"

#include <unordered_set>

namespace lmkb {

namespace {

bool is_quote(char c) { return c == '"' || c == '\''; }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Recursive descent over:
//   list   := '[' items ']' | items ']'      (second form: opening bracket lost)
//   items  := ws (string ws (',' ws string ws)* (',' ws)?)?
//   string := '"' chars '"' | '\'' chars '\''
class ListParser {
 public:
  explicit ListParser(std::string_view src) : src_(src) {}

  std::vector<std::string> parse() {
    std::size_t body = skip_label(0);
    if (body < src_.size() && is_quote(src_[body])) return parse_items(body, false);

    std::size_t open = src_.find('[', body);
    if (open != std::string_view::npos) return parse_items(open + 1, true);

    if (src_.find(']', body) != std::string_view::npos) {
      std::size_t first_quote = src_.find_first_of("\"'", body);
      if (first_quote != std::string_view::npos) return parse_items(first_quote, false);
    }
    throw ParseError(body, "no list-like region found");
  }

 private:
  std::size_t skip_ws(std::size_t i) const {
    while (i < src_.size() && is_ascii_space(src_[i])) ++i;
    return i;
  }

  std::size_t skip_label(std::size_t i) const {
    i = skip_ws(i);
    constexpr std::string_view kLabel = "answer:";
    if (starts_with_ci(src_.substr(i), kLabel)) i = skip_ws(i + kLabel.size());
    return i;
  }

  std::vector<std::string> parse_items(std::size_t i, bool bracketed) {
    std::vector<std::string> items;
    bool expect_item = true;  // false right after an item, until a comma
    for (;;) {
      i = skip_ws(i);
      if (i >= src_.size()) {
        throw ParseError(i, bracketed ? "unterminated list: missing ']'" : "missing closing ']'");
      }
      char c = src_[i];
      if (c == ']') return items;
      if (expect_item) {
        if (!is_quote(c)) {
          throw ParseError(i, std::string("unexpected character '") + c + "' inside list");
        }
        items.push_back(parse_string(i));
        expect_item = false;
        continue;
      }
      if (c != ',') {
        throw ParseError(i, std::string("expected ',' or ']' but found '") + c + "'");
      }
      ++i;
      expect_item = true;
    }
  }

  // On return `i` points just past the closing quote.
  std::string parse_string(std::size_t& i) {
    const std::size_t open = i;
    const char quote = src_[i++];
    std::string out;
    while (i < src_.size()) {
      char c = src_[i];
      if (c == quote) {
        ++i;
        return out;
      }
      if (c != '\\') {
        out.push_back(c);
        ++i;
        continue;
      }
      if (i + 1 >= src_.size()) break;
      char e = src_[i + 1];
      i += 2;
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '\\': out.push_back('\\'); break;
        case '\'': out.push_back('\''); break;
        case '"': out.push_back('"'); break;
        case '/': out.push_back('/'); break;
        case 'x': {
          int hi = i < src_.size() ? hex_value(src_[i]) : -1;
          int lo = i + 1 < src_.size() ? hex_value(src_[i + 1]) : -1;
          if (hi < 0 || lo < 0) throw ParseError(i - 2, "bad \\x escape");
          append_utf8(out, static_cast<char32_t>(hi * 16 + lo));
          i += 2;
          break;
        }
        case 'u': {
          char32_t cp = read_hex4(i);
          if (cp >= 0xD800 && cp <= 0xDBFF && src_.substr(i, 2) == "\\u") {
            std::size_t save = i;
            i += 2;
            char32_t low = read_hex4(i);
            if (low >= 0xDC00 && low <= 0xDFFF) {
              cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
            } else {
              i = save;
            }
          }
          append_utf8(out, cp);
          break;
        }
        default:
          // Unknown escapes are kept literally, as Python does.
          out.push_back('\\');
          out.push_back(e);
      }
    }
    throw ParseError(open, "unterminated string");
  }

  char32_t read_hex4(std::size_t& i) {
    if (i + 4 > src_.size()) throw ParseError(i, "truncated \\u escape");
    char32_t cp = 0;
    for (int k = 0; k < 4; ++k) {
      int v = hex_value(src_[i + static_cast<std::size_t>(k)]);
      if (v < 0) throw ParseError(i, "bad \\u escape");
      cp = cp * 16 + static_cast<char32_t>(v);
    }
    i += 4;
    return cp;
  }

  std::string_view src_;
};

}  // namespace

ParseError::ParseError(std::size_t position, const std::string& message)
    : Error("at offset " + std::to_string(position) + ": " + message), position_(position) {}

std::vector<std::string> parse_list_literal(std::string_view raw) { return ListParser(raw).parse(); }

std::string normalize_surface(std::string_view s) {
  std::string_view v = trim(s);
  for (;;) {
    std::string_view before = v;
    while (!v.empty() && is_quote(v.front())) v.remove_prefix(1);
    while (!v.empty() && is_quote(v.back())) v.remove_suffix(1);
    v = trim(v);
    if (v.size() == before.size()) break;
  }
  return collapse_whitespace(v);
}

std::string_view parse_status_name(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::Repaired: return "repaired";
    case ParseStatus::Failed: return "failed";
  }
  return "?";
}

std::vector<std::string> clean_items(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    std::string n = normalize_surface(item);
    if (n.empty() || !seen.insert(n).second) continue;
    out.push_back(std::move(n));
  }
  return out;
}

ParsedAnswer parse_with_repair(std::string_view raw, LlmClient& llm, const PromptLibrary& prompts,
                               const RepairSettings& settings) {
  ParsedAnswer out;
  out.raw = std::string(raw);
  try {
    out.items = clean_items(parse_list_literal(raw));
    out.status = ParseStatus::Clean;
    return out;
  } catch (const ParseError& e) {
    out.failure = e.what();
    log_warn("unparseable answer (" + out.failure + "): " + out.raw);
  }

  std::string current(raw);
  for (int attempt = 0; attempt < settings.max_repairs; ++attempt) {
    if (trim(current).empty()) break;
    ++out.repair_attempts;
    try {
      RenderedPrompt prompt = prompts.render_repair(settings.dialect, current);
      Completion c = llm.complete(prompt, settings.generation);
      current = c.text;
      out.items = clean_items(parse_list_literal(c.text));
      out.status = ParseStatus::Repaired;
      out.failure.clear();
      return out;
    } catch (const InfrastructureError&) {
      throw;
    } catch (const ParseError& e) {
      out.failure = std::string("repair output unparseable ") + e.what();
      log_warn(out.failure + ": " + current);
    } catch (const std::exception& e) {
      out.failure = std::string("repair call failed: ") + e.what();
      log_warn(out.failure);
      break;
    }
  }
  out.items.clear();
  out.status = ParseStatus::Failed;
  return out;
}

}  // namespace lmkb
