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
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lmkb/common.hpp"

namespace lmkb {

class Upstream;
struct RequestKey;
struct HttpRequest;

inline constexpr std::size_t kDefaultCandidateLimit = 10;

/// Plain-text body of a Wikipedia article, no infobox or markup.
struct PageText {
  std::string subject_id;
  std::string language;  // wiki language code, e.g. "en", "de", "zh-min-nan"
  std::string title;
  std::string text;
  bool operator==(const PageText&) const = default;
};

struct CandidateEntity {
  std::string entity_id;  // "Q..."
  std::string title;
  std::string description;
  bool operator==(const CandidateEntity&) const = default;
};

/// True for "Q" followed by one or more digits.
bool is_entity_id(std::string_view id) noexcept;

/// Source of page text and entity candidates. Implementations are safe for
/// concurrent use.
class Corpus {
 public:
  virtual ~Corpus() = default;
  /// English page when there is one, else the first other-language page in
  /// sitelink order, else nullopt. PreconditionError on a malformed id.
  virtual std::optional<PageText> fetch_page_text(std::string_view subject_id) = 0;
  /// Entity search in upstream rank order, at most `limit` results.
  virtual std::vector<CandidateEntity> search_wikidata(std::string_view surface,
                                                       std::size_t limit = kDefaultCandidateLimit) = 0;
  /// Entity behind the top full-text Wikipedia hit for `surface`.
  virtual std::optional<CandidateEntity> search_wikipedia_fallback(std::string_view surface) = 0;
};

struct WikiEndpoints {
  std::string wikidata_api = "https://www.wikidata.org/w/api.php";
  /// "{lang}" is replaced by the page language.
  std::string wikipedia_api = "https://{lang}.wikipedia.org/w/api.php";
};

/// The public MediaWiki APIs, reached through an Upstream so every response
/// is cached on disk and replayable. Cache keys hold logical arguments only
/// (no URLs), so recorded fixtures survive endpoint changes.
class WikiCorpus final : public Corpus {
 public:
  explicit WikiCorpus(std::shared_ptr<Upstream> upstream, WikiEndpoints endpoints = {});

  std::optional<PageText> fetch_page_text(std::string_view subject_id) override;
  std::vector<CandidateEntity> search_wikidata(std::string_view surface,
                                               std::size_t limit = kDefaultCandidateLimit) override;
  std::optional<CandidateEntity> search_wikipedia_fallback(std::string_view surface) override;

  /// Keys and URLs used for each call. Exposed for fixture tooling.
  static RequestKey sitelinks_key(std::string_view subject_id);
  static RequestKey extract_key(std::string_view language, std::string_view title);
  static RequestKey wikidata_search_key(std::string_view surface, std::size_t limit);
  static RequestKey wikipedia_search_key(std::string_view surface);

 private:
  std::string get(const RequestKey& key, const std::string& url);
  std::string wikipedia_api(std::string_view language) const;

  std::shared_ptr<Upstream> upstream_;
  WikiEndpoints endpoints_;
  std::mutex memo_mu_;
  std::unordered_map<std::string, std::string> memo_;  // key hash -> body
};

/// Picks the wiki to read for an entity from its sitelink site ids, in
/// upstream order: "enwiki" if present, else the first language wiki.
/// Returns the language code ("_" mapped to "-") and the site id.
std::optional<std::pair<std::string, std::string>> choose_sitelink(
    const std::vector<std::string>& sites);

}  // namespace lmkb
