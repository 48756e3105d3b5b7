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

#include "lmkb/corpus.hpp"

#include <algorithm>
#include <array>

#include <nlohmann/json.hpp>

#include "lmkb/upstream.hpp"

namespace lmkb {

namespace {

// Sites that end in "wiki" but are not a language edition of Wikipedia.
constexpr std::array<std::string_view, 12> kProjectWikis = {
    "commonswiki",   "metawiki",      "specieswiki",   "mediawikiwiki",
    "wikidatawiki",  "sourceswiki",   "incubatorwiki", "outreachwiki",
    "wikimaniawiki", "foundationwiki", "wikifunctionswiki", "testwikidatawiki",
};

bool is_language_wiki(std::string_view site) {
  constexpr std::string_view kSuffix = "wiki";
  if (site.size() <= kSuffix.size()) return false;
  if (site.substr(site.size() - kSuffix.size()) != kSuffix) return false;
  return std::find(kProjectWikis.begin(), kProjectWikis.end(), site) == kProjectWikis.end();
}

std::string normalized_surface_arg(std::string_view surface) {
  std::string s = collapse_whitespace(surface);
  if (s.empty()) throw PreconditionError("search surface is empty");
  return s;
}

template <typename T>
T parse_payload(std::string_view what, const std::string& body) {
  try {
    return T::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayloadError(std::string(what) + ": " + e.what());
  }
}

void check_api_error(std::string_view what, const nlohmann::json& doc) {
  if (doc.is_object() && doc.contains("error")) {
    throw MalformedPayloadError(std::string(what) + " returned an API error: " +
                                doc["error"].dump());
  }
}

}  // namespace

bool is_entity_id(std::string_view id) noexcept {
  if (id.size() < 2 || id[0] != 'Q') return false;
  return std::all_of(id.begin() + 1, id.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<std::pair<std::string, std::string>> choose_sitelink(
    const std::vector<std::string>& sites) {
  if (std::find(sites.begin(), sites.end(), "enwiki") != sites.end()) {
    return std::pair<std::string, std::string>{"en", "enwiki"};
  }
  for (const auto& site : sites) {
    if (!is_language_wiki(site)) continue;
    std::string lang = site.substr(0, site.size() - 4);
    std::replace(lang.begin(), lang.end(), '_', '-');
    return std::pair<std::string, std::string>{lang, site};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

WikiCorpus::WikiCorpus(std::shared_ptr<Upstream> upstream, WikiEndpoints endpoints)
    : upstream_(std::move(upstream)), endpoints_(std::move(endpoints)) {
  if (!upstream_) throw PreconditionError("WikiCorpus needs an upstream");
}

RequestKey WikiCorpus::sitelinks_key(std::string_view subject_id) {
  return {"wikidata.sitelinks", {{"id", std::string(subject_id)}}};
}

RequestKey WikiCorpus::extract_key(std::string_view language, std::string_view title) {
  return {"wikipedia.extract", {{"lang", std::string(language)}, {"title", std::string(title)}}};
}

RequestKey WikiCorpus::wikidata_search_key(std::string_view surface, std::size_t limit) {
  return {"wikidata.search",
          {{"search", normalized_surface_arg(surface)}, {"language", "en"}, {"limit", limit}}};
}

RequestKey WikiCorpus::wikipedia_search_key(std::string_view surface) {
  return {"wikipedia.search", {{"search", normalized_surface_arg(surface)}, {"lang", "en"}}};
}

std::string WikiCorpus::wikipedia_api(std::string_view language) const {
  std::string url = endpoints_.wikipedia_api;
  auto pos = url.find("{lang}");
  if (pos != std::string::npos) url.replace(pos, 6, language);
  return url;
}

std::string WikiCorpus::get(const RequestKey& key, const std::string& url) {
  const std::string hash = key.hash();
  {
    std::lock_guard lock(memo_mu_);
    if (auto it = memo_.find(hash); it != memo_.end()) return it->second;
  }
  HttpRequest req;
  req.method = "GET";
  req.url = url;
  std::string body = upstream_->fetch(key, req);
  std::lock_guard lock(memo_mu_);
  return memo_.emplace(hash, std::move(body)).first->second;
}

std::optional<PageText> WikiCorpus::fetch_page_text(std::string_view subject_id) {
  if (!is_entity_id(subject_id)) {
    throw PreconditionError("not a Wikidata item id: '" + std::string(subject_id) + "'");
  }
  const std::string id(subject_id);

  auto links_doc = parse_payload<nlohmann::ordered_json>(
      "sitelinks for " + id,
      get(sitelinks_key(id), endpoints_.wikidata_api + "?action=wbgetentities&format=json&props=sitelinks&ids=" +
                                 percent_encode(id)));
  check_api_error("wbgetentities", links_doc);

  std::vector<std::string> sites;
  std::unordered_map<std::string, std::string> titles;
  try {
    const auto& entity = links_doc.at("entities").at(id);
    if (entity.contains("missing")) return std::nullopt;
    if (entity.contains("sitelinks")) {
      for (const auto& [site, link] : entity.at("sitelinks").items()) {
        sites.push_back(site);
        titles[site] = link.at("title").get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayloadError("sitelinks for " + id + ": " + e.what());
  }

  auto chosen = choose_sitelink(sites);
  if (!chosen) return std::nullopt;
  const auto& [language, site] = *chosen;
  const std::string& title = titles[site];

  auto page_doc = parse_payload<nlohmann::json>(
      "extract for " + id,
      get(extract_key(language, title),
          wikipedia_api(language) +
              "?action=query&format=json&formatversion=2&prop=extracts&explaintext=1&redirects=1&titles=" +
              percent_encode(title)));
  check_api_error("extracts", page_doc);

  try {
    const auto& pages = page_doc.at("query").at("pages");
    if (!pages.is_array() || pages.empty()) return std::nullopt;
    const auto& page = pages.at(0);
    if (page.contains("missing") || !page.contains("extract")) return std::nullopt;
    std::string text = page.at("extract").get<std::string>();
    if (trim(text).empty()) return std::nullopt;
    return PageText{id, language, page.value("title", title), std::move(text)};
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayloadError("extract for " + id + ": " + e.what());
  }
}

std::vector<CandidateEntity> WikiCorpus::search_wikidata(std::string_view surface,
                                                         std::size_t limit) {
  if (limit == 0) return {};
  RequestKey key = wikidata_search_key(surface, limit);
  const std::string search = key.args.at("search").get<std::string>();
  auto doc = parse_payload<nlohmann::json>(
      "wikidata search",
      get(key, endpoints_.wikidata_api +
                   "?action=wbsearchentities&format=json&type=item&language=en&uselang=en&limit=" +
                   std::to_string(limit) + "&search=" + percent_encode(search)));
  check_api_error("wbsearchentities", doc);

  std::vector<CandidateEntity> out;
  try {
    if (!doc.contains("search")) return out;
    for (const auto& hit : doc.at("search")) {
      CandidateEntity c;
      c.entity_id = hit.value("id", "");
      c.title = hit.value("label", "");
      if (c.title.empty() && hit.contains("match")) c.title = hit["match"].value("text", "");
      c.description = hit.value("description", "");
      if (!is_entity_id(c.entity_id) || c.title.empty()) continue;
      out.push_back(std::move(c));
      if (out.size() == limit) break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayloadError(std::string("wikidata search: ") + e.what());
  }
  return out;
}

std::optional<CandidateEntity> WikiCorpus::search_wikipedia_fallback(std::string_view surface) {
  RequestKey key = wikipedia_search_key(surface);
  const std::string search = key.args.at("search").get<std::string>();
  auto doc = parse_payload<nlohmann::json>(
      "wikipedia search",
      get(key, wikipedia_api("en") +
                   "?action=query&format=json&formatversion=2&generator=search&gsrlimit=1"
                   "&prop=pageprops&ppprop=wikibase_item&gsrsearch=" +
                   percent_encode(search)));
  check_api_error("wikipedia search", doc);

  try {
    if (!doc.contains("query")) return std::nullopt;
    const auto& pages = doc.at("query").at("pages");
    if (!pages.is_array() || pages.empty()) return std::nullopt;
    const auto& page = pages.at(0);
    std::string title = page.value("title", "");
    std::string qid;
    if (page.contains("pageprops")) qid = page["pageprops"].value("wikibase_item", "");
    if (!is_entity_id(qid)) {
      log_warn("wikipedia page '" + title + "' for '" + search + "' has no linked Wikidata item");
      return std::nullopt;
    }
    return CandidateEntity{qid, title, ""};
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayloadError(std::string("wikipedia search: ") + e.what());
  }
}

}  // namespace lmkb
