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

#include "lmkb/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lmkb/upstream.hpp"

namespace lmkb {

// ---------------------------------------------------------------------------
// Tokenization

std::vector<TokenSpan> WhitespaceTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t begin = i;
    while (i < text.size() && !is_ascii_space(text[i])) ++i;
    out.push_back({begin, i});
  }
  return out;
}

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = is_ascii_space(c);
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

const Tokenizer& default_tokenizer() {
  static const WhitespaceTokenizer instance;
  return instance;
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<Chunk> chunk_tokens(std::string_view text, const Tokenizer& tokenizer,
                                std::size_t size, std::size_t overlap, std::string_view doc_id) {
  if (size == 0) throw PreconditionError("chunk size must be positive");
  if (overlap >= size) throw PreconditionError("chunk overlap must be smaller than chunk size");

  const auto tokens = tokenizer.tokenize(text);
  const std::size_t n = tokens.size();
  const std::size_t stride = size - overlap;

  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < n; start += stride) {
    std::size_t end = std::min(start + size, n);
    Chunk c;
    c.doc_id = std::string(doc_id);
    c.index = chunks.size();
    c.token_start = start;
    c.token_end = end;
    c.text = std::string(text.substr(tokens[start].begin, tokens[end - 1].end - tokens[start].begin));
    chunks.push_back(std::move(c));
    if (end == n) break;
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Embeddings

std::string_view embedding_role_name(EmbeddingRole r) noexcept {
  return r == EmbeddingRole::Query ? "query" : "context";
}

MockEmbedder::MockEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw PreconditionError("embedding dimension must be positive");
}

std::vector<EmbeddingVector> MockEmbedder::embed(std::span<const std::string> texts,
                                                 EmbeddingRole role) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  WhitespaceTokenizer tok;
  for (const auto& text : texts) {
    EmbeddingVector v;
    v.role = role;
    v.values.assign(dim_, 0.0f);
    for (const auto& span : tok.tokenize(text)) {
      // Lowercase and drop surrounding punctuation so "India," matches "india".
      std::string token = ascii_lower(text.substr(span.begin, span.end - span.begin));
      auto is_punct = [](char c) {
        auto u = static_cast<unsigned char>(c);
        return u < 0x80 && !std::isalnum(u);
      };
      while (!token.empty() && is_punct(token.front())) token.erase(token.begin());
      while (!token.empty() && is_punct(token.back())) token.pop_back();
      if (token.empty()) continue;
      std::uint64_t h = fnv1a64(token);
      std::size_t bucket = static_cast<std::size_t>(h % dim_);
      float sign = ((h >> 32) & 1U) ? 1.0f : -1.0f;
      v.values[bucket] += sign;
    }
    double norm = 0.0;
    for (float x : v.values) norm += static_cast<double>(x) * x;
    if (norm > 0) {
      float inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (float& x : v.values) x *= inv;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(std::shared_ptr<Upstream> upstream, std::string endpoint)
    : upstream_(std::move(upstream)), endpoint_(std::move(endpoint)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed(std::span<const std::string> texts,
                                                 EmbeddingRole role) {
  if (texts.empty()) return {};
  nlohmann::json body;
  body["role"] = embedding_role_name(role);
  body["texts"] = std::vector<std::string>(texts.begin(), texts.end());

  RequestKey key{"embed", {{"endpoint", endpoint_}, {"request", body}}};
  HttpRequest req;
  req.method = "POST";
  req.url = endpoint_;
  req.body = body.dump();
  req.content_type = "application/json";

  std::string payload;
  try {
    payload = upstream_->fetch(key, req);
  } catch (const InfrastructureError&) {
    throw;
  } catch (const Error& e) {
    throw RetrievalError(std::string("embedding endpoint failed: ") + e.what());
  }

  std::vector<EmbeddingVector> out;
  try {
    auto doc = nlohmann::json::parse(payload);
    const auto& vectors = doc.at("vectors");
    if (!vectors.is_array() || vectors.size() != texts.size()) {
      throw RetrievalError("embedding endpoint returned " + std::to_string(vectors.size()) +
                           " vectors for " + std::to_string(texts.size()) + " texts");
    }
    for (const auto& row : vectors) {
      EmbeddingVector v;
      v.role = role;
      v.values = row.get<std::vector<float>>();
      for (float x : v.values) {
        if (!std::isfinite(x)) throw RetrievalError("embedding endpoint returned a non-finite value");
      }
      out.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw RetrievalError(std::string("malformed embedding response: ") + e.what());
  }
  for (const auto& v : out) {
    if (v.dim() != out.front().dim() || v.dim() == 0) {
      throw RetrievalError("embedding endpoint returned vectors of unequal dimension");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact search

namespace {

double dot(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void normalize(std::span<float> v) {
  double norm = std::sqrt(dot(v.data(), v.data(), v.size()));
  if (norm == 0) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

}  // namespace

VectorIndex VectorIndex::build(std::vector<Chunk> chunks, std::vector<EmbeddingVector> vectors,
                               Similarity similarity) {
  if (chunks.size() != vectors.size()) {
    throw RetrievalError("index build: " + std::to_string(chunks.size()) + " chunks but " +
                         std::to_string(vectors.size()) + " vectors");
  }
  VectorIndex index;
  index.similarity_ = similarity;
  index.dim_ = vectors.empty() ? 0 : vectors.front().dim();
  index.matrix_.reserve(vectors.size() * index.dim_);
  for (const auto& v : vectors) {
    if (v.role != EmbeddingRole::Context) throw RetrievalError("index entries must be context embeddings");
    if (v.dim() != index.dim_) throw RetrievalError("index build: embedding dimension mismatch");
    for (float x : v.values) {
      if (!std::isfinite(x)) throw RetrievalError("index build: non-finite embedding value");
    }
    index.matrix_.insert(index.matrix_.end(), v.values.begin(), v.values.end());
  }
  if (similarity == Similarity::Cosine) {
    for (std::size_t r = 0; r < vectors.size(); ++r) {
      normalize(std::span<float>(index.matrix_.data() + r * index.dim_, index.dim_));
    }
  }
  index.chunks_ = std::move(chunks);
  return index;
}

std::vector<RankedChunk> VectorIndex::top_k(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw PreconditionError("top_k needs k >= 1");
  if (query.role != EmbeddingRole::Query) throw RetrievalError("top_k needs a query embedding");
  if (chunks_.empty()) return {};
  if (query.dim() != dim_) {
    throw RetrievalError("query dimension " + std::to_string(query.dim()) +
                         " does not match index dimension " + std::to_string(dim_));
  }

  std::vector<float> q = query.values;
  if (similarity_ == Similarity::Cosine) normalize(q);

  std::vector<double> scores(chunks_.size());
  for (std::size_t r = 0; r < chunks_.size(); ++r) {
    scores[r] = dot(matrix_.data() + r * dim_, q.data(), dim_);
  }
  std::vector<std::size_t> order(chunks_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (chunks_[a].index != chunks_[b].index) return chunks_[a].index < chunks_[b].index;
    return a < b;
  };
  std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);

  std::vector<RankedChunk> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({chunks_[order[i]], scores[order[i]]});
  return out;
}

std::string make_context(std::span<const RankedChunk> ranked, std::size_t k) {
  std::string out;
  std::size_t take = std::min(k, ranked.size());
  for (std::size_t i = 0; i < take; ++i) {
    if (i) out.push_back('\n');
    out += ranked[i].chunk.text;
  }
  return out;
}

std::vector<RankedChunk> retrieve_chunks(std::string_view doc_id, std::string_view page_text,
                                         std::string_view question, std::size_t k,
                                         Embedder& embedder, const Tokenizer& tokenizer,
                                         const RetrievalOptions& options) {
  auto chunks = chunk_tokens(page_text, tokenizer, options.chunk_size, options.chunk_overlap, doc_id);
  if (chunks.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embedder.embed(texts, EmbeddingRole::Context);
  auto index = VectorIndex::build(std::move(chunks), std::move(vectors), options.similarity);
  std::vector<std::string> q{std::string(question)};
  auto qv = embedder.embed(q, EmbeddingRole::Query);
  if (qv.size() != 1) throw RetrievalError("embedder returned no query vector");
  return index.top_k(qv.front(), k);
}

}  // namespace lmkb
