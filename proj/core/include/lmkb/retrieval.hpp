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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmkb/common.hpp"

namespace lmkb {

class Upstream;

class RetrievalError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tokenization

/// Byte range [begin, end) of one token inside the tokenized text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Tokenizers report byte spans so any token range maps back to the exact
/// original substring.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
  virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

/// Maximal runs of non-whitespace bytes.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
  std::size_t count(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

// ---------------------------------------------------------------------------
// Chunking

struct Chunk {
  std::string doc_id;
  std::size_t index = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
  std::string text;

  bool operator==(const Chunk&) const = default;
};

inline constexpr std::size_t kDefaultChunkSize = 300;
inline constexpr std::size_t kDefaultChunkOverlap = 50;

/// Overlapping windows of `size` tokens advancing by size - overlap. The last
/// window ends at the last token and may be shorter. Chunk text is the
/// original substring from the first to the last token of the window.
std::vector<Chunk> chunk_tokens(std::string_view text, const Tokenizer& tokenizer,
                                std::size_t size = kDefaultChunkSize,
                                std::size_t overlap = kDefaultChunkOverlap,
                                std::string_view doc_id = {});

// ---------------------------------------------------------------------------
// Embeddings

enum class EmbeddingRole { Query, Context };

std::string_view embedding_role_name(EmbeddingRole r) noexcept;

struct EmbeddingVector {
  std::vector<float> values;
  EmbeddingRole role = EmbeddingRole::Context;

  std::size_t dim() const noexcept { return values.size(); }
};

/// Dual-role text encoder. Implementations must return one vector per input
/// in input order, all of the same dimension.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts,
                                             EmbeddingRole role) = 0;
};

/// Hashed bag of lowercase tokens projected to `dim` signed buckets and
/// L2-normalized. Deterministic and role-agnostic; texts without tokens map
/// to the zero vector.
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(std::size_t dim = 64);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts,
                                     EmbeddingRole role) override;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

/// Remote encoder. Wire format: POST {"role": "query"|"context", "texts": [...]}
/// answered by {"vectors": [[...], ...]}. Calls go through the upstream layer
/// so they are cached and replayable like every other network call.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::shared_ptr<Upstream> upstream, std::string endpoint);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts,
                                     EmbeddingRole role) override;

 private:
  std::shared_ptr<Upstream> upstream_;
  std::string endpoint_;
};

// ---------------------------------------------------------------------------
// Exact search

enum class Similarity { InnerProduct, Cosine };

struct RankedChunk {
  Chunk chunk;
  double score = 0.0;
};

/// Flat, exact index over context embeddings. Immutable after build, so
/// concurrent top_k calls are safe.
class VectorIndex {
 public:
  static VectorIndex build(std::vector<Chunk> chunks, std::vector<EmbeddingVector> vectors,
                           Similarity similarity = Similarity::InnerProduct);

  std::size_t size() const noexcept { return chunks_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return chunks_.empty(); }

  /// The k best entries by descending score; ties go to the lower chunk
  /// index. k larger than size() returns everything.
  std::vector<RankedChunk> top_k(const EmbeddingVector& query, std::size_t k) const;

 private:
  std::vector<Chunk> chunks_;
  std::vector<float> matrix_;  // row-major, size() x dim_
  std::size_t dim_ = 0;
  Similarity similarity_ = Similarity::InnerProduct;
};

/// First min(k, ranked.size()) chunk texts, joined by '\n'.
std::string make_context(std::span<const RankedChunk> ranked, std::size_t k);

struct RetrievalOptions {
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t chunk_overlap = kDefaultChunkOverlap;
  Similarity similarity = Similarity::InnerProduct;
};

/// Chunks one page, embeds the chunks and the question, and returns the
/// best k chunks. Builds a throwaway per-page index.
std::vector<RankedChunk> retrieve_chunks(std::string_view doc_id, std::string_view page_text,
                                         std::string_view question, std::size_t k,
                                         Embedder& embedder, const Tokenizer& tokenizer,
                                         const RetrievalOptions& options = {});

}  // namespace lmkb
