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

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "lmkb/answerparse.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"

namespace lmkb {
namespace {

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "token" + std::to_string(i % 97) + ' ';
  return s;
}

void BM_ChunkTokens(benchmark::State& state) {
  const std::string text = words(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(chunk_tokens(text, default_tokenizer()));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ChunkTokens)->Arg(300)->Arg(5000)->Arg(50000);

void BM_TopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 768;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  std::vector<Chunk> chunks(n);
  std::vector<EmbeddingVector> vecs(n);
  for (std::size_t i = 0; i < n; ++i) {
    chunks[i].index = i;
    vecs[i].values.resize(dim);
    for (auto& v : vecs[i].values) v = g(rng);
  }
  EmbeddingVector q{std::vector<float>(dim), EmbeddingRole::Query};
  for (auto& v : q.values) v = g(rng);
  auto index = VectorIndex::build(std::move(chunks), std::move(vecs));
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.top_k(q, 3));
  }
}
BENCHMARK(BM_TopK)->Arg(20)->Arg(1000)->Arg(20000);

void BM_MockEmbed(benchmark::State& state) {
  MockEmbedder embedder(64);
  std::vector<std::string> texts(16, words(300));
  for (auto _ : state) {
    benchmark::DoNotOptimize(embedder.embed(texts, EmbeddingRole::Context));
  }
}
BENCHMARK(BM_MockEmbed);

void BM_ParseList(benchmark::State& state) {
  std::vector<std::string> items;
  for (int i = 0; i < state.range(0); ++i) items.push_back("Item \"" + std::to_string(i) + "\" é");
  const std::string literal = "Answer: " + serialize_answer_list(items);
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_list_literal(literal));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(literal.size()));
}
BENCHMARK(BM_ParseList)->Arg(1)->Arg(10)->Arg(200);

}  // namespace
}  // namespace lmkb

BENCHMARK_MAIN();
