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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmkb/corpus.hpp"
#include "lmkb/dataset.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"

namespace lmkb {

/// One instruction-tuning example. This is the on-disk contract read by the
/// fine-tuning harness: one JSON object per line with exactly these fields.
struct InstructionSample {
  std::string text;  // fully rendered training prompt, answer included
  Dialect dialect = Dialect::LlamaChat;
  PromptKind kind = PromptKind::ContextQa;
  std::string source_subject_id;
  bool operator==(const InstructionSample&) const = default;
};

struct SplitSpec {
  /// 1: pool train and validation records, shuffle, hold out a fixed count.
  /// 2: keep the challenge's own split, no shuffle.
  int method = 1;
  std::uint64_t seed = 0;
  std::size_t holdout_count = 1000;  // method 1 only
  void validate() const;
};

/// Context string for a record's Prompt-1 sample; empty when no page exists.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual std::string context_for(const Record& record, std::string_view question) = 0;
};

/// Fetches the page and joins the top `k` chunks (2 for training).
class RetrievalContextProvider final : public ContextProvider {
 public:
  RetrievalContextProvider(Corpus& corpus, Embedder& embedder,
                           const Tokenizer& tokenizer = default_tokenizer(), std::size_t k = 2,
                           RetrievalOptions options = {});
  std::string context_for(const Record& record, std::string_view question) override;

 private:
  Corpus& corpus_;
  Embedder& embedder_;
  const Tokenizer& tokenizer_;
  std::size_t k_;
  RetrievalOptions options_;
};

/// Contexts read from a JSON-lines file of
/// {"SubjectEntityID", "Relation", "context"} objects. A record without an
/// entry is an error.
class CachedContextProvider final : public ContextProvider {
 public:
  static CachedContextProvider load(const std::filesystem::path& path);
  void add(std::string subject_id, Relation relation, std::string context);
  std::string context_for(const Record& record, std::string_view question) override;

 private:
  std::map<std::pair<std::string, Relation>, std::string> contexts_;
};

/// Candidate entities for an object label, used to build the options block
/// of Prompt-3 samples. nullopt means "no recorded candidates": the sample
/// is skipped.
class OptionsProvider {
 public:
  virtual ~OptionsProvider() = default;
  virtual std::optional<std::vector<CandidateEntity>> candidates_for(std::string_view label) = 0;
};

/// Wikidata search through a corpus; a replay miss maps to nullopt.
class CorpusOptionsProvider final : public OptionsProvider {
 public:
  explicit CorpusOptionsProvider(Corpus& corpus, std::size_t limit = kDefaultCandidateLimit);
  std::optional<std::vector<CandidateEntity>> candidates_for(std::string_view label) override;

 private:
  Corpus& corpus_;
  std::size_t limit_;
};

struct GeneratedSamples {
  std::vector<InstructionSample> train;
  std::vector<InstructionSample> validation;
  std::size_t skipped_option_samples = 0;
};

struct GeneratorDeps {
  const PromptLibrary& prompts;
  const QuestionTable& questions;
  ContextProvider& contexts;
  OptionsProvider& options;
};

/// Samples for one record, in emission order: context-qa, no-context-qa,
/// then one option-select sample per object.
std::vector<InstructionSample> samples_for_record(const Record& record, Dialect dialect,
                                                  GeneratorDeps& deps,
                                                  std::size_t* skipped = nullptr);

/// Builds train and validation samples. Every record yields two samples
/// plus one per ground-truth object (minus skipped option samples).
GeneratedSamples generate(std::span<const Record> train_records,
                          std::span<const Record> val_records, const SplitSpec& spec,
                          Dialect dialect, GeneratorDeps& deps);

/// Seeded Fisher-Yates over mt19937_64 with a rejection-sampled bounded
/// draw, so a seed yields the same permutation on every platform. Entry i is
/// the original index placed at position i.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

std::string serialize_sample(const InstructionSample& sample);
InstructionSample parse_sample(std::string_view line);

/// Writes one JSON line per sample; returns the count.
std::size_t write_samples(std::span<const InstructionSample> samples,
                          const std::filesystem::path& path);
std::vector<InstructionSample> read_samples(const std::filesystem::path& path);

}  // namespace lmkb
