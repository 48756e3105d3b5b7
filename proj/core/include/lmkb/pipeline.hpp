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
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmkb/answerparse.hpp"
#include "lmkb/corpus.hpp"
#include "lmkb/dataset.hpp"
#include "lmkb/linking.hpp"
#include "lmkb/llmclient.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"

namespace lmkb {

struct RunConfig {
  Dialect dialect = Dialect::LlamaChat;
  std::size_t top_k = 3;
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t chunk_overlap = kDefaultChunkOverlap;
  Similarity similarity = Similarity::InnerProduct;
  GenerationParams generation;
  std::size_t parallelism = 1;
  bool offline = false;
  /// Wall-clock cap per record. Unset means 120 s live and no cap offline.
  std::optional<std::chrono::milliseconds> record_budget;
  /// Fraction of records that may fail on model/API errors before the whole
  /// batch is abandoned.
  double abort_threshold = 0.10;
  std::size_t candidate_limit = kDefaultCandidateLimit;
  int max_repairs = 1;

  /// PreconditionError on top_k == 0, bad chunk parameters, parallelism == 0
  /// or a threshold outside [0, 1].
  void validate() const;
  std::optional<std::chrono::milliseconds> effective_budget() const;
};

struct RecordDiagnostics {
  bool context_used = false;
  std::size_t context_chunks = 0;
  ParseStatus parse_status = ParseStatus::Failed;
  int repair_count = 0;
  /// A model or API call failed; counted against the abort threshold.
  bool failed = false;
  std::vector<std::string> errors;
  std::chrono::milliseconds elapsed{0};  // not serialized
};

struct Prediction {
  std::string subject_id;
  std::string subject_label;
  Relation relation = Relation::BandHasMember;
  std::vector<LinkedObject> objects;
  std::vector<std::string> object_ids;  // resolved ids of objects, in order
  RecordDiagnostics diagnostics;
};

/// Everything a record needs. All members must be safe for concurrent use.
struct PipelineDeps {
  Corpus& corpus;
  Embedder& embedder;
  const Tokenizer& tokenizer;
  const PromptLibrary& prompts;
  const QuestionTable& questions;
  LlmClient& llm;
};

/// Runs one stub record through retrieval, prompting, parsing and linking.
/// Model and API failures are folded into the diagnostics; only
/// InfrastructureError escapes.
Prediction infer_record(const Record& stub, const RunConfig& config, PipelineDeps& deps);

/// One JSON line, no trailing newline. Field order: SubjectEntityID,
/// SubjectEntity, ObjectEntitiesID, ObjectEntities, Relation, diagnostics.
/// Timings are left out so reruns are byte-identical.
std::string serialize_prediction(const Prediction& prediction);

/// A batch stopped early: an infrastructure error on one record, or too many
/// failed records.
class BatchAbortError : public Error {
 public:
  using Error::Error;
};

struct RunSummary {
  std::size_t records = 0;
  std::array<std::size_t, kRelationCount> per_relation{};
  std::size_t failed = 0;          // records with a model/API failure
  std::size_t parse_failed = 0;    // answers that stayed unparseable
  std::size_t repaired = 0;
  std::size_t context_used = 0;
  std::size_t objects = 0;
  std::size_t unresolved = 0;
  std::chrono::milliseconds wall{0};
};

/// Predictions in input order regardless of parallelism.
std::vector<Prediction> run_records(std::span<const Record> stubs, const RunConfig& config,
                                    PipelineDeps& deps, RunSummary* summary = nullptr);

/// Reads stubs, runs them and writes one prediction line per input record.
/// Nothing is written when the batch aborts.
RunSummary run_batch(const std::filesystem::path& input, const std::filesystem::path& output,
                     const RunConfig& config, PipelineDeps& deps);

}  // namespace lmkb
