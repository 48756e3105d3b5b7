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

#include "lmkb/instructgen.hpp"

#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "lmkb/linking.hpp"
#include "lmkb/upstream.hpp"

namespace lmkb {

void SplitSpec::validate() const {
  if (method != 1 && method != 2) {
    throw PreconditionError("split method must be 1 or 2, got " + std::to_string(method));
  }
}

// ---------------------------------------------------------------------------

RetrievalContextProvider::RetrievalContextProvider(Corpus& corpus, Embedder& embedder,
                                                   const Tokenizer& tokenizer, std::size_t k,
                                                   RetrievalOptions options)
    : corpus_(corpus), embedder_(embedder), tokenizer_(tokenizer), k_(k), options_(options) {
  if (k_ == 0) throw PreconditionError("context provider needs k >= 1");
}

std::string RetrievalContextProvider::context_for(const Record& record,
                                                  std::string_view question) {
  auto page = corpus_.fetch_page_text(record.subject_id);
  if (!page) return {};
  auto ranked =
      retrieve_chunks(record.subject_id, page->text, question, k_, embedder_, tokenizer_, options_);
  return make_context(ranked, k_);
}

CachedContextProvider CachedContextProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open context file " + path.string());
  CachedContextProvider out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      auto rel_name = doc.at("Relation").get<std::string>();
      auto rel = relation_from_name(rel_name);
      if (!rel) throw DatasetError(path.string(), "unknown relation '" + rel_name + "'", lineno);
      out.add(doc.at("SubjectEntityID").get<std::string>(), *rel,
              doc.at("context").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string(), e.what(), lineno);
    }
  }
  return out;
}

void CachedContextProvider::add(std::string subject_id, Relation relation, std::string context) {
  contexts_[{std::move(subject_id), relation}] = std::move(context);
}

std::string CachedContextProvider::context_for(const Record& record, std::string_view) {
  auto it = contexts_.find({record.subject_id, record.relation});
  if (it == contexts_.end()) {
    throw Error("no cached context for " + record.subject_id + " " +
                std::string(relation_name(record.relation)));
  }
  return it->second;
}

CorpusOptionsProvider::CorpusOptionsProvider(Corpus& corpus, std::size_t limit)
    : corpus_(corpus), limit_(limit) {}

std::optional<std::vector<CandidateEntity>> CorpusOptionsProvider::candidates_for(
    std::string_view label) {
  try {
    return corpus_.search_wikidata(label, limit_);
  } catch (const ReplayMissError& e) {
    log_warn(std::string("no recorded candidates for '") + std::string(label) + "': " + e.what());
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

std::vector<InstructionSample> samples_for_record(const Record& record, Dialect dialect,
                                                  GeneratorDeps& deps, std::size_t* skipped) {
  const std::string question = deps.questions.question_for(record.relation, record.subject_label);
  std::vector<InstructionSample> out;
  auto emit = [&](PromptKind kind, const PromptSlots& slots) {
    out.push_back({deps.prompts.render_training(kind, dialect, slots).text, dialect, kind,
                   record.subject_id});
  };

  std::string context;
  try {
    context = deps.contexts.context_for(record, question);
  } catch (const std::exception& e) {
    throw Error("context for " + record.subject_id + " " +
                std::string(relation_name(record.relation)) + ": " + e.what());
  }

  PromptSlots qa;
  qa.question = question;
  qa.answer = record.object_labels;
  qa.context = std::move(context);
  emit(PromptKind::ContextQa, qa);
  qa.context = std::string();
  emit(PromptKind::NoContextQa, qa);

  for (std::size_t i = 0; i < record.object_ids.size(); ++i) {
    const std::string& gold_id = record.object_ids[i];
    const std::string& gold_label = record.object_labels[i];
    auto candidates = deps.options.candidates_for(gold_label);
    if (!candidates) {
      if (skipped) ++*skipped;
      log_warn("skipping option-select sample for " + record.subject_id + " -> " + gold_id);
      continue;
    }
    // The gold entity is appended when the search missed it, so the answer
    // is always one of the options.
    bool present = false;
    for (const auto& c : *candidates) present = present || c.entity_id == gold_id;
    if (!present) candidates->push_back({gold_id, gold_label, ""});

    OptionsBlock block = build_options_block(*candidates);
    std::string answer = gold_label;
    for (std::size_t j = 0; j < block.entities.size(); ++j) {
      if (block.entities[j].entity_id == gold_id) answer = block.titles[j];
    }
    PromptSlots sel;
    sel.options = block.text;
    sel.question = question;
    sel.answer = std::vector<std::string>{answer};
    emit(PromptKind::OptionSelect, sel);
  }
  return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  // Unbiased draw from [0, bound] by rejection; std::uniform_int_distribution
  // is implementation-defined and would differ across standard libraries.
  auto draw = [&](std::uint64_t bound) {
    if (bound == 0) return std::uint64_t{0};
    const std::uint64_t range = bound + 1;
    if (range == 0) return rng();
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    for (;;) {
      std::uint64_t x = rng();
      if (x < limit) return x % range;
    }
  };
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(draw(i - 1));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

GeneratedSamples generate(std::span<const Record> train_records,
                          std::span<const Record> val_records, const SplitSpec& spec,
                          Dialect dialect, GeneratorDeps& deps) {
  spec.validate();
  GeneratedSamples out;
  auto emit_all = [&](std::span<const Record> records, std::vector<InstructionSample>& dest) {
    for (const auto& r : records) {
      auto samples = samples_for_record(r, dialect, deps, &out.skipped_option_samples);
      dest.insert(dest.end(), std::make_move_iterator(samples.begin()),
                  std::make_move_iterator(samples.end()));
    }
  };

  if (spec.method == 2) {
    emit_all(train_records, out.train);
    emit_all(val_records, out.validation);
    return out;
  }

  std::vector<InstructionSample> pool;
  emit_all(train_records, pool);
  emit_all(val_records, pool);
  if (spec.holdout_count > pool.size()) {
    throw PreconditionError("holdout of " + std::to_string(spec.holdout_count) +
                            " exceeds the pool of " + std::to_string(pool.size()) + " samples");
  }
  auto perm = seeded_permutation(pool.size(), spec.seed);
  const std::size_t n_train = pool.size() - spec.holdout_count;
  out.train.reserve(n_train);
  out.validation.reserve(spec.holdout_count);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < n_train ? out.train : out.validation).push_back(std::move(pool[perm[i]]));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string serialize_sample(const InstructionSample& s) {
  nlohmann::ordered_json doc;
  doc["text"] = s.text;
  doc["dialect"] = dialect_name(s.dialect);
  doc["kind"] = prompt_kind_name(s.kind);
  doc["source_subject_id"] = s.source_subject_id;
  return doc.dump();
}

InstructionSample parse_sample(std::string_view line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed sample: ") + e.what());
  }
  try {
    InstructionSample s;
    s.text = doc.at("text").get<std::string>();
    auto dialect = dialect_from_name(doc.at("dialect").get<std::string>());
    auto kind = prompt_kind_from_name(doc.at("kind").get<std::string>());
    if (!dialect) throw DatasetError("unknown dialect " + doc["dialect"].dump());
    if (!kind || *kind == PromptKind::FormatRepair) {
      throw DatasetError("unknown sample kind " + doc["kind"].dump());
    }
    s.dialect = *dialect;
    s.kind = *kind;
    s.source_subject_id = doc.at("source_subject_id").get<std::string>();
    if (s.text.empty()) throw DatasetError("sample text is empty");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed sample: ") + e.what());
  }
}

std::size_t write_samples(std::span<const InstructionSample> samples,
                          const std::filesystem::path& path) {
  std::string body;
  for (const auto& s : samples) {
    body += serialize_sample(s);
    body += '\n';
  }
  write_file_atomic(path, body);
  return samples.size();
}

std::vector<InstructionSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open sample file " + path.string());
  std::vector<InstructionSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_sample(line));
    } catch (const DatasetError& e) {
      throw DatasetError(path.string(), e.what(), lineno);
    }
  }
  return out;
}

}  // namespace lmkb
