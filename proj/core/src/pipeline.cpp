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

#include "lmkb/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace lmkb {

namespace {

using Clock = std::chrono::steady_clock;

class Deadline {
 public:
  explicit Deadline(std::optional<std::chrono::milliseconds> budget)
      : start_(Clock::now()), budget_(budget) {}
  bool expired() const { return budget_ && Clock::now() - start_ > *budget_; }
  std::chrono::milliseconds elapsed() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start_);
  }

 private:
  Clock::time_point start_;
  std::optional<std::chrono::milliseconds> budget_;
};

std::string describe_record(std::size_t index, const Record& r) {
  return "record " + std::to_string(index + 1) + " (" + r.subject_id + ", " +
         std::string(relation_name(r.relation)) + ")";
}

nlohmann::ordered_json or_null(const std::optional<std::string>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

}  // namespace

void RunConfig::validate() const {
  if (top_k == 0) throw PreconditionError("top_k must be >= 1");
  if (chunk_size == 0 || chunk_overlap >= chunk_size) {
    throw PreconditionError("chunk_overlap must be smaller than a positive chunk_size");
  }
  if (parallelism == 0) throw PreconditionError("parallelism must be >= 1");
  if (!(abort_threshold >= 0.0 && abort_threshold <= 1.0)) {
    throw PreconditionError("abort_threshold must be within [0, 1]");
  }
  if (max_repairs < 0) throw PreconditionError("max_repairs must be >= 0");
  generation.validate();
}

std::optional<std::chrono::milliseconds> RunConfig::effective_budget() const {
  if (record_budget) return record_budget;
  if (offline) return std::nullopt;
  return std::chrono::milliseconds(120000);
}

Prediction infer_record(const Record& stub, const RunConfig& config, PipelineDeps& deps) {
  Deadline deadline(config.effective_budget());
  Prediction out;
  out.subject_id = stub.subject_id;
  out.subject_label = stub.subject_label;
  out.relation = stub.relation;
  auto& diag = out.diagnostics;
  auto fail = [&](std::string message) {
    diag.failed = true;
    log_warn(stub.subject_id + " " + std::string(relation_name(stub.relation)) + ": " + message);
    diag.errors.push_back(std::move(message));
  };
  auto finish = [&]() -> Prediction& {
    diag.elapsed = deadline.elapsed();
    return out;
  };

  const std::string question = deps.questions.question_for(stub.relation, stub.subject_label);

  // Retrieval. A page that cannot be read or embedded leaves the record on
  // the no-context prompt.
  std::vector<RankedChunk> ranked;
  try {
    if (auto page = deps.corpus.fetch_page_text(stub.subject_id)) {
      RetrievalOptions ropts{config.chunk_size, config.chunk_overlap, config.similarity};
      ranked = retrieve_chunks(stub.subject_id, page->text, question, config.top_k, deps.embedder,
                               deps.tokenizer, ropts);
    }
  } catch (const InfrastructureError&) {
    throw;
  } catch (const std::exception& e) {
    fail(std::string("context retrieval failed: ") + e.what());
    ranked.clear();
  }

  // Prompt 1 or 2. On a context overflow the lowest-ranked chunk is dropped
  // once and the call retried.
  Completion completion;
  std::size_t used = ranked.size();
  bool shrunk = false;
  for (;;) {
    diag.context_used = used > 0;
    diag.context_chunks = used;
    PromptSlots slots;
    slots.question = question;
    slots.context = make_context(ranked, used);
    RenderedPrompt prompt = deps.prompts.render_inference(
        diag.context_used ? PromptKind::ContextQa : PromptKind::NoContextQa, config.dialect, slots);
    try {
      completion = deps.llm.complete(prompt, config.generation);
      break;
    } catch (const InfrastructureError&) {
      throw;
    } catch (const ContextLengthError& e) {
      if (shrunk || used == 0) {
        fail(std::string("prompt does not fit the context window: ") + e.what());
        return finish();
      }
      diag.errors.push_back("context shrunk from " + std::to_string(used) + " to " +
                            std::to_string(used - 1) + " chunks to fit the window");
      --used;
      shrunk = true;
    } catch (const std::exception& e) {
      fail(std::string("completion failed: ") + e.what());
      return finish();
    }
  }

  RepairSettings repair{config.dialect, config.generation, config.max_repairs};
  ParsedAnswer parsed = parse_with_repair(completion.text, deps.llm, deps.prompts, repair);
  diag.parse_status = parsed.status;
  diag.repair_count = parsed.repair_attempts;
  if (parsed.status == ParseStatus::Failed) {
    diag.errors.push_back("answer unparseable: " + parsed.failure);
    return finish();
  }

  LinkSettings link_settings{config.dialect, config.generation, config.candidate_limit};
  std::vector<LinkedObject> linked;
  for (const auto& item : parsed.items) {
    if (deadline.expired()) {
      fail("record budget exhausted after linking " + std::to_string(linked.size()) + " of " +
           std::to_string(parsed.items.size()) + " objects");
      break;
    }
    linked.push_back(link(item, question, deps.llm, deps.corpus, deps.prompts, link_settings));
  }
  out.objects = dedupe_predictions(std::move(linked));
  for (const auto& obj : out.objects) {
    if (obj.entity_id) out.object_ids.push_back(*obj.entity_id);
  }
  return finish();
}

std::string serialize_prediction(const Prediction& p) {
  nlohmann::ordered_json doc;
  doc["SubjectEntityID"] = p.subject_id;
  doc["SubjectEntity"] = p.subject_label;
  doc["ObjectEntitiesID"] = p.object_ids;
  auto surfaces = nlohmann::ordered_json::array();
  for (const auto& obj : p.objects) surfaces.push_back(obj.surface);
  doc["ObjectEntities"] = surfaces;
  doc["Relation"] = relation_name(p.relation);

  const auto& d = p.diagnostics;
  nlohmann::ordered_json diag;
  diag["context_used"] = d.context_used;
  diag["context_chunks"] = d.context_chunks;
  diag["parse_status"] = parse_status_name(d.parse_status);
  diag["repair_count"] = d.repair_count;
  diag["failed"] = d.failed;
  auto objects = nlohmann::ordered_json::array();
  for (const auto& obj : p.objects) {
    nlohmann::ordered_json o;
    o["surface"] = obj.surface;
    o["entity_id"] = or_null(obj.entity_id);
    o["title"] = or_null(obj.chosen_title);
    o["path"] = link_path_name(obj.path);
    if (!obj.note.empty()) o["note"] = obj.note;
    objects.push_back(std::move(o));
  }
  diag["objects"] = std::move(objects);
  diag["errors"] = d.errors;
  doc["diagnostics"] = std::move(diag);
  return doc.dump();
}

std::vector<Prediction> run_records(std::span<const Record> stubs, const RunConfig& config,
                                    PipelineDeps& deps, RunSummary* summary) {
  config.validate();
  const auto start = Clock::now();
  const std::size_t n = stubs.size();
  const auto max_failed =
      static_cast<std::size_t>(std::floor(config.abort_threshold * static_cast<double>(n)));

  std::vector<std::optional<Prediction>> slots(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> stop{false};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        Prediction p = infer_record(stubs[i], config, deps);
        if (p.diagnostics.failed && failed.fetch_add(1) + 1 > max_failed) {
          throw BatchAbortError("too many failed records: " + std::to_string(failed.load()) +
                                " of " + std::to_string(n) + " exceeds the abort threshold of " +
                                std::to_string(config.abort_threshold) + "; last was " +
                                describe_record(i, stubs[i]));
        }
        slots[i] = std::move(p);
      } catch (const BatchAbortError&) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (!first_error) {
          first_error = std::make_exception_ptr(
              BatchAbortError(describe_record(i, stubs[i]) + ": " + e.what()));
        }
        stop = true;
      }
    }
  };

  std::size_t threads = std::min(config.parallelism, std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<Prediction> out;
  out.reserve(n);
  RunSummary s;
  for (auto& slot : slots) {
    Prediction& p = *slot;
    ++s.records;
    ++s.per_relation[static_cast<std::size_t>(p.relation)];
    const auto& d = p.diagnostics;
    if (d.failed) ++s.failed;
    if (d.parse_status == ParseStatus::Failed) ++s.parse_failed;
    if (d.parse_status == ParseStatus::Repaired) ++s.repaired;
    if (d.context_used) ++s.context_used;
    s.objects += p.objects.size();
    for (const auto& obj : p.objects) {
      if (obj.path == LinkPath::Unresolved) ++s.unresolved;
    }
    out.push_back(std::move(p));
  }
  s.wall = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  if (summary) *summary = s;
  return out;
}

RunSummary run_batch(const std::filesystem::path& input, const std::filesystem::path& output,
                     const RunConfig& config, PipelineDeps& deps) {
  auto stubs = load_records(input, LoadMode::Stub);
  RunSummary summary;
  auto predictions = run_records(stubs, config, deps, &summary);
  std::string body;
  for (const auto& p : predictions) {
    body += serialize_prediction(p);
    body += '\n';
  }
  write_file_atomic(output, body);
  return summary;
}

}  // namespace lmkb
