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

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmkb/corpus.hpp"
#include "lmkb/dataset.hpp"
#include "lmkb/evaluate.hpp"
#include "lmkb/instructgen.hpp"
#include "lmkb/llmclient.hpp"
#include "lmkb/pipeline.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"
#include "lmkb/upstream.hpp"

namespace lmkb::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPrecedenceNote =
    "Settings resolve as: flag, then environment variable, then --config file, then default.\n"
    "Environment: LMKB_LLM_ENDPOINT, LMKB_EMBED_ENDPOINT, LMKB_CACHE_DIR, LMKB_FIXTURES,\n"
    "LMKB_CONFIG, LMKB_DATA_DIR.";

class UsageError : public Error {
 public:
  using Error::Error;
};

// Raw option values as typed. Resolution against env and config happens in
// Settings so every command sees the same precedence.
struct Flags {
  std::string input, output, val_input, gold, report, contexts, mock_script;
  std::string dialect = "llama";
  std::string llm_endpoint, embed_endpoint, llm_protocol, model;
  std::string cache_dir, fixtures, config, data_dir;
  int method = 1;
  std::uint64_t seed = 0;
  std::size_t holdout = 1000;
  std::size_t top_k = 3;
  std::size_t parallelism = 1;
  bool offline = false;
  bool strict = false;
  bool surface = false;
  bool with_candidates = false;
};

class Settings {
 public:
  Settings(const CLI::App& app, const Flags& flags) : app_(app), flags_(flags) {
    std::string path = flags.config;
    if (!given("--config")) {
      if (const char* env = std::getenv("LMKB_CONFIG"); env && *env) path = env;
    }
    if (!path.empty()) {
      try {
        config_ = nlohmann::json::parse(read_file(path));
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
      }
      if (!config_.is_object()) throw UsageError("config file " + path + " must hold an object");
    }
  }

  bool given(const std::string& flag) const {
    for (const auto* opt : app_.get_options()) {
      if (opt->check_name(flag)) return opt->count() > 0;
    }
    return false;
  }

  std::string text(const std::string& flag, const std::string& value, const char* env,
                   const char* key, std::string fallback = {}) const {
    if (given(flag)) return value;
    if (env) {
      if (const char* v = std::getenv(env); v && *v) return v;
    }
    if (key && config_.contains(key)) return config_.at(key).get<std::string>();
    return fallback;
  }

  template <typename T>
  T number(const std::string& flag, T value, const char* key, T fallback) const {
    if (given(flag)) return value;
    if (key && config_.contains(key)) return config_.at(key).get<T>();
    return fallback;
  }

  template <typename T>
  T config_or(const char* key, T fallback) const {
    return config_.contains(key) ? config_.at(key).get<T>() : fallback;
  }

  bool flag(const std::string& name, bool value, const char* key) const {
    if (given(name)) return value;
    return config_or<bool>(key, false);
  }

  const Flags& raw() const { return flags_; }

 private:
  const CLI::App& app_;
  const Flags& flags_;
  nlohmann::json config_ = nlohmann::json::object();
};

Dialect parse_dialect(const std::string& name) {
  auto d = dialect_from_name(name);
  if (!d) throw UsageError("unknown dialect '" + name + "' (expected llama or beluga)");
  return *d;
}

struct Resources {
  fs::path data_dir;
  PromptLibrary prompts;
  QuestionTable questions;
};

Resources load_resources(const Settings& s) {
  std::string dir = s.text("--data-dir", s.raw().data_dir, "LMKB_DATA_DIR", "data_dir");
  fs::path root = dir.empty() ? default_data_dir() : fs::path(dir);
  return {root, PromptLibrary::load(root / "templates"), QuestionTable::load(root / "relations.tsv")};
}

std::shared_ptr<Upstream> make_upstream(const Settings& s) {
  const bool offline = s.flag("--offline", s.raw().offline, "offline");
  std::string fixtures = s.text("--fixtures", s.raw().fixtures, "LMKB_FIXTURES", "fixtures");
  std::string cache = s.text("--cache-dir", s.raw().cache_dir, "LMKB_CACHE_DIR", "cache_dir");

  UpstreamOptions opts;
  opts.requests_per_second = s.config_or<double>("requests_per_second", 5.0);
  opts.max_attempts = s.config_or<int>("max_attempts", 3);
  std::string store = fixtures.empty() ? cache : fixtures;
  if (offline) {
    if (store.empty()) throw UsageError("--offline needs --fixtures or --cache-dir");
    if (!fs::is_directory(store)) throw UsageError("fixture directory not found: " + store);
    opts.mode = CacheMode::Replay;
  } else {
    opts.mode = store.empty() ? CacheMode::Off : CacheMode::ReadWrite;
  }
  if (!store.empty()) {
    if (!offline) fs::create_directories(store);
    opts.store_dir = store;
  }
  return std::make_shared<Upstream>(opts, make_http_transport());
}

std::unique_ptr<Embedder> make_embedder(const Settings& s, std::shared_ptr<Upstream> upstream) {
  std::string endpoint =
      s.text("--embed-endpoint", s.raw().embed_endpoint, "LMKB_EMBED_ENDPOINT", "embed_endpoint");
  if (endpoint.empty()) {
    log_info("no embedding endpoint configured; using the hashed bag-of-words embedder");
    return std::make_unique<MockEmbedder>(s.config_or<std::size_t>("mock_embedding_dim", 64));
  }
  return std::make_unique<HttpEmbedder>(std::move(upstream), endpoint);
}

std::unique_ptr<LlmClient> make_llm(const Settings& s, std::shared_ptr<Upstream> upstream) {
  std::string script = s.text("--mock-script", s.raw().mock_script, nullptr, "mock_script");
  if (!script.empty()) return MockLlm::from_script(script);
  std::string endpoint =
      s.text("--llm-endpoint", s.raw().llm_endpoint, "LMKB_LLM_ENDPOINT", "llm_endpoint");
  if (endpoint.empty()) throw UsageError("no model configured: pass --llm-endpoint or --mock-script");
  HttpLlm::Options opts;
  opts.endpoint = endpoint;
  std::string proto = s.text("--llm-protocol", s.raw().llm_protocol, nullptr, "llm_protocol", "native");
  auto p = wire_protocol_from_name(proto);
  if (!p) throw UsageError("unknown --llm-protocol '" + proto + "' (expected native or openai)");
  opts.protocol = *p;
  opts.model = s.text("--model", s.raw().model, nullptr, "model");
  opts.context_limit = s.config_or<std::size_t>("context_limit", kDefaultContextLimit);
  opts.max_in_flight = s.config_or<std::size_t>("max_in_flight", 4);
  return std::make_unique<HttpLlm>(std::move(upstream), opts);
}

GenerationParams generation_params(const Settings& s) {
  GenerationParams g;
  g.max_new_tokens = s.config_or<int>("max_new_tokens", g.max_new_tokens);
  g.temperature = s.config_or<double>("temperature", g.temperature);
  g.stop_sequences = s.config_or<std::vector<std::string>>("stop", {});
  g.timeout = std::chrono::milliseconds(s.config_or<long long>("timeout_ms", g.timeout.count()));
  return g;
}

// ---------------------------------------------------------------------------

int cmd_gen_dataset(const Settings& s, std::ostream& out) {
  const Flags& f = s.raw();
  const int method = s.number<int>("--method", f.method, "method", 1);
  if (method != 1 && method != 2) throw UsageError("--method must be 1 or 2");
  const Dialect dialect = parse_dialect(s.text("--dialect", f.dialect, nullptr, "dialect", "llama"));
  SplitSpec spec;
  spec.method = method;
  spec.seed = s.number<std::uint64_t>("--seed", f.seed, "seed", 0);
  spec.holdout_count = s.number<std::size_t>("--holdout", f.holdout, "holdout", 1000);
  if (method == 2 && f.val_input.empty()) throw UsageError("--method 2 needs --val-input");

  auto train = load_records(f.input, LoadMode::Full);
  std::vector<Record> val;
  if (!f.val_input.empty()) val = load_records(f.val_input, LoadMode::Full);

  Resources res = load_resources(s);
  auto upstream = make_upstream(s);
  WikiCorpus corpus(upstream);
  auto embedder = make_embedder(s, upstream);

  std::unique_ptr<ContextProvider> contexts;
  if (!f.contexts.empty()) {
    contexts = std::make_unique<CachedContextProvider>(CachedContextProvider::load(f.contexts));
  } else {
    contexts = std::make_unique<RetrievalContextProvider>(corpus, *embedder);
  }
  CorpusOptionsProvider options(corpus,
                                s.config_or<std::size_t>("candidate_limit", kDefaultCandidateLimit));
  GeneratorDeps deps{res.prompts, res.questions, *contexts, options};
  GeneratedSamples samples = generate(train, val, spec, dialect, deps);

  fs::path dir(f.output);
  fs::create_directories(dir);
  std::size_t n_train = write_samples(samples.train, dir / "train.jsonl");
  std::size_t n_val = write_samples(samples.validation, dir / "validation.jsonl");
  out << "train " << n_train << " validation " << n_val;
  if (samples.skipped_option_samples) out << " skipped " << samples.skipped_option_samples;
  out << "\n";
  return 0;
}

int cmd_run(const Settings& s, std::ostream& out) {
  const Flags& f = s.raw();
  RunConfig cfg;
  cfg.dialect = parse_dialect(s.text("--dialect", f.dialect, nullptr, "dialect", "llama"));
  cfg.top_k = s.number<std::size_t>("--top-k", f.top_k, "top_k", 3);
  cfg.parallelism = s.number<std::size_t>("--parallelism", f.parallelism, "parallelism", 1);
  cfg.offline = s.flag("--offline", f.offline, "offline");
  cfg.chunk_size = s.config_or<std::size_t>("chunk_size", cfg.chunk_size);
  cfg.chunk_overlap = s.config_or<std::size_t>("chunk_overlap", cfg.chunk_overlap);
  cfg.candidate_limit = s.config_or<std::size_t>("candidate_limit", cfg.candidate_limit);
  cfg.abort_threshold = s.config_or<double>("abort_threshold", cfg.abort_threshold);
  cfg.max_repairs = s.config_or<int>("max_repairs", cfg.max_repairs);
  if (s.config_or<bool>("cosine", false)) cfg.similarity = Similarity::Cosine;
  if (auto ms = s.config_or<long long>("record_budget_ms", 0); ms > 0) {
    cfg.record_budget = std::chrono::milliseconds(ms);
  }
  cfg.generation = generation_params(s);
  try {
    cfg.validate();
  } catch (const PreconditionError& e) {
    throw UsageError(e.what());
  }

  Resources res = load_resources(s);
  auto upstream = make_upstream(s);
  WikiCorpus corpus(upstream);
  auto embedder = make_embedder(s, upstream);
  auto llm = make_llm(s, upstream);
  PipelineDeps deps{corpus, *embedder, default_tokenizer(), res.prompts, res.questions, *llm};

  RunSummary sum = run_batch(f.input, f.output, cfg, deps);
  out << "records " << sum.records << " context_used " << sum.context_used << " failed "
      << sum.failed << " parse_failed " << sum.parse_failed << " repaired " << sum.repaired
      << " objects " << sum.objects << " unresolved " << sum.unresolved << "\n";
  for (Relation r : all_relations()) {
    auto n = sum.per_relation[static_cast<std::size_t>(r)];
    if (n) out << "  " << relation_name(r) << " " << n << "\n";
  }
  return 0;
}

int cmd_score(const Settings& s, std::ostream& out) {
  const Flags& f = s.raw();
  ScoreOptions opts;
  opts.strict = s.flag("--strict", f.strict, "strict");
  opts.surface_strings = f.surface;
  ScoreReport report = score_files(f.input, f.gold, opts);
  out << format_report_table(report);
  if (!f.report.empty()) write_file_atomic(f.report, format_report_json(report));
  return 0;
}

int cmd_fetch_cache(const Settings& s, std::ostream& out) {
  const Flags& f = s.raw();
  if (s.flag("--offline", f.offline, "offline")) throw UsageError("fetch-cache cannot run offline");
  std::string cache = s.text("--cache-dir", f.cache_dir, "LMKB_CACHE_DIR", "cache_dir");
  if (cache.empty() && f.fixtures.empty()) throw UsageError("fetch-cache needs --cache-dir");

  auto records = load_records(f.input, LoadMode::Stub);
  auto upstream = make_upstream(s);
  WikiCorpus corpus(upstream);
  std::size_t pages = 0, searches = 0, errors = 0;
  for (const auto& r : records) {
    try {
      if (corpus.fetch_page_text(r.subject_id)) ++pages;
      if (f.with_candidates) {
        for (const auto& label : r.object_labels) {
          corpus.search_wikidata(label, kDefaultCandidateLimit);
          ++searches;
        }
      }
    } catch (const InfrastructureError&) {
      throw;
    } catch (const std::exception& e) {
      ++errors;
      log_warn(r.subject_id + ": " + e.what());
    }
  }
  out << "subjects " << records.size() << " pages " << pages << " searches " << searches
      << " errors " << errors << " network_calls " << upstream->network_calls() << "\n";
  return errors ? 1 : 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::mutex err_mu;
  set_log_sink([&](LogLevel level, std::string_view msg) {
    std::lock_guard lock(err_mu);
    err << (level >= LogLevel::Warn ? "warning: " : "") << msg << '\n';
  });
  struct ResetSink {
    ~ResetSink() { set_log_sink({}); }
  } reset;

  CLI::App app{"Knowledge-base construction with retrieval-augmented language models.", "lmkb"};
  app.footer(kPrecedenceNote);
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "JSON file with default settings");
    cmd->add_option("--data-dir", f.data_dir, "Directory with relations.tsv and templates/");
    cmd->add_option("--cache-dir", f.cache_dir, "On-disk cache of upstream responses");
    cmd->add_option("--fixtures", f.fixtures, "Recorded upstream responses (replaces --cache-dir)");
    cmd->add_flag("--offline", f.offline, "Serve every upstream call from fixtures; misses fail");
  };
  auto add_models = [&](CLI::App* cmd) {
    cmd->add_option("--dialect", f.dialect, "Prompt dialect: llama (llama-chat) or beluga");
    cmd->add_option("--embed-endpoint", f.embed_endpoint, "Embedding service URL");
  };

  auto* gen = app.add_subcommand("gen-dataset", "Generate instruction-tuning samples");
  gen->add_option("--input", f.input, "Training records (JSON lines)")->required()->check(CLI::ExistingFile);
  gen->add_option("--val-input", f.val_input, "Validation records")->check(CLI::ExistingFile);
  gen->add_option("--output", f.output, "Output directory for train.jsonl and validation.jsonl")
      ->required();
  gen->add_option("--method", f.method, "1: pooled shuffle with holdout, 2: official split")
      ->check(CLI::IsMember({1, 2}));
  gen->add_option("--seed", f.seed, "Shuffle seed");
  gen->add_option("--holdout", f.holdout, "Validation samples held out by method 1");
  gen->add_option("--contexts", f.contexts, "Cached contexts (JSON lines) instead of retrieval")
      ->check(CLI::ExistingFile);
  add_models(gen);
  add_common(gen);

  auto* run_cmd = app.add_subcommand("run", "Predict objects for stub records");
  run_cmd->add_option("--input", f.input, "Stub records (JSON lines)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--output", f.output, "Prediction file")->required();
  run_cmd->add_option("--llm-endpoint", f.llm_endpoint, "Completion service URL");
  run_cmd->add_option("--llm-protocol", f.llm_protocol, "Wire protocol")
      ->check(CLI::IsMember({"native", "openai"}));
  run_cmd->add_option("--model", f.model, "Model name sent with openai requests");
  run_cmd->add_option("--mock-script", f.mock_script, "Scripted completions instead of a model")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--top-k", f.top_k, "Context chunks per prompt")->check(CLI::PositiveNumber);
  run_cmd->add_option("--parallelism", f.parallelism, "Records in flight")->check(CLI::PositiveNumber);
  add_models(run_cmd);
  add_common(run_cmd);

  auto* score = app.add_subcommand("score", "Score predictions against gold records");
  score->add_option("--input", f.input, "Prediction file")->required()->check(CLI::ExistingFile);
  score->add_option("--gold", f.gold, "Gold records")->required()->check(CLI::ExistingFile);
  score->add_option("--report", f.report, "Write the report as JSON");
  score->add_flag("--strict", f.strict, "Require all 21 relations");
  score->add_flag("--surface", f.surface, "Compare surface strings instead of ids (debugging)");
  score->add_option("--config", f.config, "JSON file with default settings");

  auto* fetch = app.add_subcommand("fetch-cache", "Prefetch page texts into the cache");
  fetch->add_option("--input", f.input, "Records (JSON lines)")->required()->check(CLI::ExistingFile);
  fetch->add_flag("--with-candidates", f.with_candidates, "Also record Wikidata searches for objects");
  add_common(fetch);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    Settings settings(*cmd, f);
    if (cmd == gen) return cmd_gen_dataset(settings, out);
    if (cmd == run_cmd) return cmd_run(settings, out);
    if (cmd == score) return cmd_score(settings, out);
    return cmd_fetch_cache(settings, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lmkb::cli
