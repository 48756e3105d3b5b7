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

// Acceptance report: one PASS/FAIL line per criterion; exits 1 when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "e2e_run.hpp"
#include "golden_templates.hpp"
#include "lmkb/answerparse.hpp"
#include "lmkb/corpus.hpp"
#include "lmkb/evaluate.hpp"
#include "lmkb/instructgen.hpp"
#include "lmkb/pipeline.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"
#include "lmkb/upstream.hpp"
#include "parser_cases.hpp"
#include "published_tables.hpp"
#include "score_fixture.hpp"
#include "test_support.hpp"

namespace lmkb {
namespace {

using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kTightAverageTol = 1e-4;  // first table, printed to four places
constexpr double kRoundedAverageTol = 5e-4;
constexpr double kExactTol = 1e-12;
constexpr auto kChunkerBudget = std::chrono::seconds(1);
constexpr auto kTopKBudget = std::chrono::seconds(5);
constexpr auto kEndToEndBudget = std::chrono::seconds(10);
constexpr int kTopKInstances = 200;
constexpr int kChunkerInstances = 400;
constexpr int kParserTrials = 1000;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

// ---------------------------------------------------------------------------

void table_arithmetic(Outcome& o) {
  struct Case {
    const testing::PublishedTable* table;
    double tol;
  };
  const char* sep = "";
  for (const Case& c : {Case{&testing::kLlamaTrainVal, kTightAverageTol},
                        Case{&testing::kLlamaTrainOnly, kRoundedAverageTol},
                        Case{&testing::kBelugaTrainVal, kRoundedAverageTol}}) {
    RelationScores scores;
    for (const auto& row : c.table->rows) {
      scores[row.relation] = {row.precision, row.recall, row.f1, 1};
    }
    double f1 = overall(scores, /*strict=*/true).f1;
    o.require(std::abs(f1 - c.table->average_f1) <= c.tol, c.table->name);
    o.detail << sep << c.table->name << ": " << std::fixed << std::setprecision(6) << f1
             << " vs " << std::setprecision(4) << c.table->average_f1;
    sep = "; ";
  }
}

class FixedContexts final : public ContextProvider {
 public:
  std::string context_for(const Record& r, std::string_view) override {
    return "About " + r.subject_label + ".";
  }
};

class EchoOptions final : public OptionsProvider {
 public:
  std::optional<std::vector<CandidateEntity>> candidates_for(std::string_view label) override {
    return std::vector<CandidateEntity>{{"Q1", std::string(label), ""}};
  }
};

std::size_t expected_samples(std::span<const Record> records) {
  std::size_t n = 0;
  for (const auto& r : records) n += 2 + r.object_ids.size();
  return n;
}

void sample_counts(Outcome& o) {
  auto prompts = PromptLibrary::load_default();
  auto questions = QuestionTable::load_default();
  FixedContexts contexts;
  EchoOptions options;
  GeneratorDeps deps{prompts, questions, contexts, options};

  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> n_objects(0, 6);
  auto make = [&](std::size_t count, std::size_t base) {
    std::vector<Record> out;
    for (std::size_t i = 0; i < count; ++i) {
      Record r{"Q" + std::to_string(base + i), "Subject " + std::to_string(base + i),
               all_relations()[i % kRelationCount], {}, {}};
      for (int j = n_objects(rng); j > 0; --j) {
        r.object_ids.push_back("Q" + std::to_string(900000 + 10 * (base + i) + j));
        r.object_labels.push_back("Object " + std::to_string(base + i) + "." + std::to_string(j));
      }
      out.push_back(std::move(r));
    }
    return out;
  };

  int fixtures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto train = make(5 + trial * 3, 1);
    auto val = make(2 + trial, 10000);
    const std::size_t total = expected_samples(train) + expected_samples(val);

    for (Dialect d : {Dialect::LlamaChat, Dialect::Beluga}) {
      SplitSpec m1{1, static_cast<std::uint64_t>(trial), static_cast<std::size_t>(trial * 2)};
      auto g1 = generate(train, val, m1, d, deps);
      o.require(g1.train.size() + g1.validation.size() == total, "method 1 total");
      o.require(g1.validation.size() == m1.holdout_count, "method 1 holdout size");

      SplitSpec m2{2, 0, 0};
      auto g2 = generate(train, val, m2, d, deps);
      o.require(g2.train.size() == expected_samples(train), "method 2 train count");
      o.require(g2.validation.size() == expected_samples(val), "method 2 validation count");
      ++fixtures;
    }
  }
  o.detail << fixtures << " fixtures, identity holds for both methods; ";

  const char* official = std::getenv("LMKB_OFFICIAL_DATA");
  if (!official || !*official) {
    o.detail << "official files absent, full-data counts not checked";
    return;
  }
  std::filesystem::path dir(official);
  auto train = load_records(dir / "train.jsonl", LoadMode::Full);
  auto val = load_records(dir / "val.jsonl", LoadMode::Full);
  auto g1 = generate(train, val, SplitSpec{1, 0, 1000}, Dialect::LlamaChat, deps);
  auto g2 = generate(train, val, SplitSpec{2, 0, 0}, Dialect::LlamaChat, deps);
  o.require(g1.train.size() == 14310 && g1.validation.size() == 1000, "official method 1 counts");
  o.require(g2.train.size() == 7666 && g2.validation.size() == 7644, "official method 2 counts");
  o.detail << "official: " << g1.train.size() << "/" << g1.validation.size() << ", "
           << g2.train.size() << "/" << g2.validation.size();
}

// Tokens separated by assorted whitespace so byte spans are irregular.
std::string synthetic_document(std::size_t n, std::mt19937_64& rng) {
  static const char* seps[] = {" ", "  ", "\n", "\t", " \n "};
  std::uniform_int_distribution<int> sep(0, 4);
  std::string text = n ? "\n" : "";
  for (std::size_t i = 0; i < n; ++i) {
    text += "w" + std::to_string(i);
    text += seps[sep(rng)];
  }
  return text;
}

void chunker(Outcome& o) {
  constexpr std::size_t kSize = 300, kStride = 250;
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<std::size_t> length(0, 5000);
  std::vector<std::size_t> lengths = {0, 1, 249, 250, 299, 300, 301, 549, 550, 551, 800, 5000};
  while (lengths.size() < static_cast<std::size_t>(kChunkerInstances)) lengths.push_back(length(rng));

  std::vector<std::string> docs;
  for (std::size_t n : lengths) docs.push_back(synthetic_document(n, rng));

  const Tokenizer& tok = default_tokenizer();
  auto start = Clock::now();
  std::vector<std::vector<Chunk>> all;
  for (const auto& d : docs) all.push_back(chunk_tokens(d, tok));
  auto elapsed = Clock::now() - start;

  for (std::size_t t = 0; t < lengths.size(); ++t) {
    const std::size_t n = lengths[t];
    const auto& chunks = all[t];
    const auto spans = tok.tokenize(docs[t]);
    const std::string tag = "n=" + std::to_string(n);
    o.require(spans.size() == n, tag + " token count");

    const std::size_t count = n == 0 ? 0 : n <= kSize ? 1 : 1 + (n - kSize + kStride - 1) / kStride;
    o.require(chunks.size() == count, tag + " chunk count");
    if (chunks.size() != count) continue;

    std::size_t covered = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      o.require(c.token_start == i * kStride, tag + " start");
      o.require(c.token_end - c.token_start <= kSize, tag + " length");
      o.require(c.token_end <= n, tag + " end");
      const auto b = spans[c.token_start].begin, e = spans[c.token_end - 1].end;
      o.require(c.text == docs[t].substr(b, e - b), tag + " text");
      // Stitching the windows back together must reproduce the stream.
      o.require(c.token_start <= covered, tag + " gap");
      covered = std::max(covered, c.token_end);
    }
    o.require(covered == n, tag + " reconstruction");

    if (n > 0) {
      const auto& last = chunks.back();
      const std::size_t len = last.token_end - last.token_start;
      const std::size_t expect_len = n <= kSize ? n : n - kStride * (count - 1);
      o.require(len == expect_len, tag + " final length");
      // New tokens contributed by the final window: (n - 300) mod 250,
      // or a full stride when that is zero.
      if (n > kSize) {
        const std::size_t fresh = last.token_end - chunks[chunks.size() - 2].token_end;
        const std::size_t r = (n - kSize) % kStride;
        o.require(fresh == (r ? r : kStride), tag + " final fresh tokens");
      }
    }
  }
  o.require(elapsed < kChunkerBudget, "runtime");
  o.detail << lengths.size() << " documents, " << std::fixed << std::setprecision(3)
           << seconds(elapsed) << " s";
}

void retrieval(Outcome& o) {
  std::mt19937_64 rng(9001);
  std::uniform_int_distribution<std::size_t> size(1, 1000), dim(1, 64);
  // Half-integer components make dot products exact in float, and collide
  // often enough to exercise the tie rule.
  std::uniform_int_distribution<int> component(-3, 3);
  Clock::duration elapsed{};
  std::size_t ties = 0;
  for (int t = 0; t < kTopKInstances; ++t) {
    const std::size_t n = size(rng), d = dim(rng);
    std::uniform_int_distribution<std::size_t> kdist(1, n + 3);
    const std::size_t k = kdist(rng);
    std::vector<Chunk> chunks(n);
    std::vector<EmbeddingVector> vecs(n);
    for (std::size_t i = 0; i < n; ++i) {
      chunks[i].index = i;
      chunks[i].text = std::to_string(i);
      for (std::size_t j = 0; j < d; ++j) vecs[i].values.push_back(component(rng) * 0.5f);
    }
    EmbeddingVector q{{}, EmbeddingRole::Query};
    for (std::size_t j = 0; j < d; ++j) q.values.push_back(component(rng) * 0.5f);

    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] = std::inner_product(q.values.begin(), q.values.end(), vecs[i].values.begin(), 0.0);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    order.resize(std::min(k, n));
    for (std::size_t i = 1; i < order.size(); ++i) ties += score[order[i]] == score[order[i - 1]];

    auto start = Clock::now();
    auto index = VectorIndex::build(std::move(chunks), std::move(vecs));
    auto got = index.top_k(q, k);
    elapsed += Clock::now() - start;

    bool same = got.size() == order.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].chunk.index == order[i] && got[i].score == score[order[i]];
    }
    o.require(same, "instance " + std::to_string(t));
  }
  o.require(elapsed < kTopKBudget, "runtime");
  o.detail << kTopKInstances << " instances, " << ties << " tied neighbours, " << std::fixed
           << std::setprecision(3) << seconds(elapsed) << " s";
}

void parser(Outcome& o) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> count(0, 8);
  for (int t = 0; t < kParserTrials; ++t) {
    std::vector<std::string> items;
    for (int n = count(rng); n > 0; --n) items.push_back(testing::random_item(rng));
    std::string literal = serialize_answer_list(items);
    bool ok = false;
    try {
      ok = parse_list_literal(literal) == items && parse_list_literal("Answer: " + literal) == items;
    } catch (const ParseError&) {
    }
    o.require(ok, "round trip " + literal);
  }

  const std::vector<std::vector<std::string>> repaired = {
      {"People's Republic of China", "Laos", "Thailand", "India", "Bangladesh"},
      {"Artibonite", "Nord-Est Department", "South Department", "West Department",
       "Centre Department", "Grand'Anse Department", "North Department"},
      {"book's and page's"},
  };
  auto prompts = PromptLibrary::load_default();
  int fixed = 0;
  for (Dialect d : {Dialect::LlamaChat, Dialect::Beluga}) {
    MockLlm model;
    for (std::size_t i = 0; i < 3; ++i) {
      model.add(prompts.render_repair(d, testing::kWrongFormats[i]).text,
                " Answer: " + serialize_answer_list(repaired[i]));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      bool rejected = false;
      try {
        parse_list_literal(testing::kWrongFormats[i]);
      } catch (const ParseError&) {
        rejected = true;
      }
      o.require(rejected, "wrong-format example rejected");
      RepairSettings s;
      s.dialect = d;
      auto r = parse_with_repair(testing::kWrongFormats[i], model, prompts, s);
      bool ok = r.status == ParseStatus::Repaired && r.items == repaired[i];
      o.require(ok, "wrong-format example repaired");
      fixed += ok;
    }
  }
  o.require(parse_list_literal("[]").empty(), "[] parses");
  o.require(parse_list_literal(R"(Answer: "University of Oxford"])") ==
                std::vector<std::string>{"University of Oxford"},
            "missing opening bracket parses");
  o.detail << kParserTrials << " round trips, " << fixed << "/6 repairs";
}

void templates(Outcome& o) {
  auto lib = PromptLibrary::load_default();
  int matched = 0;
  for (Dialect d : {Dialect::LlamaChat, Dialect::Beluga}) {
    for (PromptKind k : {PromptKind::ContextQa, PromptKind::NoContextQa, PromptKind::OptionSelect,
                         PromptKind::FormatRepair}) {
      std::string key = std::string(dialect_name(d)) + "/" + std::string(prompt_kind_name(k));
      bool ok = lib.get(d, k).body == testing::golden_bodies().at(key);
      o.require(ok, key + " body");
      matched += ok;
    }
  }
  PromptSlots slots;
  slots.context = "c";
  slots.question = "q?";
  slots.options = "[\"a\"]";
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (PromptKind k : {PromptKind::ContextQa, PromptKind::NoContextQa, PromptKind::OptionSelect}) {
    o.require(ends_with(lib.render_inference(k, Dialect::LlamaChat, slots).text, "[/INST]"),
              "llama suffix");
    o.require(ends_with(lib.render_inference(k, Dialect::Beluga, slots).text,
                        "### Assistant\nAnswer:"),
              "beluga suffix");
  }
  o.detail << matched << "/8 golden bodies, inference suffixes checked";
}

void end_to_end(Outcome& o) {
  const auto golden_path = testing::e2e_dir() / "golden.jsonl";
  const std::string golden = testing::slurp(golden_path);
  testing::TempDir dir;

  auto start = Clock::now();
  auto a = testing::run_e2e(dir / "a.jsonl", 1);
  auto b = testing::run_e2e(dir / "b.jsonl", 4);
  auto elapsed = Clock::now() - start;
  set_log_sink([](LogLevel, std::string_view) {});  // the CLI resets it on exit
  o.require(a.code == 0 && b.code == 0, "cli exit status: " + a.err + b.err);
  if (a.code != 0 || b.code != 0) return;
  const std::string out_a = testing::slurp(dir / "a.jsonl");
  o.require(out_a == golden, "rerun matches golden");
  o.require(testing::slurp(dir / "b.jsonl") == golden, "parallel rerun matches golden");

  std::size_t rows = 0;
  std::set<bool> context_branches;
  std::set<std::string> paths;
  std::istringstream in(out_a);
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::json::parse(line);
    ++rows;
    context_branches.insert(j["diagnostics"]["context_used"].get<bool>());
    for (const auto& obj : j["diagnostics"]["objects"]) paths.insert(obj["path"].get<std::string>());
  }
  o.require(rows == 10, "10 records");
  o.require(context_branches.size() == 2, "context and no-context branches");
  o.require(paths == std::set<std::string>{"exact-option", "llm-choice", "wikipedia-fallback",
                                           "unresolved"},
            "all linking paths");

  // Same run through the library with a transport that throws on use.
  UpstreamOptions opts;
  opts.mode = CacheMode::Replay;
  opts.store_dir = testing::e2e_dir() / "fixtures";
  auto upstream = std::make_shared<Upstream>(opts, std::make_shared<testing::ForbiddenTransport>());
  WikiCorpus corpus(upstream);
  MockEmbedder embedder(64);
  auto prompts = PromptLibrary::load_default();
  auto questions = QuestionTable::load_default();
  auto llm = MockLlm::from_script(testing::e2e_dir() / "mock_script.json");
  PipelineDeps deps{corpus, embedder, default_tokenizer(), prompts, questions, *llm};
  RunConfig cfg;
  cfg.offline = true;
  auto stubs = load_records(testing::e2e_dir() / "stubs.jsonl", LoadMode::Stub);
  std::string body;
  for (const auto& p : run_records(stubs, cfg, deps)) body += serialize_prediction(p) + "\n";
  o.require(body == golden, "library run matches golden");
  o.require(upstream->network_calls() == 0, "zero network calls");

  o.require(elapsed < kEndToEndBudget, "runtime");
  o.detail << rows << " records, paths " << paths.size() << "/4, network calls "
           << upstream->network_calls() << ", " << std::fixed << std::setprecision(3)
           << seconds(elapsed) << " s for two runs";
}

void scoring(Outcome& o) {
  auto near = [](const RowScore& s, double p, double r, double f) {
    return std::abs(s.precision - p) <= kExactTol && std::abs(s.recall - r) <= kExactTol &&
           std::abs(s.f1 - f) <= kExactTol;
  };
  o.require(near(score_row({}, {}), 1, 1, 1), "empty/empty");
  o.require(near(score_row({}, {"Q1"}), 0, 0, 0), "empty prediction");
  o.require(near(score_row({"Q1"}, {}), 0, 1, 0), "empty gold");

  testing::SixRows f;
  auto report = score_rows(f.pred, f.gold);
  const auto& spouse = report.per_relation.at(Relation::PersonHasSpouse);
  const auto& band = report.per_relation.at(Relation::BandHasMember);
  o.require(near({spouse.precision, spouse.recall, spouse.f1}, 1.0 / 3, 2.0 / 3, 1.0 / 3),
            "spouse relation");
  o.require(near({band.precision, band.recall, band.f1}, 5.0 / 6, 3.0 / 4, 31.0 / 45),
            "band relation");
  o.require(near(report.average, 7.0 / 12, 17.0 / 24, 23.0 / 45), "average");
  o.detail << std::fixed << std::setprecision(4) << "average P " << report.average.precision
           << " R " << report.average.recall << " F1 " << report.average.f1;
}

}  // namespace
}  // namespace lmkb

int main() {
  using Check = std::function<void(lmkb::Outcome&)>;
  const std::pair<const char*, Check> criteria[] = {
      {"table-arithmetic", lmkb::table_arithmetic},
      {"sample-count-identity", lmkb::sample_counts},
      {"chunker-conformance", lmkb::chunker},
      {"retrieval-exactness", lmkb::retrieval},
      {"parser-suite", lmkb::parser},
      {"template-fidelity", lmkb::templates},
      {"hermetic-end-to-end", lmkb::end_to_end},
      {"scoring-conventions", lmkb::scoring},
  };
  lmkb::set_log_sink([](lmkb::LogLevel, std::string_view) {});
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    lmkb::Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail.str() << "\n";
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed\n" : "all criteria passed\n");
  return failed ? 1 : 0;
}
