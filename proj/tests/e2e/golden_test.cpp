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

#include <chrono>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "e2e_run.hpp"
#include "lmkb/corpus.hpp"
#include "lmkb/dataset.hpp"
#include "lmkb/evaluate.hpp"
#include "lmkb/pipeline.hpp"
#include "lmkb/upstream.hpp"

namespace lmkb {
namespace {

using testing::e2e_dir;
using testing::run_e2e;
using testing::slurp;
using testing::TempDir;

std::vector<nlohmann::json> lines(const std::string& body) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    out.push_back(nlohmann::json::parse(body.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return out;
}

TEST(EndToEnd, MatchesGoldenAtAnyParallelism) {
  const std::string golden = slurp(e2e_dir() / "golden.jsonl");
  for (std::size_t parallelism : {1u, 4u, 1u}) {
    TempDir dir;
    auto start = std::chrono::steady_clock::now();
    auto r = run_e2e(dir / "pred.jsonl", parallelism);
    auto elapsed = std::chrono::steady_clock::now() - start;
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "pred.jsonl"), golden) << "parallelism " << parallelism;
    EXPECT_LT(elapsed, std::chrono::seconds(10));
    EXPECT_EQ(r.out.rfind("records 10 context_used 9 failed 0 parse_failed 1 repaired 1 ", 0), 0u)
        << r.out;
  }
}

TEST(EndToEnd, GoldenCoversEveryBranch) {
  auto preds = lines(slurp(e2e_dir() / "golden.jsonl"));
  ASSERT_EQ(preds.size(), 10u);

  std::set<std::string> paths;
  std::map<std::string, std::string> path_of;
  for (const auto& p : preds) {
    for (const auto& o : p["diagnostics"]["objects"]) {
      paths.insert(o["path"].get<std::string>());
      path_of[o["surface"].get<std::string>()] = o["path"].get<std::string>();
    }
  }
  EXPECT_EQ(paths, (std::set<std::string>{"exact-option", "llm-choice", "wikipedia-fallback",
                                          "unresolved"}));

  // Shakespeare's spouse: ambiguous title, settled by the option prompt.
  EXPECT_EQ(preds[0]["ObjectEntitiesID"], nlohmann::json({"Q211871"}));
  EXPECT_EQ(path_of["Anne Hathaway"], "llm-choice");
  EXPECT_TRUE(preds[0]["diagnostics"]["context_used"].get<bool>());
  EXPECT_EQ(preds[0]["diagnostics"]["context_chunks"], 3);

  // Berlin has no English page; the German one is used.
  EXPECT_EQ(preds[1]["ObjectEntitiesID"], nlohmann::json({"Q1684"}));
  EXPECT_TRUE(preds[1]["diagnostics"]["context_used"].get<bool>());

  // Missing entity: no context, empty answer.
  EXPECT_FALSE(preds[2]["diagnostics"]["context_used"].get<bool>());
  EXPECT_EQ(preds[2]["ObjectEntitiesID"], nlohmann::json::array());
  EXPECT_EQ(preds[2]["diagnostics"]["parse_status"], "clean");

  EXPECT_EQ(preds[3]["diagnostics"]["parse_status"], "repaired");
  EXPECT_EQ(preds[3]["ObjectEntitiesID"], nlohmann::json({"Q5994", "Q6607"}));

  EXPECT_EQ(preds[4]["diagnostics"]["parse_status"], "failed");
  EXPECT_EQ(preds[4]["ObjectEntitiesID"], nlohmann::json::array());
  EXPECT_FALSE(preds[4]["diagnostics"]["failed"].get<bool>());

  // Model's pick is outside the options; the Wikipedia search resolves it.
  EXPECT_EQ(preds[5]["ObjectEntitiesID"], nlohmann::json({"Q189288"}));
  EXPECT_EQ(path_of["Stratford"], "wikipedia-fallback");
  EXPECT_EQ(preds[6]["ObjectEntitiesID"], nlohmann::json({"Q34266"}));
  EXPECT_EQ(path_of["Tsarist Russia"], "wikipedia-fallback");

  EXPECT_EQ(preds[7]["ObjectEntitiesID"], nlohmann::json({"Q1203"}));
  EXPECT_EQ(preds[7]["ObjectEntities"], nlohmann::json({"John Lennon", "Zzqx Void"}));
  EXPECT_EQ(path_of["Zzqx Void"], "unresolved");

  // Repeats collapse by entity id.
  EXPECT_EQ(preds[8]["ObjectEntitiesID"], nlohmann::json({"Q837", "Q148", "Q917"}));
  EXPECT_EQ(path_of["China"], "llm-choice");

  // Missing opening bracket parses without a repair.
  EXPECT_EQ(preds[9]["ObjectEntitiesID"], nlohmann::json({"Q34433"}));
  EXPECT_EQ(preds[9]["diagnostics"]["parse_status"], "clean");
}

TEST(EndToEnd, ScoresAgainstGold) {
  ScoreReport report = score_files(e2e_dir() / "golden.jsonl", e2e_dir() / "gold.jsonl");
  // Per relation by hand. Spouse: two perfect rows (one empty against
  // empty). River, death place: 1. Instrument: P 1, R 2/3. Profession and
  // basin: 0. Members: P 1, R 1/4. Borders and employer: P 1, R 1/2.
  const double f1 = (1 + 1 + 0.8 + 0 + 1 + 0 + 0.4 + 2.0 / 3 + 2.0 / 3) / 9;
  EXPECT_NEAR(report.average.f1, f1, 1e-12);
}

TEST(EndToEnd, ReplayNeverTouchesTheNetwork) {
  UpstreamOptions opts;
  opts.mode = CacheMode::Replay;
  opts.store_dir = e2e_dir() / "fixtures";
  auto upstream = std::make_shared<Upstream>(opts, std::make_shared<testing::ForbiddenTransport>());
  WikiCorpus corpus(upstream);
  MockEmbedder embedder(64);
  auto prompts = PromptLibrary::load_default();
  auto questions = QuestionTable::load_default();
  auto llm = MockLlm::from_script(e2e_dir() / "mock_script.json");
  PipelineDeps deps{corpus, embedder, default_tokenizer(), prompts, questions, *llm};
  RunConfig cfg;
  cfg.offline = true;
  cfg.parallelism = 3;
  auto stubs = load_records(e2e_dir() / "stubs.jsonl", LoadMode::Stub);
  auto preds = run_records(stubs, cfg, deps);
  EXPECT_EQ(upstream->network_calls(), 0u);

  std::string body;
  for (const auto& p : preds) body += serialize_prediction(p) + "\n";
  EXPECT_EQ(body, slurp(e2e_dir() / "golden.jsonl"));
}

TEST(EndToEnd, UnrecordedDialectIsAReplayMiss) {
  TempDir dir;
  auto r = run_e2e(dir / "pred.jsonl", 1, "beluga");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("record 1 (Q692, PersonHasSpouse)"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "pred.jsonl"));
}

}  // namespace
}  // namespace lmkb
