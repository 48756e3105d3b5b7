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

#include <gtest/gtest.h>

#include "lmkb/answerparse.hpp"
#include "parser_cases.hpp"
#include "test_support.hpp"

namespace lmkb {
namespace {

using Items = std::vector<std::string>;
using testing::kWrongFormats;
using testing::random_item;

TEST(ParseListLiteral, AcceptedForms) {
  EXPECT_EQ(parse_list_literal(R"(Answer: ["Nepal", "China"])"), (Items{"Nepal", "China"}));
  EXPECT_EQ(parse_list_literal(R"(['Nepal', "China",])"), (Items{"Nepal", "China"}));
  EXPECT_EQ(parse_list_literal("Answer: []"), Items{});
  EXPECT_EQ(parse_list_literal("  answer:[ ]  "), Items{});
  EXPECT_EQ(parse_list_literal(R"(Sure! The answer is ["Oslo"]. Hope this helps.)"),
            Items{"Oslo"});
  EXPECT_EQ(parse_list_literal(R"(["it\'s", 'a \"b\"', "é\n"])"),
            (Items{"it's", "a \"b\"", "\xc3\xa9\n"}));
  EXPECT_EQ(parse_list_literal(R"(["😀"])"), Items{"\xf0\x9f\x98\x80"});
}

TEST(ParseListLiteral, MissingOpeningBracket) {
  EXPECT_EQ(parse_list_literal(R"(Answer: "University of Oxford"])"),
            Items{"University of Oxford"});
  EXPECT_EQ(parse_list_literal(R"("People's Republic of China", "Laos"])"),
            (Items{"People's Republic of China", "Laos"}));
}

TEST(ParseListLiteral, Rejections) {
  const char* bad[] = {
      "I don't know.",
      "",
      R"(["unterminated)",
      R"(["a" "b"])",
      R"(["a", b])",
      R"(["a", ["b"]])",
      R"(["a", "b")",
      R"(["\u12"])",
  };
  for (const char* s : bad) EXPECT_THROW(parse_list_literal(s), ParseError) << s;
}

TEST(ParseListLiteral, ErrorCarriesOffset) {
  try {
    parse_list_literal(R"(['book's and page's'])");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 7u);
  }
}

TEST(ParseListLiteral, RepairPromptExamplesAreUnparseable) {
  for (const char* s : kWrongFormats) EXPECT_THROW(parse_list_literal(s), ParseError) << s;
}

TEST(ParseListLiteral, RoundTripProperty) {
  std::mt19937_64 rng(20240511);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    Items items;
    for (int n = count(rng); n > 0; --n) items.push_back(random_item(rng));
    std::string literal = serialize_answer_list(items);
    ASSERT_EQ(parse_list_literal(literal), items) << literal;
    ASSERT_EQ(parse_list_literal("Answer: " + literal), items) << literal;
  }
}

TEST(NormalizeSurface, Rules) {
  EXPECT_EQ(normalize_surface("  'Anne   Hathaway' "), "Anne Hathaway");
  EXPECT_EQ(normalize_surface("\"'x'\""), "x");
  EXPECT_EQ(normalize_surface("São\tPaulo"), "São Paulo");
  EXPECT_EQ(normalize_surface("iPhone"), "iPhone");
  EXPECT_EQ(normalize_surface("   "), "");
  EXPECT_EQ(normalize_surface("Grand'Anse"), "Grand'Anse");
}

TEST(CleanItems, DropsEmptiesAndDuplicates) {
  EXPECT_EQ(clean_items({" Nepal", "Nepal ", "", "  ", "China", "nepal"}),
            (Items{"Nepal", "China", "nepal"}));
}

TEST(CleanItems, Idempotent) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    Items items = {random_item(rng), random_item(rng), random_item(rng)};
    auto once = clean_items(items);
    EXPECT_EQ(clean_items(once), once);
  }
}

class Repair : public ::testing::Test {
 protected:
  PromptLibrary prompts = PromptLibrary::load_default();
  MockLlm llm;
};

TEST_F(Repair, CleanAnswerMakesNoCall) {
  auto r = parse_with_repair(R"(Answer: ["A", "A", " B"])", llm, prompts);
  EXPECT_EQ(r.status, ParseStatus::Clean);
  EXPECT_EQ(r.items, (Items{"A", "B"}));
  EXPECT_EQ(r.repair_attempts, 0);
  EXPECT_EQ(llm.calls(), 0u);
}

TEST_F(Repair, ExamplesAreRepairedByScriptedModel) {
  const Items expected[] = {
      {"People's Republic of China", "Laos", "Thailand", "India", "Bangladesh"},
      {"Artibonite", "Nord-Est Department", "South Department", "West Department",
       "Centre Department", "Grand'Anse Department", "North Department"},
      {"book's and page's"},
  };
  for (Dialect d : {Dialect::LlamaChat, Dialect::Beluga}) {
    MockLlm model;
    for (std::size_t i = 0; i < 3; ++i) {
      model.add(prompts.render_repair(d, kWrongFormats[i]).text,
                " " + serialize_answer_list(expected[i]));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      RepairSettings settings;
      settings.dialect = d;
      auto r = parse_with_repair(kWrongFormats[i], model, prompts, settings);
      EXPECT_EQ(r.status, ParseStatus::Repaired);
      EXPECT_EQ(r.items, expected[i]);
      EXPECT_EQ(r.repair_attempts, 1);
      EXPECT_EQ(r.raw, kWrongFormats[i]);
    }
  }
}

TEST_F(Repair, RepairCompletionWithoutOpeningBracket) {
  // The repair prompt demonstrates outputs that lack '['.
  llm.set_fallback(R"( "Artibonite", "Grand'Anse Department"])");
  auto r = parse_with_repair("['Artibonite', 'Grand'Anse Department']", llm, prompts);
  EXPECT_EQ(r.status, ParseStatus::Repaired);
  EXPECT_EQ(r.items, (Items{"Artibonite", "Grand'Anse Department"}));
}

TEST_F(Repair, FailedRepairYieldsEmptyFailed) {
  testing::LogCapture logs;
  llm.set_fallback("I am not sure what you mean.");
  auto r = parse_with_repair("They are Nepal and China.", llm, prompts);
  EXPECT_EQ(r.status, ParseStatus::Failed);
  EXPECT_TRUE(r.items.empty());
  EXPECT_EQ(r.repair_attempts, 1);
  EXPECT_EQ(llm.calls(), 1u);
  EXPECT_NE(r.failure.find("repair output unparseable"), std::string::npos);
  EXPECT_TRUE(logs.contains("unparseable answer"));
}

TEST_F(Repair, MaxRepairsBoundsCalls) {
  llm.set_fallback("still prose");
  RepairSettings settings;
  settings.max_repairs = 3;
  auto r = parse_with_repair("prose", llm, prompts, settings);
  EXPECT_EQ(r.repair_attempts, 3);
  EXPECT_EQ(llm.calls(), 3u);
  settings.max_repairs = 0;
  MockLlm other;
  r = parse_with_repair("prose", other, prompts, settings);
  EXPECT_EQ(r.status, ParseStatus::Failed);
  EXPECT_EQ(other.calls(), 0u);
}

TEST_F(Repair, EmptyRawSkipsRepair) {
  auto r = parse_with_repair("   ", llm, prompts);
  EXPECT_EQ(r.status, ParseStatus::Failed);
  EXPECT_EQ(llm.calls(), 0u);
}

TEST_F(Repair, ModelErrorIsRecordedNotThrown) {
  testing::FunctionLlm failing([](const RenderedPrompt&) -> std::string {
    throw LlmError("backend exploded");
  });
  auto r = parse_with_repair("prose", failing, prompts);
  EXPECT_EQ(r.status, ParseStatus::Failed);
  EXPECT_NE(r.failure.find("backend exploded"), std::string::npos);
}

TEST_F(Repair, ReplayMissPropagates) {
  EXPECT_THROW(parse_with_repair("prose", llm, prompts), InfrastructureError);
}

}  // namespace
}  // namespace lmkb
