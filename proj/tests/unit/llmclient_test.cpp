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

#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "lmkb/llmclient.hpp"
#include "lmkb/upstream.hpp"
#include "test_support.hpp"

namespace lmkb {
namespace {

RenderedPrompt prompt(std::string text, PromptKind kind = PromptKind::ContextQa) {
  return {std::move(text), Dialect::LlamaChat, kind, Phase::Inference};
}

TEST(GenerationParams, Validation) {
  GenerationParams p;
  EXPECT_NO_THROW(p.validate());
  p.max_new_tokens = 0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p.max_new_tokens = 5;
  p.temperature = -0.1;
  EXPECT_THROW(p.validate(), PreconditionError);
  p.temperature = std::nan("");
  EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(MockLlm, ScriptAndFallback) {
  MockLlm llm;
  llm.add("hello there", " [\"x\"]");
  GenerationParams p;
  EXPECT_EQ(llm.complete(prompt("hello there"), p).text, " [\"x\"]");
  try {
    llm.complete(prompt("unknown", PromptKind::OptionSelect), p);
    FAIL();
  } catch (const ReplayMissError& e) {
    EXPECT_EQ(e.key(), stable_hash("unknown"));
    EXPECT_NE(std::string(e.what()).find("option-select"), std::string::npos);
  }
  llm.set_fallback("[]");
  EXPECT_EQ(llm.complete(prompt("unknown"), p).text, "[]");
  EXPECT_EQ(llm.calls(), 3u);
}

TEST(MockLlm, FromScriptFile) {
  testing::TempDir dir;
  write_file_atomic(dir / "s.json",
                    R"([{"prompt_hash": ")" + stable_hash("p") + R"(", "completion": "[]", "note": "n"}])");
  auto llm = MockLlm::from_script(dir / "s.json");
  EXPECT_EQ(llm->complete(prompt("p"), {}).text, "[]");
  write_file_atomic(dir / "bad.json", R"({"prompt_hash": "x"})");
  EXPECT_THROW(MockLlm::from_script(dir / "bad.json"), Error);
  write_file_atomic(dir / "bad2.json", R"([{"prompt_hash": "x"}])");
  EXPECT_THROW(MockLlm::from_script(dir / "bad2.json"), Error);
}

TEST(LlmClient, StopSequencesAreCut) {
  testing::FunctionLlm llm([](const RenderedPrompt&) { return R"( ["a"] </s> more)"; });
  GenerationParams p;
  p.stop_sequences = {"</s>", "more"};
  EXPECT_EQ(llm.complete(prompt("q"), p).text, R"( ["a"] )");
}

TEST(LlmClient, ContextWindowIsEnforced) {
  testing::FunctionLlm llm([](const RenderedPrompt&) { return "ok"; }, 10);
  GenerationParams p;
  p.max_new_tokens = 4;
  EXPECT_EQ(llm.complete(prompt("one two three four five six"), p).text, "ok");
  EXPECT_THROW(llm.complete(prompt("one two three four five six seven"), p), ContextLengthError);
  EXPECT_EQ(llm.prompts().size(), 1u);
}

TEST(CountTokens, AdditiveOverWhitespaceJoin) {
  const char* parts[] = {"", "a", "a b", " lead", "trail ", "x\ty\nz"};
  for (const char* a : parts) {
    for (const char* b : parts) {
      std::string joined = std::string(a) + " " + b;
      EXPECT_EQ(count_tokens(joined), count_tokens(a) + count_tokens(b));
    }
  }
}

class FakeLlmServer {
 public:
  FakeLlmServer() {
    server.Post("/native", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      res.set_content(R"({"text": " [\"Oslo\"]", "finish_reason": "length"})", "application/json");
    });
    server.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      res.set_content(R"({"choices": [{"text": " []", "finish_reason": "stop"}]})",
                      "application/json");
    });
    server.Post("/toolong", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("prompt exceeds context window", "text/plain");
    });
    server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>", "text/html");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeLlmServer() {
    server.stop();
    thread.join();
  }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port) + path;
  }
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::string last_body;
};

std::shared_ptr<Upstream> live_upstream() {
  UpstreamOptions o;
  o.requests_per_second = 0;
  o.max_attempts = 1;
  return std::make_shared<Upstream>(o, make_http_transport());
}

TEST(HttpLlm, NativeWireFormat) {
  FakeLlmServer srv;
  HttpLlm llm(live_upstream(), {srv.url("/native"), WireProtocol::Native, "ignored"});
  GenerationParams p;
  p.max_new_tokens = 32;
  p.stop_sequences = {"</s>"};
  auto c = llm.complete(prompt("Q?"), p);
  EXPECT_EQ(c.text, R"( ["Oslo"])");
  EXPECT_EQ(c.finish_reason, FinishReason::Length);
  auto body = nlohmann::json::parse(srv.last_body);
  EXPECT_EQ(body, (nlohmann::json{
                      {"prompt", "Q?"}, {"max_tokens", 32}, {"temperature", 0.0}, {"stop", {"</s>"}}}));
}

TEST(HttpLlm, OpenAiWireFormat) {
  FakeLlmServer srv;
  HttpLlm llm(live_upstream(),
              {srv.url("/v1/completions"), WireProtocol::OpenAiCompletions, "llama-2-13b-chat"});
  auto c = llm.complete(prompt("Q?"), {});
  EXPECT_EQ(c.text, " []");
  EXPECT_EQ(c.finish_reason, FinishReason::Stop);
  auto body = nlohmann::json::parse(srv.last_body);
  EXPECT_EQ(body.at("model"), "llama-2-13b-chat");
  EXPECT_EQ(body.at("stop"), nlohmann::json::array());
}

TEST(HttpLlm, ErrorMapping) {
  FakeLlmServer srv;
  HttpLlm too_long(live_upstream(), {srv.url("/toolong")});
  EXPECT_THROW(too_long.complete(prompt("Q?"), {}), ContextLengthError);
  HttpLlm garbage(live_upstream(), {srv.url("/garbage")});
  EXPECT_THROW(garbage.complete(prompt("Q?"), {}), LlmError);
  HttpLlm missing(live_upstream(), {srv.url("/nope")});
  try {
    missing.complete(prompt("Q?"), {});
    FAIL();
  } catch (const ContextLengthError&) {
    FAIL() << "404 is not a context error";
  } catch (const LlmError&) {
  }
}

TEST(HttpLlm, ReplayMissPropagatesAsInfrastructure) {
  testing::TempDir dir;
  UpstreamOptions o;
  o.mode = CacheMode::Replay;
  o.store_dir = dir.path();
  HttpLlm llm(std::make_shared<Upstream>(o, nullptr), {"http://llm.test/"});
  EXPECT_THROW(llm.complete(prompt("Q?"), {}), ReplayMissError);
}

// Counts concurrent sends.
class SlowTransport final : public HttpTransport {
 public:
  std::atomic<int> active{0}, peak{0};
  HttpResponse send(const HttpRequest&) override {
    int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --active;
    return {200, R"({"text": "[]"})", std::nullopt};
  }
};

TEST(HttpLlm, CapsInFlightRequests) {
  auto t = std::make_shared<SlowTransport>();
  UpstreamOptions o;
  o.requests_per_second = 0;
  HttpLlm::Options opts;
  opts.endpoint = "http://llm.test/";
  opts.max_in_flight = 2;
  HttpLlm llm(std::make_shared<Upstream>(o, t), opts);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { llm.complete(prompt("q" + std::to_string(i)), {}); });
  }
  for (auto& th : threads) th.join();
  EXPECT_LE(t->peak.load(), 2);
  EXPECT_GE(t->peak.load(), 1);
}

TEST(WireProtocol, Names) {
  EXPECT_EQ(wire_protocol_from_name("native"), WireProtocol::Native);
  EXPECT_EQ(wire_protocol_from_name("openai"), WireProtocol::OpenAiCompletions);
  EXPECT_FALSE(wire_protocol_from_name("grpc").has_value());
}

}  // namespace
}  // namespace lmkb
