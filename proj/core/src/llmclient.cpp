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

#include "lmkb/llmclient.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "lmkb/upstream.hpp"

namespace lmkb {

namespace {

// Cuts `text` at the earliest stop sequence. Returns true when one was found.
bool apply_stops(std::string& text, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  text.erase(cut);
  return true;
}

FinishReason parse_finish_reason(const nlohmann::json& v) {
  if (v.is_string() && v.get<std::string>() == "length") return FinishReason::Length;
  return FinishReason::Stop;
}

}  // namespace

void GenerationParams::validate() const {
  if (max_new_tokens < 1) throw PreconditionError("max_new_tokens must be >= 1");
  if (!std::isfinite(temperature) || temperature < 0) {
    throw PreconditionError("temperature must be finite and >= 0");
  }
}

std::string_view finish_reason_name(FinishReason r) noexcept {
  return r == FinishReason::Stop ? "stop" : "length";
}

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) {
  return tokenizer.count(text);
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(std::size_t context_limit, const Tokenizer& tokenizer)
    : context_limit_(context_limit), tokenizer_(&tokenizer) {}

std::size_t LlmClient::count_tokens(std::string_view text) const { return tokenizer_->count(text); }

Completion LlmClient::complete(const RenderedPrompt& prompt, const GenerationParams& params) {
  params.validate();
  std::size_t prompt_tokens = count_tokens(prompt.text);
  auto budget = static_cast<std::size_t>(params.max_new_tokens);
  if (prompt_tokens + budget > context_limit_) {
    throw ContextLengthError("prompt has " + std::to_string(prompt_tokens) + " tokens; with " +
                             std::to_string(budget) + " new tokens it exceeds the " +
                             std::to_string(context_limit_) + "-token window");
  }
  auto start = std::chrono::steady_clock::now();
  Completion c = do_complete(prompt, params);
  if (apply_stops(c.text, params.stop_sequences)) c.finish_reason = FinishReason::Stop;
  if (c.text.empty()) c.finish_reason = FinishReason::Stop;
  c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  return c;
}

// ---------------------------------------------------------------------------

MockLlm::MockLlm(std::size_t context_limit) : LlmClient(context_limit) {}

std::unique_ptr<MockLlm> MockLlm::from_script(const std::filesystem::path& path) {
  auto mock = std::make_unique<MockLlm>();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed mock script " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error("mock script " + path.string() + " must be a JSON array");
  for (const auto& entry : doc) {
    try {
      mock->add_by_hash(entry.at("prompt_hash").get<std::string>(),
                        entry.at("completion").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error("bad mock script entry in " + path.string() + ": " + e.what());
    }
  }
  return mock;
}

void MockLlm::add(std::string_view prompt_text, std::string completion) {
  add_by_hash(stable_hash(prompt_text), std::move(completion));
}

void MockLlm::add_by_hash(std::string prompt_hash, std::string completion) {
  std::lock_guard lock(mu_);
  script_[std::move(prompt_hash)] = std::move(completion);
}

void MockLlm::set_fallback(std::optional<std::string> completion) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(completion);
}

Completion MockLlm::do_complete(const RenderedPrompt& prompt, const GenerationParams&) {
  ++calls_;
  std::string key = stable_hash(prompt.text);
  std::lock_guard lock(mu_);
  auto it = script_.find(key);
  if (it != script_.end()) return {it->second, FinishReason::Stop, {}};
  if (fallback_) return {*fallback_, FinishReason::Stop, {}};
  throw ReplayMissError(key, "mock llm has no scripted completion for " +
                                 std::string(prompt_kind_name(prompt.kind)) + " prompt");
}

// ---------------------------------------------------------------------------

std::optional<WireProtocol> wire_protocol_from_name(std::string_view name) noexcept {
  if (name == "native") return WireProtocol::Native;
  if (name == "openai") return WireProtocol::OpenAiCompletions;
  return std::nullopt;
}

HttpLlm::HttpLlm(std::shared_ptr<Upstream> upstream, Options options)
    : LlmClient(options.context_limit), upstream_(std::move(upstream)), options_(std::move(options)) {
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

Completion HttpLlm::do_complete(const RenderedPrompt& prompt, const GenerationParams& params) {
  nlohmann::json body;
  body["prompt"] = prompt.text;
  body["max_tokens"] = params.max_new_tokens;
  body["temperature"] = params.temperature;
  body["stop"] = params.stop_sequences;
  if (options_.protocol == WireProtocol::OpenAiCompletions && !options_.model.empty()) {
    body["model"] = options_.model;
  }

  RequestKey key{"complete", {{"endpoint", options_.endpoint}, {"request", body}}};
  HttpRequest req;
  req.method = "POST";
  req.url = options_.endpoint;
  req.body = body.dump();
  req.content_type = "application/json";
  req.timeout = params.timeout;

  std::string payload;
  {
    std::unique_lock lock(slot_mu_);
    slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    HttpLlm* self;
    ~Release() {
      {
        std::lock_guard lock(self->slot_mu_);
        --self->in_flight_;
      }
      self->slot_cv_.notify_one();
    }
  } release{this};

  try {
    payload = upstream_->fetch(key, req);
  } catch (const UpstreamStatusError& e) {
    std::string what = e.what();
    if (e.status() == 400 && (what.find("context") != std::string::npos ||
                              what.find("too long") != std::string::npos)) {
      throw ContextLengthError(what);
    }
    throw LlmError(what);
  } catch (const InfrastructureError&) {
    throw;
  } catch (const Error& e) {
    throw LlmError(e.what());
  }

  try {
    auto doc = nlohmann::json::parse(payload);
    Completion c;
    if (options_.protocol == WireProtocol::OpenAiCompletions) {
      const auto& choice = doc.at("choices").at(0);
      c.text = choice.at("text").get<std::string>();
      c.finish_reason = parse_finish_reason(choice.value("finish_reason", nlohmann::json()));
    } else {
      c.text = doc.at("text").get<std::string>();
      c.finish_reason = parse_finish_reason(doc.value("finish_reason", nlohmann::json()));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw LlmError(std::string("malformed completion response: ") + e.what());
  }
}

}  // namespace lmkb
