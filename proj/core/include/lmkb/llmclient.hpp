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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lmkb/common.hpp"
#include "lmkb/promptkit.hpp"
#include "lmkb/retrieval.hpp"

namespace lmkb {

class Upstream;

inline constexpr std::size_t kDefaultContextLimit = 4096;

struct GenerationParams {
  int max_new_tokens = 256;
  double temperature = 0.0;
  std::vector<std::string> stop_sequences;
  std::chrono::milliseconds timeout{120000};

  /// Throws PreconditionError on max_new_tokens < 1 or a non-finite /
  /// negative temperature.
  void validate() const;
};

enum class FinishReason { Stop, Length };

std::string_view finish_reason_name(FinishReason r) noexcept;

struct Completion {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  std::chrono::milliseconds latency{0};
};

class LlmError : public Error {
 public:
  using Error::Error;
};

/// Prompt plus generation budget does not fit the backend's window. Kept
/// distinct so the pipeline can shrink the context and retry.
class ContextLengthError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// Token count under the given tokenizer. Exactly additive over whitespace
/// separated concatenation for the default tokenizer.
std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer = default_tokenizer());

/// Text-completion backend. Implementations are safe for concurrent use.
class LlmClient {
 public:
  explicit LlmClient(std::size_t context_limit = kDefaultContextLimit,
                     const Tokenizer& tokenizer = default_tokenizer());
  virtual ~LlmClient() = default;

  /// Returns only the continuation; stop sequences are cut off.
  Completion complete(const RenderedPrompt& prompt, const GenerationParams& params);

  std::size_t count_tokens(std::string_view text) const;
  std::size_t context_limit() const noexcept { return context_limit_; }
  const Tokenizer& tokenizer() const noexcept { return *tokenizer_; }

 protected:
  virtual Completion do_complete(const RenderedPrompt& prompt, const GenerationParams& params) = 0;

 private:
  std::size_t context_limit_;
  const Tokenizer* tokenizer_;
};

/// Deterministic backend answering from a script keyed by stable_hash of the
/// full prompt text. Unscripted prompts raise InfrastructureError naming the
/// key, unless a fallback completion is configured.
class MockLlm final : public LlmClient {
 public:
  explicit MockLlm(std::size_t context_limit = kDefaultContextLimit);

  /// Script file: JSON array of {"prompt_hash": ..., "completion": ...}
  /// objects (extra fields such as "note" are ignored).
  static std::unique_ptr<MockLlm> from_script(const std::filesystem::path& path);

  void add(std::string_view prompt_text, std::string completion);
  void add_by_hash(std::string prompt_hash, std::string completion);
  void set_fallback(std::optional<std::string> completion);

  std::size_t calls() const noexcept { return calls_.load(); }

 protected:
  Completion do_complete(const RenderedPrompt& prompt, const GenerationParams& params) override;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> script_;
  std::optional<std::string> fallback_;
  std::atomic<std::size_t> calls_{0};
};

enum class WireProtocol {
  /// POST {"prompt","max_tokens","temperature","stop"} ->
  /// {"text","finish_reason"}
  Native,
  /// OpenAI-style /v1/completions, as served by llama.cpp, vLLM and others.
  OpenAiCompletions,
};

std::optional<WireProtocol> wire_protocol_from_name(std::string_view name) noexcept;

/// Remote completion endpoint, reached through the upstream layer (so calls
/// can be recorded and replayed). Caps in-flight requests.
class HttpLlm final : public LlmClient {
 public:
  struct Options {
    std::string endpoint;
    WireProtocol protocol = WireProtocol::Native;
    std::string model;  // sent only for OpenAiCompletions
    std::size_t context_limit = kDefaultContextLimit;
    std::size_t max_in_flight = 4;
  };

  HttpLlm(std::shared_ptr<Upstream> upstream, Options options);

 protected:
  Completion do_complete(const RenderedPrompt& prompt, const GenerationParams& params) override;

 private:
  std::shared_ptr<Upstream> upstream_;
  Options options_;
  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
};

}  // namespace lmkb
