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

// Everything that leaves the process goes through Upstream: HTTP transport,
// retries with backoff, a shared rate limiter, and the on-disk cache whose
// files double as replay fixtures.

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lmkb/common.hpp"

namespace lmkb {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::string body;
  std::string content_type;
  std::chrono::milliseconds timeout{30000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::optional<std::chrono::milliseconds> retry_after;
};

/// Connection-level failure (DNS, refused, timeout). HTTP error statuses are
/// returned, not thrown.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable HTTP status from an upstream.
class UpstreamStatusError : public Error {
 public:
  UpstreamStatusError(int status, const std::string& message)
      : Error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Upstream answered 200 but with a payload we cannot interpret.
class MalformedPayloadError : public Error {
 public:
  using Error::Error;
};

/// Offline mode asked for a request that has no recorded fixture.
class ReplayMissError : public InfrastructureError {
 public:
  ReplayMissError(std::string key, const std::string& description);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class CacheCorruptionError : public InfrastructureError {
 public:
  using InfrastructureError::InfrastructureError;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport. https needs a TLS-enabled build.
std::shared_ptr<HttpTransport> make_http_transport(std::string user_agent = "lmkb/0.3");

/// Identity of a logical upstream call, independent of URL formatting.
struct RequestKey {
  std::string operation;
  nlohmann::json args;  // object; serialized with sorted keys

  /// stable_hash("<operation>\n<args dump>")
  std::string hash() const;
  std::string describe() const;
};

/// One recorded exchange. Stored as <dir>/<hash>.json.
struct StoredExchange {
  std::string operation;
  nlohmann::json args;
  int status = 200;
  std::string body;
};

/// Directory of recorded exchanges, one file per key. Writes are atomic.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir);

  std::optional<StoredExchange> get(const RequestKey& key) const;
  void put(const RequestKey& key, const StoredExchange& exchange) const;
  std::filesystem::path path_for(const RequestKey& key) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Token bucket shared by all callers of one Upstream.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// rate_per_second <= 0 disables limiting.
  RateLimiter(double rate_per_second, double burst, Sleeper sleeper = {});
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  Sleeper sleep_;
};

enum class CacheMode {
  Off,        // always go to the network
  ReadWrite,  // serve hits from the store, record misses
  Replay,     // store only; a miss is a ReplayMissError
};

struct UpstreamOptions {
  CacheMode mode = CacheMode::Off;
  std::optional<std::filesystem::path> store_dir;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double requests_per_second = 5.0;  // politeness between uncached calls
  double burst = 1.0;
  /// Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

class Upstream {
 public:
  Upstream(UpstreamOptions options, std::shared_ptr<HttpTransport> transport);

  /// Body of a 200 response for `request`, served from or recorded into the
  /// store per the cache mode. Retries transport failures, 429 and 5xx with
  /// exponential backoff; other statuses raise UpstreamStatusError.
  std::string fetch(const RequestKey& key, const HttpRequest& request);

  /// Number of requests that actually reached the transport.
  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  CacheMode mode() const noexcept { return options_.mode; }

 private:
  std::string fetch_network(const RequestKey& key, const HttpRequest& request);

  UpstreamOptions options_;
  std::shared_ptr<HttpTransport> transport_;
  std::optional<ReplayStore> store_;
  RateLimiter limiter_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace lmkb
