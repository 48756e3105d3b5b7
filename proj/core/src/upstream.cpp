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

#include "lmkb/upstream.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace lmkb {

namespace {

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

ReplayMissError::ReplayMissError(std::string key, const std::string& description)
    : InfrastructureError("replay miss for key " + key + " (" + description + ")"),
      key_(std::move(key)) {}

std::string RequestKey::hash() const { return stable_hash(operation + "\n" + args.dump()); }

std::string RequestKey::describe() const { return operation + " " + args.dump(); }

// ---------------------------------------------------------------------------

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ReplayStore::path_for(const RequestKey& key) const {
  return dir_ / (key.hash() + ".json");
}

std::optional<StoredExchange> ReplayStore::get(const RequestKey& key) const {
  auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto doc = nlohmann::json::parse(read_file(path));
    StoredExchange ex;
    ex.operation = doc.at("operation").get<std::string>();
    ex.args = doc.at("args");
    ex.status = doc.value("status", 200);
    ex.body = doc.at("body").get<std::string>();
    if (ex.operation != key.operation || ex.args != key.args) {
      throw CacheCorruptionError("cache entry " + path.string() + " does not match " +
                                 key.describe());
    }
    return ex;
  } catch (const nlohmann::json::exception& e) {
    throw CacheCorruptionError("unreadable cache entry " + path.string() + ": " + e.what());
  }
}

void ReplayStore::put(const RequestKey& key, const StoredExchange& exchange) const {
  nlohmann::ordered_json doc;
  doc["operation"] = exchange.operation;
  doc["args"] = exchange.args;
  doc["status"] = exchange.status;
  doc["body"] = exchange.body;
  write_file_atomic(path_for(key), doc.dump(1) + "\n");
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double rate_per_second, double burst, Sleeper sleeper)
    : rate_(rate_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(Clock::now()),
      sleep_(sleeper ? std::move(sleeper) : Sleeper(default_sleep)) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  std::chrono::milliseconds wait{0};
  {
    std::lock_guard lock(mu_);
    auto now = Clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    tokens_ -= 1.0;
    if (tokens_ < 0) {
      // The deficit is reserved now; the caller sleeps it off outside the lock.
      wait = std::chrono::milliseconds(static_cast<long long>(std::ceil(-tokens_ / rate_ * 1000)));
    }
  }
  if (wait.count() > 0) sleep_(wait);
}

// ---------------------------------------------------------------------------

Upstream::Upstream(UpstreamOptions options, std::shared_ptr<HttpTransport> transport)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      limiter_(options_.requests_per_second, options_.burst, options_.sleeper) {
  if (!options_.sleeper) options_.sleeper = default_sleep;
  if (options_.mode != CacheMode::Off) {
    if (!options_.store_dir) throw PreconditionError("cache mode needs a store directory");
    store_.emplace(*options_.store_dir);
  }
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string Upstream::fetch(const RequestKey& key, const HttpRequest& request) {
  if (store_) {
    if (auto hit = store_->get(key)) {
      if (hit->status != 200) {
        throw UpstreamStatusError(hit->status, "recorded status " + std::to_string(hit->status) +
                                                   " for " + key.describe());
      }
      return std::move(hit->body);
    }
    if (options_.mode == CacheMode::Replay) throw ReplayMissError(key.hash(), key.describe());
  }
  std::string body = fetch_network(key, request);
  if (store_) store_->put(key, StoredExchange{key.operation, key.args, 200, body});
  return body;
}

std::string Upstream::fetch_network(const RequestKey& key, const HttpRequest& request) {
  if (!transport_) throw TransportError("no transport configured for " + key.describe());
  std::string last_failure;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    limiter_.acquire();
    std::optional<std::chrono::milliseconds> hinted;
    try {
      ++network_calls_;
      HttpResponse resp = transport_->send(request);
      if (resp.status == 200) return std::move(resp.body);
      if (!retryable_status(resp.status)) {
        throw UpstreamStatusError(resp.status, "HTTP " + std::to_string(resp.status) + " from " +
                                                   request.url + ": " +
                                                   resp.body.substr(0, 200));
      }
      last_failure = "HTTP " + std::to_string(resp.status);
      hinted = resp.retry_after;
    } catch (const TransportError& e) {
      last_failure = e.what();
    }
    if (attempt < options_.max_attempts) {
      auto wait = std::max(backoff, hinted.value_or(std::chrono::milliseconds{0}));
      log_warn(key.operation + " attempt " + std::to_string(attempt) + " failed (" +
               last_failure + "), retrying in " + std::to_string(wait.count()) + " ms");
      options_.sleeper(wait);
      backoff *= 2;
    }
  }
  throw TransportError(key.describe() + " failed after " + std::to_string(options_.max_attempts) +
                       " attempts: " + last_failure);
}

}  // namespace lmkb
