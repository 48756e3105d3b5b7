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

#include <charconv>

#include <httplib.h>

#include "lmkb/upstream.hpp"

namespace lmkb {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // /path?query
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("not an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::string user_agent) : user_agent_(std::move(user_agent)) {}

  HttpResponse send(const HttpRequest& request) override {
    auto [origin, target] = split_url(request.url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin.rfind("https://", 0) == 0) {
      throw TransportError("https requested but lmkb was built without TLS: " + request.url);
    }
#endif
    httplib::Client client(origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
    client.set_connection_timeout(std::max<long long>(1, secs), 0);
    client.set_read_timeout(std::max<long long>(1, secs), 0);
    client.set_follow_location(true);
    httplib::Headers headers{{"User-Agent", user_agent_}};

    httplib::Result res = request.method == "POST"
                              ? client.Post(target, headers, request.body,
                                            request.content_type.empty() ? "application/json"
                                                                         : request.content_type)
                              : client.Get(target, headers);
    if (!res) {
      throw TransportError(request.method + " " + request.url + ": " +
                           httplib::to_string(res.error()));
    }
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      auto value = res->get_header_value("Retry-After");
      long long seconds = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seconds);
      if (ec == std::errc{} && seconds >= 0) out.retry_after = std::chrono::seconds(seconds);
    }
    return out;
  }

 private:
  std::string user_agent_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(std::string user_agent) {
  return std::make_shared<HttplibTransport>(std::move(user_agent));
}

}  // namespace lmkb
