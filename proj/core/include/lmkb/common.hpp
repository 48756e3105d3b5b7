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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lmkb {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (empty surface, bad id, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Errors that must abort a whole batch rather than degrade one record:
/// a replay miss in offline mode or an unreadable cache entry.
class InfrastructureError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a. Stable across platforms and runs; used for cache keys and
/// mock-script keys, never for anything security related.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// fnv1a64 rendered as 16 lowercase hex digits.
std::string stable_hash(std::string_view bytes);

// ---------------------------------------------------------------------------
// Text helpers. All operate on UTF-8 bytes and only touch ASCII.

bool is_ascii_space(char c) noexcept;
std::string_view trim(std::string_view s) noexcept;
/// Trims and collapses every run of ASCII whitespace into one space.
std::string collapse_whitespace(std::string_view s);
std::string ascii_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept;
/// Appends the UTF-8 encoding of a code point; invalid values become U+FFFD.
void append_utf8(std::string& out, char32_t cp);
std::string percent_encode(std::string_view s);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// Logging. Diagnostics go to stderr unless a sink is installed.

enum class LogLevel { Debug, Info, Warn, Error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

void set_log_sink(LogSink sink);
void set_log_level(LogLevel level);
void log(LogLevel level, std::string_view message);
inline void log_warn(std::string_view m) { log(LogLevel::Warn, m); }
inline void log_info(std::string_view m) { log(LogLevel::Info, m); }

/// Directory holding relations.tsv and templates/. Resolution order:
/// LMKB_DATA_DIR, the source checkout, then the install prefix.
std::filesystem::path default_data_dir();

}  // namespace lmkb
