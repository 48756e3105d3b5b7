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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmkb/common.hpp"

namespace lmkb {

/// The 21 challenge relations, in the order the question table lists them.
enum class Relation : std::uint8_t {
  BandHasMember,
  CityLocatedAtRiver,
  CompanyHasParentOrganisation,
  CompoundHasParts,
  CountryBordersCountry,
  CountryHasOfficialLanguage,
  CountryHasStates,
  FootballerPlaysPosition,
  PersonCauseOfDeath,
  PersonHasAutobiography,
  PersonHasEmployer,
  PersonHasNoblePrize,
  PersonHasNumberOfChildren,
  PersonHasPlaceOfDeath,
  PersonHasProfession,
  PersonHasSpouse,
  PersonPlaysInstrument,
  PersonSpeaksLanguage,
  RiverBasinsCountry,
  SeriesHasNumberOfEpisodes,
  StateBordersState,
};

inline constexpr std::size_t kRelationCount = 21;

std::span<const Relation, kRelationCount> all_relations() noexcept;
std::string_view relation_name(Relation r) noexcept;
std::optional<Relation> relation_from_name(std::string_view name) noexcept;

/// A relation together with its natural-language question template.
struct RelationKind {
  Relation relation;
  std::string_view name;
  std::string question_template;  // exactly one '_' placeholder
};

class DatasetError : public Error {
 public:
  DatasetError(const std::string& message, std::size_t line = 0);
  /// "source:line: message"
  DatasetError(std::string_view source, const std::string& message, std::size_t line);
  /// 1-based line of the offending input, 0 when not line-bound.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Relation -> question templates, loaded from a tab-separated data file so
/// the wording can change without a rebuild.
class QuestionTable {
 public:
  static QuestionTable load(const std::filesystem::path& path);
  static QuestionTable load_default();
  /// Parses "Name<TAB>template" lines; '#' lines and blank lines are skipped.
  static QuestionTable parse(std::string_view tsv);

  RelationKind kind(Relation r) const;
  const std::string& question_template(Relation r) const;

  /// Substitutes the subject label for the single '_' of the template.
  std::string question_for(Relation r, std::string_view subject_label) const;

 private:
  std::array<std::string, kRelationCount> templates_;
};

/// One subject/relation row with its ground-truth objects.
struct Record {
  std::string subject_id;
  std::string subject_label;
  Relation relation = Relation::BandHasMember;
  std::vector<std::string> object_ids;
  std::vector<std::string> object_labels;

  bool operator==(const Record&) const = default;
};

enum class LoadMode {
  Full,  // object fields required
  Stub,  // object fields optional (test-set shape)
};

/// Parses one JSON line. Throws DatasetError (line() == 0) on any problem.
Record parse_record(std::string_view line, LoadMode mode);

/// Reads line-delimited records. Blank lines are ignored; errors carry the
/// 1-based line number.
std::vector<Record> read_records(std::istream& in, LoadMode mode, std::string_view source = {});
std::vector<Record> load_records(const std::filesystem::path& path, LoadMode mode);

/// Serializes with the input field names, SubjectEntityID first.
std::string serialize_record(const Record& record);
void write_records(std::span<const Record> records, const std::filesystem::path& path);

}  // namespace lmkb
