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

#include "lmkb/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lmkb {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<Relation, kRelationCount> kRelations = {
    Relation::BandHasMember,
    Relation::CityLocatedAtRiver,
    Relation::CompanyHasParentOrganisation,
    Relation::CompoundHasParts,
    Relation::CountryBordersCountry,
    Relation::CountryHasOfficialLanguage,
    Relation::CountryHasStates,
    Relation::FootballerPlaysPosition,
    Relation::PersonCauseOfDeath,
    Relation::PersonHasAutobiography,
    Relation::PersonHasEmployer,
    Relation::PersonHasNoblePrize,
    Relation::PersonHasNumberOfChildren,
    Relation::PersonHasPlaceOfDeath,
    Relation::PersonHasProfession,
    Relation::PersonHasSpouse,
    Relation::PersonPlaysInstrument,
    Relation::PersonSpeaksLanguage,
    Relation::RiverBasinsCountry,
    Relation::SeriesHasNumberOfEpisodes,
    Relation::StateBordersState,
};

constexpr std::array<std::string_view, kRelationCount> kRelationNames = {
    "BandHasMember",
    "CityLocatedAtRiver",
    "CompanyHasParentOrganisation",
    "CompoundHasParts",
    "CountryBordersCountry",
    "CountryHasOfficialLanguage",
    "CountryHasStates",
    "FootballerPlaysPosition",
    "PersonCauseOfDeath",
    "PersonHasAutobiography",
    "PersonHasEmployer",
    "PersonHasNoblePrize",
    "PersonHasNumberOfChildren",
    "PersonHasPlaceOfDeath",
    "PersonHasProfession",
    "PersonHasSpouse",
    "PersonPlaysInstrument",
    "PersonSpeaksLanguage",
    "RiverBasinsCountry",
    "SeriesHasNumberOfEpisodes",
    "StateBordersState",
};

std::vector<std::string> read_string_list(const ojson& row, const char* field) {
  const ojson& value = row.at(field);
  if (!value.is_array()) throw DatasetError(std::string(field) + " must be a list");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (item.is_array()) {
      // Per-object alias sets are not modelled; refuse rather than guess.
      throw DatasetError(std::string(field) + " contains a nested list (alias sets unsupported)");
    }
    if (!item.is_string()) throw DatasetError(std::string(field) + " items must be strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string read_string(const ojson& row, const char* field) {
  auto it = row.find(field);
  if (it == row.end()) throw DatasetError(std::string("missing field ") + field);
  if (!it->is_string()) throw DatasetError(std::string(field) + " must be a string");
  return it->get<std::string>();
}

}  // namespace

std::span<const Relation, kRelationCount> all_relations() noexcept { return kRelations; }

std::string_view relation_name(Relation r) noexcept {
  return kRelationNames[static_cast<std::size_t>(r)];
}

std::optional<Relation> relation_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kRelationCount; ++i) {
    if (kRelationNames[i] == name) return kRelations[i];
  }
  return std::nullopt;
}

DatasetError::DatasetError(const std::string& message, std::size_t line)
    : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

DatasetError::DatasetError(std::string_view source, const std::string& message, std::size_t line)
    : Error(std::string(source) + ":" + std::to_string(line) + ": " + message), line_(line) {}

// ---------------------------------------------------------------------------
// QuestionTable

QuestionTable QuestionTable::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const DatasetError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

QuestionTable QuestionTable::load_default() {
  return load(default_data_dir() / "relations.tsv");
}

QuestionTable QuestionTable::parse(std::string_view tsv) {
  QuestionTable table;
  std::array<bool, kRelationCount> seen{};
  std::size_t line_no = 0;
  while (!tsv.empty()) {
    std::size_t nl = tsv.find('\n');
    std::string_view line = tsv.substr(0, nl);
    tsv = nl == std::string_view::npos ? std::string_view{} : tsv.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || line.front() == '#') continue;

    std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw DatasetError("expected <relation>\\t<question>", line_no);
    std::string_view name = trim(line.substr(0, tab));
    std::string_view question = line.substr(tab + 1);
    auto rel = relation_from_name(name);
    if (!rel) throw DatasetError("unknown relation '" + std::string(name) + "'", line_no);
    auto idx = static_cast<std::size_t>(*rel);
    if (seen[idx]) throw DatasetError("duplicate relation '" + std::string(name) + "'", line_no);
    if (std::count(question.begin(), question.end(), '_') != 1) {
      throw DatasetError("template for " + std::string(name) + " must contain exactly one '_'",
                         line_no);
    }
    seen[idx] = true;
    table.templates_[idx] = std::string(question);
  }
  for (std::size_t i = 0; i < kRelationCount; ++i) {
    if (!seen[i]) throw DatasetError("no template for " + std::string(kRelationNames[i]));
  }
  return table;
}

RelationKind QuestionTable::kind(Relation r) const {
  return RelationKind{r, relation_name(r), question_template(r)};
}

const std::string& QuestionTable::question_template(Relation r) const {
  return templates_[static_cast<std::size_t>(r)];
}

std::string QuestionTable::question_for(Relation r, std::string_view subject_label) const {
  const std::string& tmpl = question_template(r);
  std::size_t pos = tmpl.find('_');
  std::string out;
  out.reserve(tmpl.size() + subject_label.size());
  out.append(tmpl, 0, pos);
  out.append(subject_label);
  out.append(tmpl, pos + 1, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------
// Records

Record parse_record(std::string_view line, LoadMode mode) {
  ojson row;
  try {
    row = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(std::string("malformed JSON: ") + e.what());
  }
  if (!row.is_object()) throw DatasetError("record must be a JSON object");

  Record rec;
  rec.subject_id = read_string(row, "SubjectEntityID");
  rec.subject_label = read_string(row, "SubjectEntity");
  std::string rel_name = read_string(row, "Relation");
  auto rel = relation_from_name(rel_name);
  if (!rel) throw DatasetError("unknown relation '" + rel_name + "'");
  rec.relation = *rel;

  if (rec.subject_id.empty()) throw DatasetError("SubjectEntityID is empty");
  if (rec.subject_label.empty()) throw DatasetError("SubjectEntity is empty");

  bool has_ids = row.contains("ObjectEntitiesID");
  bool has_labels = row.contains("ObjectEntities");
  if (mode == LoadMode::Full && (!has_ids || !has_labels)) {
    throw DatasetError("ObjectEntitiesID and ObjectEntities are required");
  }
  if (has_ids) rec.object_ids = read_string_list(row, "ObjectEntitiesID");
  if (has_labels) rec.object_labels = read_string_list(row, "ObjectEntities");
  if (has_ids != has_labels && (has_ids ? !rec.object_ids.empty() : !rec.object_labels.empty())) {
    throw DatasetError("ObjectEntitiesID and ObjectEntities must appear together");
  }
  if (rec.object_ids.size() != rec.object_labels.size()) {
    throw DatasetError("ObjectEntitiesID has " + std::to_string(rec.object_ids.size()) +
                       " items but ObjectEntities has " + std::to_string(rec.object_labels.size()));
  }
  return rec;
}

std::vector<Record> read_records(std::istream& in, LoadMode mode, std::string_view source) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_record(line, mode));
    } catch (const DatasetError& e) {
      if (source.empty()) throw DatasetError(e.what(), line_no);
      throw DatasetError(source, e.what(), line_no);
    }
  }
  return out;
}

std::vector<Record> load_records(const std::filesystem::path& path, LoadMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return read_records(in, mode, path.string());
}

std::string serialize_record(const Record& record) {
  ojson row;
  row["SubjectEntityID"] = record.subject_id;
  row["SubjectEntity"] = record.subject_label;
  row["ObjectEntitiesID"] = record.object_ids;
  row["ObjectEntities"] = record.object_labels;
  row["Relation"] = relation_name(record.relation);
  return row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write_records(std::span<const Record> records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace lmkb
