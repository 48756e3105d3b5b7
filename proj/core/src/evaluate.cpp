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

#include "lmkb/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace lmkb {

RowScore score_row(const std::set<std::string>& pred, const std::set<std::string>& gold) {
  std::size_t hits = 0;
  for (const auto& p : pred) hits += gold.count(p);
  RowScore s;
  if (pred.empty()) {
    s.precision = gold.empty() ? 1.0 : 0.0;
  } else {
    s.precision = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  s.recall = gold.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(gold.size());
  double sum = s.precision + s.recall;
  s.f1 = sum == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / sum;
  return s;
}

RelationScores macro_by_relation(std::span<const std::pair<Relation, RowScore>> rows) {
  RelationScores out;
  for (const auto& [rel, row] : rows) {
    auto& agg = out[rel];
    agg.precision += row.precision;
    agg.recall += row.recall;
    agg.f1 += row.f1;
    ++agg.rows;
  }
  for (auto& [rel, agg] : out) {
    auto n = static_cast<double>(agg.rows);
    agg.precision /= n;
    agg.recall /= n;
    agg.f1 /= n;
  }
  return out;
}

RowScore overall(const RelationScores& per_relation, bool strict) {
  if (per_relation.empty()) throw EvaluationError("no relations to average");
  if (strict && per_relation.size() != kRelationCount) {
    std::string missing;
    for (Relation r : all_relations()) {
      if (per_relation.count(r)) continue;
      if (!missing.empty()) missing += ", ";
      missing += relation_name(r);
    }
    throw EvaluationError("strict scoring needs all " + std::to_string(kRelationCount) +
                          " relations; missing: " + missing);
  }
  RowScore s;
  for (const auto& [rel, agg] : per_relation) {
    s.precision += agg.precision;
    s.recall += agg.recall;
    s.f1 += agg.f1;
  }
  auto n = static_cast<double>(per_relation.size());
  s.precision /= n;
  s.recall /= n;
  s.f1 /= n;
  return s;
}

std::vector<PredictionRow> read_prediction_rows(const std::filesystem::path& path,
                                                bool surface_strings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaluationError("cannot open " + path.string());
  const char* field = surface_strings ? "ObjectEntities" : "ObjectEntitiesID";
  std::vector<PredictionRow> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      PredictionRow row;
      row.subject_id = doc.at("SubjectEntityID").get<std::string>();
      auto rel_name = doc.at("Relation").get<std::string>();
      auto rel = relation_from_name(rel_name);
      if (!rel) throw DatasetError(path.string(), "unknown relation '" + rel_name + "'", lineno);
      row.relation = *rel;
      for (const auto& v : doc.at(field)) {
        if (v.is_array()) {
          throw DatasetError(path.string(), "nested object lists are not supported", lineno);
        }
        row.values.insert(v.get<std::string>());
      }
      out.push_back(std::move(row));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string(), e.what(), lineno);
    }
  }
  return out;
}

ScoreReport score_rows(std::span<const PredictionRow> predictions,
                       std::span<const PredictionRow> gold, const ScoreOptions& options) {
  using Key = std::pair<std::string, Relation>;
  auto key_name = [](const Key& k) {
    return k.first + " " + std::string(relation_name(k.second));
  };

  std::map<Key, const PredictionRow*> pred_by_key;
  for (const auto& p : predictions) {
    Key k{p.subject_id, p.relation};
    if (!pred_by_key.emplace(k, &p).second) {
      throw EvaluationError("duplicate prediction for " + key_name(k));
    }
  }
  std::map<Key, const PredictionRow*> gold_by_key;
  for (const auto& g : gold) {
    Key k{g.subject_id, g.relation};
    if (!gold_by_key.emplace(k, &g).second) {
      throw EvaluationError("duplicate gold row for " + key_name(k));
    }
  }
  for (const auto& [k, p] : pred_by_key) {
    if (!gold_by_key.count(k)) {
      throw EvaluationError("prediction for " + key_name(k) + " has no gold row");
    }
  }

  static const std::set<std::string> kEmpty;
  std::vector<std::pair<Relation, RowScore>> rows;
  rows.reserve(gold.size());
  for (const auto& g : gold) {
    auto it = pred_by_key.find({g.subject_id, g.relation});
    const auto& pred = it == pred_by_key.end() ? kEmpty : it->second->values;
    rows.emplace_back(g.relation, score_row(pred, g.values));
  }

  ScoreReport report;
  report.rows = rows.size();
  report.per_relation = macro_by_relation(rows);
  report.average = overall(report.per_relation, options.strict);
  return report;
}

ScoreReport score_files(const std::filesystem::path& predictions, const std::filesystem::path& gold,
                        const ScoreOptions& options) {
  // Gold must be a complete dataset file; predictions only need the key and
  // the scored field.
  auto gold_records = load_records(gold, LoadMode::Full);
  std::vector<PredictionRow> gold_rows;
  gold_rows.reserve(gold_records.size());
  for (const auto& r : gold_records) {
    const auto& values = options.surface_strings ? r.object_labels : r.object_ids;
    gold_rows.push_back({r.subject_id, r.relation, {values.begin(), values.end()}});
  }
  auto pred_rows = read_prediction_rows(predictions, options.surface_strings);
  return score_rows(pred_rows, gold_rows, options);
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string format_report_table(const ScoreReport& report) {
  std::size_t width = std::string_view("Relation").size();
  for (const auto& [rel, agg] : report.per_relation) {
    width = std::max(width, relation_name(rel).size());
  }
  auto row = [&](std::string_view name, const std::string& p, const std::string& r,
                 const std::string& f) {
    std::string line(name);
    line.resize(width + 2, ' ');
    auto cell = [&](const std::string& v, std::size_t w) {
      std::string c = v;
      if (c.size() < w) c.insert(0, w - c.size(), ' ');
      line += c;
    };
    cell(p, 11);
    cell(r, 10);
    cell(f, 10);
    return line + "\n";
  };
  std::string out = row("Relation", "Precision", "Recall", "F1 score");
  for (const auto& [rel, agg] : report.per_relation) {
    out += row(relation_name(rel), fixed4(agg.precision), fixed4(agg.recall), fixed4(agg.f1));
  }
  out += row("Average", fixed4(report.average.precision), fixed4(report.average.recall),
             fixed4(report.average.f1));
  return out;
}

std::string format_report_json(const ScoreReport& report) {
  nlohmann::ordered_json doc;
  auto rels = nlohmann::ordered_json::array();
  for (const auto& [rel, agg] : report.per_relation) {
    nlohmann::ordered_json r;
    r["relation"] = relation_name(rel);
    r["precision"] = agg.precision;
    r["recall"] = agg.recall;
    r["f1"] = agg.f1;
    r["rows"] = agg.rows;
    rels.push_back(std::move(r));
  }
  doc["relations"] = std::move(rels);
  doc["average"] = {{"precision", report.average.precision},
                    {"recall", report.average.recall},
                    {"f1", report.average.f1}};
  doc["rows"] = report.rows;
  return doc.dump(2) + "\n";
}

}  // namespace lmkb
