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

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmkb/dataset.hpp"

namespace lmkb {

struct RowScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Set-based scores for one record. Empty predictions score precision 1
/// only when the gold set is empty too; an empty gold set gives recall 1.
RowScore score_row(const std::set<std::string>& pred, const std::set<std::string>& gold);

struct RelationScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t rows = 0;
};

using RelationScores = std::map<Relation, RelationScore>;

/// Unweighted mean of row precision, recall and f1 per relation.
RelationScores macro_by_relation(std::span<const std::pair<Relation, RowScore>> rows);

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Unweighted mean over the relations present. With `strict`, all 21
/// relations must be present. EvaluationError on an empty map.
RowScore overall(const RelationScores& per_relation, bool strict = true);

struct ScoreReport {
  RelationScores per_relation;
  RowScore average;
  std::size_t rows = 0;
};

struct ScoreOptions {
  bool strict = false;
  /// Compare ObjectEntities strings instead of identifiers. Debugging only.
  bool surface_strings = false;
};

/// One predicted row, read leniently: only the key and the scored field are
/// required, so pipeline output and gold files both qualify.
struct PredictionRow {
  std::string subject_id;
  Relation relation = Relation::BandHasMember;
  std::set<std::string> values;
};

std::vector<PredictionRow> read_prediction_rows(const std::filesystem::path& path,
                                                bool surface_strings = false);

/// Aligns rows by (subject id, relation). Gold rows without a prediction
/// score as empty predictions; a prediction without a gold row, or a key
/// repeated within one side, is an EvaluationError.
ScoreReport score_rows(std::span<const PredictionRow> predictions,
                       std::span<const PredictionRow> gold, const ScoreOptions& options = {});

ScoreReport score_files(const std::filesystem::path& predictions, const std::filesystem::path& gold,
                        const ScoreOptions& options = {});

/// Aligned table: Relation, Precision, Recall, F1 score, then an Average
/// row. Four decimals.
std::string format_report_table(const ScoreReport& report);
std::string format_report_json(const ScoreReport& report);

}  // namespace lmkb
