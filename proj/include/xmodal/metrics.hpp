// include/xmodal/metrics.hpp

// Copyright 2026  The xmodal Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/embedding_io.hpp"
#include "xmodal/linker_model.hpp"
#include "xmodal/retrieval.hpp"

namespace xmodal {

// Relevance flags of a ranking over the full database, best first.
using Relevance = std::vector<bool>;

Relevance relevance_of(std::span<const std::string> ranked_labels, const std::string& query_label);

// AP@K = (1 / min(R, K)) * sum over relevant ranks r <= K of precision@r,
// where R is the number of relevant items in the whole ranking. Returns
// nullopt when R = 0 (the query is excluded rather than scored zero).
std::optional<double> average_precision_at_k(const Relevance& ranking, std::size_t k);
std::optional<double> average_precision_at_k(std::span<const std::string> ranked_labels,
                                             const std::string& query_label, std::size_t k);

// 1-based rank of the first relevant item.
std::optional<std::size_t> first_relevant_rank(const Relevance& ranking);
// Mean 1-based rank over all relevant items.
std::optional<double> mean_relevant_rank(const Relevance& ranking);

// 100 * mean of the per-query AP values. Throws on an empty input.
double map_at_k(std::span<const double> average_precisions);
// Arithmetic mean of per-query ranks. Throws on an empty input.
double mean_rank(std::span<const double> ranks);

enum class MeanRankVariant { kFirstRelevant, kAllRelevant };

std::string_view to_string(MeanRankVariant v);
MeanRankVariant parse_mean_rank_variant(std::string_view s);

struct EvalOptions {
  std::size_t k = 10;
  std::size_t fuse_n = 10;
  FusionWeighting weighting = FusionWeighting::kUniform;
  MeanRankVariant mean_rank_variant = MeanRankVariant::kFirstRelevant;
};

nlohmann::ordered_json to_json(const EvalOptions& o);
// Partial update: only keys present are assigned; unknown keys throw InputError.
void from_json(const nlohmann::json& j, EvalOptions& o);

struct QueryOutcome {
  std::string query_id;
  std::string label;
  std::size_t first_rank = 0;
  double rank = 0.0;  // per the mean-rank variant
  double average_precision = 0.0;
};

struct ConditionReport {
  Direction direction = Direction::kSpeakerToText;
  RetrievalMode mode = RetrievalMode::kPlain;
  double map = 0.0;        // percent
  double mean_rank = 0.0;
  std::size_t n_queries = 0;   // counted queries
  std::size_t n_excluded = 0;  // queries with no relevant item in the database
  std::size_t database_size = 0;
  std::vector<QueryOutcome> queries;

  std::string name() const;  // "s2t", "t2s", "s2t_fused", "t2s_fused"
};

struct RetrievalReport {
  std::string mode = "linked";  // "linked" or "unlinked"
  EvalOptions options;
  std::array<ConditionReport, 4> conditions;  // s2t, t2s, s2t_fused, t2s_fused
  nlohmann::json config = nlohmann::json::object();

  const ConditionReport& condition(Direction d, RetrievalMode m) const;
};

// Every speaker row queries the text index (s2t) and every text row queries
// the speaker index (t2s), plain and fused. Queries run in parallel; results
// are stored by query position so the report is deterministic.
RetrievalReport evaluate_indexes(const SearchIndex& speaker_index, const SearchIndex& text_index,
                                 const EvalOptions& options);

// Builds projection-level indexes for the evaluation set and evaluates them.
RetrievalReport evaluate(const LinkerParams& params, const LinkerConfig& config,
                         const Dataset& eval, const EvalOptions& options);

nlohmann::ordered_json to_json(const RetrievalReport& report);
// Plain-text table laid out as s2t | t2s | s2t(fusion) | t2s(fusion).
std::string format_table(const RetrievalReport& report);

struct EerReport {
  double eer_percent = 0.0;
  double threshold = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

// Equal error rate for "accept when score >= threshold". Operating points
// are taken at every distinct score (plus the accept-nothing point), and the
// EER is linearly interpolated between the two adjacent points where
// FRR - FAR changes sign.
EerReport eer_from_scores(std::span<const double> scores, const std::vector<bool>& is_target);

// All unordered pairs of rows are trials, scored by cosine; a trial is a
// target when both rows share a label.
EerReport text_eer(const Matrix& rows, std::span<const std::string> labels);

}  // namespace xmodal
