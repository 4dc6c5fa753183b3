// src/metrics.cpp

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

#include "xmodal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "xmodal/error.hpp"
#include "xmodal/numerics.hpp"

namespace xmodal {

Relevance relevance_of(std::span<const std::string> ranked_labels, const std::string& query_label) {
  Relevance r(ranked_labels.size());
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) r[i] = ranked_labels[i] == query_label;
  return r;
}

std::optional<double> average_precision_at_k(const Relevance& ranking, std::size_t k) {
  if (k == 0) throw std::invalid_argument("average_precision_at_k: K must be positive");
  if (ranking.empty()) throw std::invalid_argument("average_precision_at_k: empty ranking");
  const auto total = static_cast<std::size_t>(std::count(ranking.begin(), ranking.end(), true));
  if (total == 0) return std::nullopt;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    if (!ranking[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(std::min(total, k));
}

std::optional<double> average_precision_at_k(std::span<const std::string> ranked_labels,
                                             const std::string& query_label, std::size_t k) {
  return average_precision_at_k(relevance_of(ranked_labels, query_label), k);
}

std::optional<std::size_t> first_relevant_rank(const Relevance& ranking) {
  const auto it = std::find(ranking.begin(), ranking.end(), true);
  if (it == ranking.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

std::optional<double> mean_relevant_rank(const Relevance& ranking) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r)
    if (ranking[r]) {
      sum += static_cast<double>(r + 1);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double map_at_k(std::span<const double> average_precisions) {
  if (average_precisions.empty()) throw Error("mAP: no counted queries");
  double sum = 0.0;
  for (double ap : average_precisions) sum += ap;
  return 100.0 * sum / static_cast<double>(average_precisions.size());
}

double mean_rank(std::span<const double> ranks) {
  if (ranks.empty()) throw Error("MeanR: no counted queries");
  double sum = 0.0;
  for (double r : ranks) sum += r;
  return sum / static_cast<double>(ranks.size());
}

std::string_view to_string(MeanRankVariant v) {
  return v == MeanRankVariant::kFirstRelevant ? "first" : "all";
}

MeanRankVariant parse_mean_rank_variant(std::string_view s) {
  if (s == "first") return MeanRankVariant::kFirstRelevant;
  if (s == "all") return MeanRankVariant::kAllRelevant;
  throw InputError("unknown mean-rank variant '" + std::string(s) + "'");
}

nlohmann::ordered_json to_json(const EvalOptions& o) {
  nlohmann::ordered_json j;
  j["k"] = o.k;
  j["fuse_n"] = o.fuse_n;
  j["weighting"] = to_string(o.weighting);
  j["mean_rank"] = to_string(o.mean_rank_variant);
  return j;
}

void from_json(const nlohmann::json& j, EvalOptions& o) {
  if (!j.is_object()) throw InputError("evaluation options must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "k") o.k = value.get<std::size_t>();
    else if (key == "fuse_n") o.fuse_n = value.get<std::size_t>();
    else if (key == "weighting") o.weighting = parse_weighting(value.get<std::string>());
    else if (key == "mean_rank") o.mean_rank_variant = parse_mean_rank_variant(value.get<std::string>());
    else throw InputError("unknown evaluation option '" + key + "'");
  }
}

std::string ConditionReport::name() const {
  std::string n(to_string(direction));
  if (mode == RetrievalMode::kFused) n += "_fused";
  return n;
}

const ConditionReport& RetrievalReport::condition(Direction d, RetrievalMode m) const {
  for (const auto& c : conditions)
    if (c.direction == d && c.mode == m) return c;
  throw std::logic_error("missing condition");
}

namespace {

ConditionReport run_condition(Direction direction, RetrievalMode mode,
                              const SearchIndex& speaker_index, const SearchIndex& text_index,
                              const EvalOptions& options) {
  const SearchIndex& queries =
      direction == Direction::kSpeakerToText ? speaker_index : text_index;
  const SearchIndex& target =
      direction == Direction::kSpeakerToText ? text_index : speaker_index;
  ConditionReport report;
  report.direction = direction;
  report.mode = mode;
  report.database_size = target.size();

  RetrievalOptions ro;
  ro.k = target.size();
  ro.fuse_n = options.fuse_n;
  ro.weighting = options.weighting;

  const auto n = static_cast<std::int64_t>(queries.size());
  std::vector<std::optional<QueryOutcome>> outcomes(queries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t q = 0; q < n; ++q) {
    const RankedList ranked =
        retrieve(direction, queries.row(q), speaker_index, text_index, mode, ro);
    Relevance rel(ranked.items.size());
    for (std::size_t i = 0; i < rel.size(); ++i)
      rel[i] = target.label(ranked.items[i].row) == queries.label(q);
    const auto ap = average_precision_at_k(rel, options.k);
    if (!ap) continue;
    QueryOutcome o;
    o.query_id = queries.id(q);
    o.label = queries.label(q);
    o.first_rank = *first_relevant_rank(rel);
    o.rank = options.mean_rank_variant == MeanRankVariant::kFirstRelevant
                 ? static_cast<double>(o.first_rank)
                 : *mean_relevant_rank(rel);
    o.average_precision = *ap;
    outcomes[q] = std::move(o);
  }

  std::vector<double> aps, ranks;
  for (auto& o : outcomes) {
    if (!o) {
      ++report.n_excluded;
      continue;
    }
    aps.push_back(o->average_precision);
    ranks.push_back(o->rank);
    report.queries.push_back(std::move(*o));
  }
  report.n_queries = report.queries.size();
  if (!aps.empty()) {
    report.map = map_at_k(aps);
    report.mean_rank = mean_rank(ranks);
  }
  return report;
}

}  // namespace

RetrievalReport evaluate_indexes(const SearchIndex& speaker_index, const SearchIndex& text_index,
                                 const EvalOptions& options) {
  if (speaker_index.empty() || text_index.empty()) throw Error("evaluate: empty index");
  if (speaker_index.dim() != text_index.dim())
    throw InputError("evaluate: speaker and text indexes differ in dimension");
  if (options.k == 0 || options.fuse_n == 0) throw InputError("evaluate: K and fuse_n must be positive");
  RetrievalReport report;
  report.options = options;
  std::size_t i = 0;
  for (RetrievalMode m : {RetrievalMode::kPlain, RetrievalMode::kFused})
    for (Direction d : {Direction::kSpeakerToText, Direction::kTextToSpeaker})
      report.conditions[i++] = run_condition(d, m, speaker_index, text_index, options);
  return report;
}

RetrievalReport evaluate(const LinkerParams& params, const LinkerConfig& config,
                         const Dataset& eval, const EvalOptions& options) {
  const PairingReport pairing = validate_pairing(eval.speaker_manifest, eval.text_manifest);
  if (!pairing.complete()) throw InputError("evaluation set pairing is incomplete");
  const SearchIndex speaker =
      build_index(params, config, eval.speaker, eval.speaker_manifest, Modality::kSpeaker);
  const SearchIndex text =
      build_index(params, config, eval.text, eval.text_manifest, Modality::kText);
  return evaluate_indexes(speaker, text, options);
}

nlohmann::ordered_json to_json(const RetrievalReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode;
  j["options"] = to_json(report.options);
  j["map_definition"] = "AP@K normalized by min(R, K); queries with no relevant item excluded";
  nlohmann::ordered_json conds;
  for (const auto& c : report.conditions) {
    nlohmann::ordered_json cj;
    cj["map"] = c.map;
    cj["mean_rank"] = c.mean_rank;
    cj["n_queries"] = c.n_queries;
    cj["n_excluded"] = c.n_excluded;
    cj["database_size"] = c.database_size;
    nlohmann::ordered_json qs = nlohmann::ordered_json::array();
    for (const auto& q : c.queries)
      qs.push_back({{"query", q.query_id},
                    {"speaker", q.label},
                    {"first_rank", q.first_rank},
                    {"rank", q.rank},
                    {"ap", q.average_precision}});
    cj["queries"] = std::move(qs);
    conds[c.name()] = std::move(cj);
  }
  j["conditions"] = std::move(conds);
  j["config"] = report.config;
  return j;
}

std::string format_table(const RetrievalReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s | %-17s | %-17s | %-17s | %-17s\n", "mode", "s->t",
                "t->s", "s->t (fusion)", "t->s (fusion)");
  out << line;
  std::snprintf(line, sizeof(line), "%-10s | %-8s %-8s | %-8s %-8s | %-8s %-8s | %-8s %-8s\n", "",
                "mAP@K", "MeanR", "mAP@K", "MeanR", "mAP@K", "MeanR", "mAP@K", "MeanR");
  out << line;
  const auto& c = report.conditions;
  std::snprintf(line, sizeof(line),
                "%-10s | %8.2f %8.2f | %8.2f %8.2f | %8.2f %8.2f | %8.2f %8.2f\n",
                report.mode.c_str(), c[0].map, c[0].mean_rank, c[1].map, c[1].mean_rank,
                c[2].map, c[2].mean_rank, c[3].map, c[3].mean_rank);
  out << line;
  return out.str();
}

EerReport eer_from_scores(std::span<const double> scores, const std::vector<bool>& is_target) {
  if (scores.size() != is_target.size()) throw std::invalid_argument("EER: size mismatch");
  EerReport report;
  for (bool t : is_target) (t ? report.n_target : report.n_nontarget)++;
  if (report.n_target == 0) throw Error("EER: no target trials");
  if (report.n_nontarget == 0) throw Error("EER: no non-target trials");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double nt = static_cast<double>(report.n_target);
  const double nn = static_cast<double>(report.n_nontarget);
  double prev_far = 0.0, prev_frr = 1.0;
  double prev_threshold = std::numeric_limits<double>::infinity();
  std::size_t accepted_targets = 0, accepted_nontargets = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i)
      (is_target[order[i]] ? accepted_targets : accepted_nontargets)++;
    const double far = static_cast<double>(accepted_nontargets) / nn;
    const double frr = static_cast<double>(report.n_target - accepted_targets) / nt;
    const double gap = frr - far;
    if (gap <= 0.0) {
      const double prev_gap = prev_frr - prev_far;
      const double alpha = prev_gap / (prev_gap - gap);
      report.eer_percent = 100.0 * (prev_far + alpha * (far - prev_far));
      report.threshold = std::isinf(prev_threshold)
                             ? threshold
                             : prev_threshold + alpha * (threshold - prev_threshold);
      return report;
    }
    prev_far = far;
    prev_frr = frr;
    prev_threshold = threshold;
  }
  throw std::logic_error("EER: no crossing found");
}

EerReport text_eer(const Matrix& rows, std::span<const std::string> labels) {
  if (labels.size() != rows.rows()) throw std::invalid_argument("text_eer: label count mismatch");
  std::vector<double> scores;
  std::vector<bool> target;
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t j = i + 1; j < rows.rows(); ++j) {
      scores.push_back(cosine(rows.row(i), rows.row(j)));
      target.push_back(labels[i] == labels[j]);
    }
  return eer_from_scores(scores, target);
}

}  // namespace xmodal
