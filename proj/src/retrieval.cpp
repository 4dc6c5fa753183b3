// src/retrieval.cpp

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

#include "xmodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"
#include "xmodal/numerics.hpp"

namespace xmodal {

SearchIndex::SearchIndex(Modality modality, Matrix rows, std::vector<std::string> ids,
                         std::vector<std::string> labels)
    : modality_(modality), rows_(std::move(rows)), ids_(std::move(ids)), labels_(std::move(labels)) {
  if (ids_.size() != rows_.rows() || labels_.size() != rows_.rows())
    throw std::invalid_argument("SearchIndex: ids/labels do not match row count");
  l2_normalize_rows(rows_);
}

SearchIndex raw_index(const Matrix& rows, const Manifest& manifest, Modality modality) {
  if (rows.rows() != manifest.size())
    throw std::invalid_argument("raw_index: row count does not match manifest");
  std::vector<std::string> ids, labels;
  for (const auto& e : manifest) {
    ids.push_back(e.id);
    labels.push_back(e.speaker);
  }
  return SearchIndex(modality, rows, std::move(ids), std::move(labels));
}

SearchIndex build_index(const LinkerParams& params, const LinkerConfig& config,
                        const EmbeddingSet& set, const Manifest& manifest, Modality modality) {
  const std::size_t expected =
      modality == Modality::kSpeaker ? config.dim_speaker_in : config.dim_text_in;
  if (set.dim != expected)
    throw InputError("embedding dim " + std::to_string(set.dim) +
                     " does not match checkpoint input dim " + std::to_string(expected));
  const Matrix projected = project(params, config, modality, gather_manifest_rows(set, manifest));
  return raw_index(projected, manifest, modality);
}

void save_index(const SearchIndex& index, const std::filesystem::path& prefix) {
  write_embeddings(EmbeddingSet::from_matrix(index.rows()),
                   std::filesystem::path(prefix.string() + ".emb"));
  Manifest m;
  for (std::size_t i = 0; i < index.size(); ++i)
    m.push_back({index.id(i), i, index.label(i), index.modality(), {}});
  write_manifest(m, std::filesystem::path(prefix.string() + ".jsonl"));
}

SearchIndex load_index(const std::filesystem::path& prefix) {
  const EmbeddingSet set = read_embeddings(std::filesystem::path(prefix.string() + ".emb"));
  const Manifest m = read_manifest(std::filesystem::path(prefix.string() + ".jsonl"));
  validate_manifest(m, set.count);
  if (m.empty()) throw InputError("index manifest is empty");
  return raw_index(gather_manifest_rows(set, m), m, m.front().modality);
}

nlohmann::json to_json(const RankedList& list, const SearchIndex& index) {
  nlohmann::ordered_json j;
  j["query"] = list.query_id;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const auto& item : list.items) {
    nlohmann::ordered_json r;
    r["id"] = index.id(item.row);
    r["speaker"] = index.label(item.row);
    r["score"] = item.score;
    results.push_back(std::move(r));
  }
  j["results"] = std::move(results);
  return j;
}

RankedList nearest_k(const SearchIndex& index, std::span<const double> query, std::size_t k) {
  if (index.empty()) throw Error("nearest_k: empty index");
  if (k == 0) throw std::invalid_argument("nearest_k: k must be positive");
  if (query.size() != index.dim()) throw std::invalid_argument("nearest_k: query dimension mismatch");
  const std::vector<double> q = l2_normalize(query);
  std::vector<double> scores(index.size());
  kernels::score_rows(index.rows(), q, scores);

  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, index.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      if (index.id(a) != index.id(b)) return index.id(a) < index.id(b);
                      return a < b;
                    });
  RankedList out;
  out.items.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.items.push_back({order[i], scores[order[i]]});
  return out;
}

std::string_view to_string(FusionWeighting w) {
  return w == FusionWeighting::kUniform ? "uniform" : "similarity";
}

FusionWeighting parse_weighting(std::string_view s) {
  if (s == "uniform") return FusionWeighting::kUniform;
  if (s == "similarity") return FusionWeighting::kSimilarity;
  throw InputError("unknown fusion weighting '" + std::string(s) + "'");
}

std::vector<double> fuse(const SearchIndex& index, std::span<const double> query, std::size_t n,
                         FusionWeighting weighting) {
  const RankedList top = nearest_k(index, query, n);
  std::vector<double> weights(top.items.size(), 1.0);
  if (weighting == FusionWeighting::kSimilarity) {
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] = std::max(top.items[i].score, 0.0);
      total += weights[i];
    }
    if (total > 0.0)
      for (double& w : weights) w /= total;
    else
      std::fill(weights.begin(), weights.end(), 1.0);
  }
  if (weighting == FusionWeighting::kUniform)
    for (double& w : weights) w = 1.0 / static_cast<double>(weights.size());

  std::vector<double> fused(index.dim(), 0.0);
  for (std::size_t i = 0; i < top.items.size(); ++i) {
    const auto row = index.row(top.items[i].row);
    for (std::size_t c = 0; c < fused.size(); ++c) fused[c] += weights[i] * row[c];
  }
  l2_normalize_in_place(fused);
  return fused;
}

std::string_view to_string(Direction d) { return d == Direction::kSpeakerToText ? "s2t" : "t2s"; }

Direction parse_direction(std::string_view s) {
  if (s == "s2t") return Direction::kSpeakerToText;
  if (s == "t2s") return Direction::kTextToSpeaker;
  throw InputError("unknown direction '" + std::string(s) + "'");
}

std::string_view to_string(RetrievalMode m) { return m == RetrievalMode::kPlain ? "plain" : "fused"; }

RetrievalMode parse_retrieval_mode(std::string_view s) {
  if (s == "plain") return RetrievalMode::kPlain;
  if (s == "fused") return RetrievalMode::kFused;
  throw InputError("unknown retrieval mode '" + std::string(s) + "'");
}

RankedList retrieve(Direction direction, std::span<const double> query,
                    const SearchIndex& speaker_index, const SearchIndex& text_index,
                    RetrievalMode mode, const RetrievalOptions& options) {
  const SearchIndex& target =
      direction == Direction::kSpeakerToText ? text_index : speaker_index;
  if (mode == RetrievalMode::kPlain) return nearest_k(target, query, options.k);
  const std::vector<double> fused = fuse(target, query, options.fuse_n, options.weighting);
  return nearest_k(target, fused, options.k);
}

namespace {

struct ClassStats {
  std::vector<std::size_t> compact;  // class index per row
  std::vector<std::size_t> counts;
  Matrix means;  // classes x d
  std::vector<double> global_mean;
};

ClassStats class_stats(const Matrix& rows, std::span<const std::size_t> labels) {
  if (labels.size() != rows.rows()) throw std::invalid_argument("LDA: label count mismatch");
  std::map<std::size_t, std::size_t> remap;
  for (std::size_t l : labels) remap.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, idx] : remap) idx = next++;

  ClassStats s;
  const std::size_t d = rows.cols();
  s.counts.assign(remap.size(), 0);
  s.means = Matrix(remap.size(), d);
  s.global_mean.assign(d, 0.0);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const std::size_t c = remap[labels[r]];
    s.compact.push_back(c);
    ++s.counts[c];
    for (std::size_t j = 0; j < d; ++j) {
      s.means(c, j) += rows(r, j);
      s.global_mean[j] += rows(r, j);
    }
  }
  for (std::size_t c = 0; c < s.counts.size(); ++c)
    for (std::size_t j = 0; j < d; ++j) s.means(c, j) /= static_cast<double>(s.counts[c]);
  for (double& m : s.global_mean) m /= static_cast<double>(rows.rows());
  return s;
}

Matrix within_scatter(const Matrix& rows, const ClassStats& s) {
  Matrix centered = rows;
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t j = 0; j < rows.cols(); ++j) centered(r, j) -= s.means(s.compact[r], j);
  Matrix sw;
  kernels::gemm_tn(centered, centered, sw);
  for (double& v : sw.values()) v /= static_cast<double>(rows.rows());
  return sw;
}

// d x classes with columns sqrt(n_c / n) (mu_c - mu), so Sb = delta delta^T.
Matrix between_factor(const ClassStats& s, std::size_t n) {
  const std::size_t d = s.global_mean.size(), classes = s.counts.size();
  Matrix delta(d, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double w = std::sqrt(static_cast<double>(s.counts[c]) / static_cast<double>(n));
    for (std::size_t j = 0; j < d; ++j) delta(j, c) = w * (s.means(c, j) - s.global_mean[j]);
  }
  return delta;
}

}  // namespace

LdaProjection lda_fit(const Matrix& rows, std::span<const std::size_t> labels,
                      std::size_t target_dim, double shrinkage) {
  if (!(shrinkage >= 0.0 && shrinkage < 1.0)) throw InputError("LDA shrinkage must lie in [0, 1)");
  if (target_dim == 0) throw InputError("LDA target_dim must be positive");
  const ClassStats stats = class_stats(rows, labels);
  const std::size_t classes = stats.counts.size(), d = rows.cols();
  if (classes < 2) throw InputError("LDA needs at least 2 classes");

  Matrix sw = within_scatter(rows, stats);
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) trace += sw(j, j);
  if (trace <= 0.0 && shrinkage > 0.0) {
    // Singleton classes have no within-class spread; scale the ridge by the
    // total scatter instead.
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += rows(i, j);
    for (double& m : mean) m /= static_cast<double>(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) trace += (rows(i, j) - mean[j]) * (rows(i, j) - mean[j]);
  }
  for (double& v : sw.values()) v *= (1.0 - shrinkage);
  for (std::size_t j = 0; j < d; ++j) sw(j, j) += shrinkage * trace / static_cast<double>(d);

  Matrix lower;
  try {
    lower = cholesky(sw);
  } catch (const NotPositiveDefiniteError& e) {
    throw Error(std::string("LDA: singular within-class scatter (") + e.what() + ")");
  }

  // Whitened between-class factor B = L^-1 delta; the nonzero spectrum of
  // B B^T equals that of the classes x classes Gram matrix B^T B.
  const Matrix b = solve_lower(lower, between_factor(stats, rows.rows()));
  Matrix gram;
  kernels::gemm_tn(b, b, gram);
  const SymEig eig = sym_eig(gram);

  std::size_t rank = std::min({target_dim, classes - 1, d});
  const double floor = 1e-12 * std::max(eig.values.front(), 0.0);
  while (rank > 0 && !(eig.values[rank - 1] > floor)) --rank;
  if (rank == 0) throw Error("LDA: between-class scatter is zero");

  Matrix whitened(d, rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const double inv = 1.0 / std::sqrt(eig.values[k]);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < classes; ++c) acc += b(j, c) * eig.vectors(c, k);
      whitened(j, k) = acc * inv;
    }
  }
  LdaProjection out;
  out.projection = solve_lower_transposed(lower, whitened);
  for (std::size_t k = 0; k < rank; ++k) {
    std::size_t lead = 0;
    for (std::size_t j = 0; j < d; ++j)
      if (std::abs(out.projection(j, k)) > std::abs(out.projection(lead, k))) lead = j;
    if (out.projection(lead, k) < 0.0)
      for (std::size_t j = 0; j < d; ++j) out.projection(j, k) = -out.projection(j, k);
  }
  out.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(rank));
  out.n_classes = classes;
  out.shrinkage = shrinkage;
  return out;
}

Matrix lda_apply(const LdaProjection& lda, const Matrix& rows) {
  if (rows.cols() != lda.projection.rows())
    throw InputError("LDA input dim does not match the fitted projection");
  Matrix out = matmul(rows, lda.projection);
  l2_normalize_rows(out);
  return out;
}

double fisher_ratio(const Matrix& rows, std::span<const std::size_t> labels,
                    std::span<const double> direction) {
  const ClassStats stats = class_stats(rows, labels);
  if (direction.size() != rows.cols()) throw std::invalid_argument("fisher_ratio: dim mismatch");
  const Matrix sw = within_scatter(rows, stats);
  const Matrix delta = between_factor(stats, rows.rows());
  double between = 0.0;
  for (std::size_t c = 0; c < delta.cols(); ++c) {
    double proj = 0.0;
    for (std::size_t j = 0; j < delta.rows(); ++j) proj += delta(j, c) * direction[j];
    between += proj * proj;
  }
  double within = 0.0;
  for (std::size_t i = 0; i < sw.rows(); ++i)
    for (std::size_t j = 0; j < sw.cols(); ++j) within += direction[i] * sw(i, j) * direction[j];
  return between / within;
}

}  // namespace xmodal
