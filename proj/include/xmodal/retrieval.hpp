// include/xmodal/retrieval.hpp

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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/embedding_io.hpp"
#include "xmodal/linker_model.hpp"
#include "xmodal/matrix.hpp"

namespace xmodal {

// Immutable search space of unit-norm embeddings for one modality.
class SearchIndex {
 public:
  SearchIndex() = default;
  // Rows are length-normalized on construction.
  SearchIndex(Modality modality, Matrix rows, std::vector<std::string> ids,
              std::vector<std::string> labels);

  Modality modality() const { return modality_; }
  std::size_t size() const { return rows_.rows(); }
  std::size_t dim() const { return rows_.cols(); }
  bool empty() const { return size() == 0; }
  const Matrix& rows() const { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const SearchIndex&) const = default;

 private:
  Modality modality_ = Modality::kSpeaker;
  Matrix rows_;
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
};

// Index over the projection-layer outputs of every manifest entry.
SearchIndex build_index(const LinkerParams& params, const LinkerConfig& config,
                        const EmbeddingSet& set, const Manifest& manifest, Modality modality);

// Index over raw (or externally aligned) rows, one per manifest entry.
SearchIndex raw_index(const Matrix& rows, const Manifest& manifest, Modality modality);

// `prefix`.emb holds the rows as EMB1; `prefix`.jsonl the matching manifest.
void save_index(const SearchIndex& index, const std::filesystem::path& prefix);
SearchIndex load_index(const std::filesystem::path& prefix);

struct RankedItem {
  std::size_t row = 0;
  double score = 0.0;
};

// Candidates in descending score; ties broken by ascending candidate id.
struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;
};

nlohmann::json to_json(const RankedList& list, const SearchIndex& index);

// Exact top-k by cosine. The query is normalized internally.
RankedList nearest_k(const SearchIndex& index, std::span<const double> query, std::size_t k);

enum class FusionWeighting { kUniform, kSimilarity };

std::string_view to_string(FusionWeighting w);
FusionWeighting parse_weighting(std::string_view s);

// Normalized average of the top-n rows of `index` nearest to `query`. n is
// clamped to the index size. Similarity weighting uses max(score, 0) as
// convex weights and falls back to uniform when all are non-positive.
std::vector<double> fuse(const SearchIndex& index, std::span<const double> query, std::size_t n,
                         FusionWeighting weighting = FusionWeighting::kUniform);

enum class Direction { kSpeakerToText, kTextToSpeaker };
enum class RetrievalMode { kPlain, kFused };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);
std::string_view to_string(RetrievalMode m);
RetrievalMode parse_retrieval_mode(std::string_view s);

struct RetrievalOptions {
  std::size_t k = 10;
  std::size_t fuse_n = 10;
  FusionWeighting weighting = FusionWeighting::kUniform;
};

// Ranks the target index (text for s2t, speaker for t2s). Fused mode first
// replaces the query by its fusion over the target index.
RankedList retrieve(Direction direction, std::span<const double> query,
                    const SearchIndex& speaker_index, const SearchIndex& text_index,
                    RetrievalMode mode, const RetrievalOptions& options);

struct LdaProjection {
  Matrix projection;  // input_dim x rank, columns by descending eigenvalue
  std::vector<double> eigenvalues;
  std::size_t n_classes = 0;
  double shrinkage = 0.0;
};

// Fisher LDA. The within-class scatter is shrunk to
// (1 - gamma) * Sw + gamma * trace(Sw) / d * I, whitened through its Cholesky
// factor, and the whitened between-class problem is solved with sym_eig.
// When every class is a single point, trace(Sw) is replaced by the total
// scatter trace so gamma > 0 still yields a usable ridge. Output rank is min(target_dim, classes - 1, input_dim).
LdaProjection lda_fit(const Matrix& rows, std::span<const std::size_t> labels,
                      std::size_t target_dim, double shrinkage = 0.1);

// rows * projection, each output row normalized.
Matrix lda_apply(const LdaProjection& lda, const Matrix& rows);

// Between / within scatter ratio of the data along `direction` (unregularized).
double fisher_ratio(const Matrix& rows, std::span<const std::size_t> labels,
                    std::span<const double> direction);

}  // namespace xmodal
