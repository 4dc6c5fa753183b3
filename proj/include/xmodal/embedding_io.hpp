// include/xmodal/embedding_io.hpp

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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/matrix.hpp"

namespace xmodal {

enum class Modality { kSpeaker, kText };

std::string_view to_string(Modality m);
// Accepts "speaker" or "text"; throws InputError otherwise.
Modality parse_modality(std::string_view s);

// count x dim float32 rows, as stored in an EMB1 file. Row identities live in
// the accompanying Manifest.
struct EmbeddingSet {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * dim, dim};
  }
  Matrix to_matrix() const;
  static EmbeddingSet from_matrix(const Matrix& m);

  bool operator==(const EmbeddingSet&) const = default;
};

// EMB1 layout (little endian): "EMB1", u16 version = 1, u32 dim, u64 count,
// then count * dim f32 row-major.
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::uint64_t row = 0;
  std::string speaker;
  Modality modality = Modality::kSpeaker;
  std::optional<std::string> text;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

// One JSON object per line: id, row, speaker, modality, optional text.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Ids unique, rows within [0, row_count).
void validate_manifest(const Manifest& manifest, std::uint64_t row_count);

// Manifest order rows gathered from `set` into a double matrix.
Matrix gather_manifest_rows(const EmbeddingSet& set, const Manifest& manifest);

struct PairingReport {
  std::map<std::string, std::size_t> utterances_per_speaker;
  std::map<std::string, std::size_t> prompts_per_speaker;
  std::set<std::string> missing_speaker_side;  // present only on the text side
  std::set<std::string> missing_text_side;     // present only on the speaker side
  std::size_t n_speakers = 0;                  // speakers present on both sides
  std::size_t n_utterances = 0;
  std::size_t n_prompts = 0;

  bool complete() const {
    return missing_speaker_side.empty() && missing_text_side.empty();
  }
};

// Throws InputError on an id shared by the two manifests or on an entry whose
// modality does not match its side.
PairingReport validate_pairing(const Manifest& speaker_manifest,
                               const Manifest& text_manifest);

// A speaker set and a text set with their manifests, stored in a directory as
// speaker.emb, speaker.jsonl, text.emb, text.jsonl.
struct Dataset {
  EmbeddingSet speaker;
  Manifest speaker_manifest;
  EmbeddingSet text;
  Manifest text_manifest;
};

struct DatasetPaths {
  std::filesystem::path speaker_embeddings;
  std::filesystem::path speaker_manifest;
  std::filesystem::path text_embeddings;
  std::filesystem::path text_manifest;

  explicit DatasetPaths(const std::filesystem::path& dir);
};

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
// Loads and validates both manifests against their embedding sets.
Dataset load_dataset(const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t n_speakers = 30;
  std::size_t utts_per_speaker = 5;
  std::size_t prompts_per_speaker = 1;
  std::size_t dim_speaker = 192;
  std::size_t dim_text = 768;
  std::size_t latent_dim = 16;
  double intra_speaker_noise = 0.05;
  double cross_modal_correlation = 1.0;
  std::uint64_t seed = 0;
  // Global index of the first generated speaker. Disjoint offsets with the
  // same seed give disjoint speaker populations drawn from the same world
  // (same latent-to-embedding maps), e.g. a train and an evaluation split.
  std::size_t speaker_offset = 0;

  void validate() const;
};

struct SyntheticDataset {
  Dataset data;
  Matrix latents;      // n_speakers x latent_dim, unit rows
  Matrix speaker_map;  // latent_dim x dim_speaker
  Matrix text_map;     // latent_dim x dim_text
};

// Per speaker a unit latent z is drawn. Speaker rows are
// normalize(z * speaker_map + noise * eps); text rows are
// normalize(c * z * text_map + (1 - c) * u) with an independent Gaussian u per
// prompt. All maps and noise are standard normal and seeded, so the output is
// a pure function of the SynthSpec.
SyntheticDataset gen_synthetic(const SynthSpec& spec);

std::string synthetic_speaker_label(std::size_t global_index);

}  // namespace xmodal
