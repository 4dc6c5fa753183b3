// src/embedding_io.cpp

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

#include "xmodal/embedding_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "xmodal/error.hpp"
#include "xmodal/numerics.hpp"

namespace xmodal {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint16_t kEmbeddingVersion = 1;

}  // namespace

std::string_view to_string(Modality m) {
  return m == Modality::kSpeaker ? "speaker" : "text";
}

Modality parse_modality(std::string_view s) {
  if (s == "speaker") return Modality::kSpeaker;
  if (s == "text") return Modality::kText;
  throw InputError("unknown modality '" + std::string(s) + "'");
}

Matrix EmbeddingSet::to_matrix() const {
  Matrix m(count, dim);
  for (std::size_t i = 0; i < data.size(); ++i) m.values()[i] = data[i];
  return m;
}

EmbeddingSet EmbeddingSet::from_matrix(const Matrix& m) {
  EmbeddingSet set;
  set.dim = static_cast<std::uint32_t>(m.cols());
  set.count = m.rows();
  set.data.assign(m.values().begin(), m.values().end());
  return set;
}

void write_embeddings(const EmbeddingSet& set, const fs::path& path) {
  if (set.count == 0) throw InputError("empty set");
  if (set.dim == 0) throw InputError("embedding dim is zero");
  if (set.data.size() != set.count * set.dim)
    throw InputError("embedding payload size does not match count * dim");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  detail::put<std::uint16_t>(out, kEmbeddingVersion);
  detail::put<std::uint32_t>(out, set.dim);
  detail::put<std::uint64_t>(out, set.count);
  out.write(reinterpret_cast<const char*>(set.data.data()),
            static_cast<std::streamsize>(set.data.size() * sizeof(float)));
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingSet read_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("not an EMB1 file: " + path.string());
  const auto version = detail::get<std::uint16_t>(in, "header");
  if (version != kEmbeddingVersion)
    throw InputError("unsupported EMB1 version " + std::to_string(version));
  EmbeddingSet set;
  set.dim = detail::get<std::uint32_t>(in, "header");
  set.count = detail::get<std::uint64_t>(in, "header");
  if (set.dim == 0) throw InputError("EMB1 dim is zero");
  const std::uint64_t available = detail::remaining_bytes(in);
  const std::uint64_t row_bytes = std::uint64_t{set.dim} * sizeof(float);
  if (set.count > available / row_bytes) throw InputError("truncated payload: " + path.string());
  const std::uint64_t expected = set.count * row_bytes;
  if (available > expected) throw InputError("trailing bytes after payload: " + path.string());
  set.data.resize(set.count * set.dim);
  in.read(reinterpret_cast<char*>(set.data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw InputError("truncated payload: " + path.string());
  for (std::size_t i = 0; i < set.data.size(); ++i)
    if (!std::isfinite(set.data[i]))
      throw NonFiniteError("non-finite value in EMB1 payload", i);
  return set;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  for (const auto& e : manifest) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["row"] = e.row;
    j["speaker"] = e.speaker;
    j["modality"] = to_string(e.modality);
    if (e.text) j["text"] = *e.text;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": " + e.what());
    }
    try {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.row = j.at("row").get<std::uint64_t>();
      e.speaker = j.at("speaker").get<std::string>();
      e.modality = parse_modality(j.at("modality").get<std::string>());
      if (j.contains("text")) e.text = j["text"].get<std::string>();
      manifest.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  return manifest;
}

void validate_manifest(const Manifest& manifest, std::uint64_t row_count) {
  std::unordered_set<std::string> seen;
  for (const auto& e : manifest) {
    if (e.row >= row_count)
      throw InputError("manifest row " + std::to_string(e.row) + " out of range for id '" +
                       e.id + "'");
    if (!seen.insert(e.id).second) throw InputError("duplicate id '" + e.id + "'");
  }
}

Matrix gather_manifest_rows(const EmbeddingSet& set, const Manifest& manifest) {
  Matrix m(manifest.size(), set.dim);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].row >= set.count) throw InputError("manifest row out of range");
    const auto src = set.row(manifest[i].row);
    for (std::size_t c = 0; c < set.dim; ++c) m(i, c) = src[c];
  }
  return m;
}

PairingReport validate_pairing(const Manifest& speaker_manifest,
                               const Manifest& text_manifest) {
  PairingReport report;
  std::unordered_set<std::string> speaker_ids;
  for (const auto& e : speaker_manifest) {
    if (e.modality != Modality::kSpeaker)
      throw InputError("entry '" + e.id + "' in the speaker manifest has modality text");
    speaker_ids.insert(e.id);
    ++report.utterances_per_speaker[e.speaker];
    ++report.n_utterances;
  }
  for (const auto& e : text_manifest) {
    if (e.modality != Modality::kText)
      throw InputError("entry '" + e.id + "' in the text manifest has modality speaker");
    if (speaker_ids.count(e.id)) throw InputError("duplicate id across manifests: '" + e.id + "'");
    ++report.prompts_per_speaker[e.speaker];
    ++report.n_prompts;
  }
  for (const auto& [spk, n] : report.utterances_per_speaker) {
    if (report.prompts_per_speaker.count(spk))
      ++report.n_speakers;
    else
      report.missing_text_side.insert(spk);
  }
  for (const auto& [spk, n] : report.prompts_per_speaker)
    if (!report.utterances_per_speaker.count(spk)) report.missing_speaker_side.insert(spk);
  return report;
}

DatasetPaths::DatasetPaths(const fs::path& dir)
    : speaker_embeddings(dir / "speaker.emb"),
      speaker_manifest(dir / "speaker.jsonl"),
      text_embeddings(dir / "text.emb"),
      text_manifest(dir / "text.jsonl") {}

void save_dataset(const Dataset& data, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  const DatasetPaths p(dir);
  write_embeddings(data.speaker, p.speaker_embeddings);
  write_manifest(data.speaker_manifest, p.speaker_manifest);
  write_embeddings(data.text, p.text_embeddings);
  write_manifest(data.text_manifest, p.text_manifest);
}

Dataset load_dataset(const fs::path& dir) {
  const DatasetPaths p(dir);
  for (const auto& f : {p.speaker_embeddings, p.speaker_manifest, p.text_embeddings,
                        p.text_manifest})
    if (!fs::exists(f)) throw InputError("missing input file " + f.string());
  Dataset d;
  d.speaker = read_embeddings(p.speaker_embeddings);
  d.speaker_manifest = read_manifest(p.speaker_manifest);
  d.text = read_embeddings(p.text_embeddings);
  d.text_manifest = read_manifest(p.text_manifest);
  validate_manifest(d.speaker_manifest, d.speaker.count);
  validate_manifest(d.text_manifest, d.text.count);
  return d;
}

void SynthSpec::validate() const {
  if (n_speakers == 0 || utts_per_speaker == 0 || prompts_per_speaker == 0)
    throw InputError("synthetic spec: counts must be positive");
  if (dim_speaker == 0 || dim_text == 0 || latent_dim == 0)
    throw InputError("synthetic spec: dimensions must be positive");
  if (!(intra_speaker_noise >= 0.0) || !std::isfinite(intra_speaker_noise))
    throw InputError("synthetic spec: noise must be non-negative");
  if (!(cross_modal_correlation >= 0.0 && cross_modal_correlation <= 1.0))
    throw InputError("synthetic spec: cross_modal_correlation must lie in [0, 1]");
}

std::string synthetic_speaker_label(std::size_t global_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04zu", global_index);
  return buf;
}

namespace {

Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.normal();
  return m;
}

// Row vector z * map.
std::vector<double> apply_map(std::span<const double> z, const Matrix& map) {
  std::vector<double> out(map.cols(), 0.0);
  for (std::size_t k = 0; k < map.rows(); ++k)
    for (std::size_t c = 0; c < map.cols(); ++c) out[c] += z[k] * map(k, c);
  return out;
}

// Structured prompt slot-filled from the first latent coordinates.
std::string describe(std::span<const double> z) {
  auto slot = [&](std::size_t i, const char* low, const char* mid, const char* high) {
    const double v = i < z.size() ? z[i] : 0.0;
    return v < -0.15 ? low : (v > 0.15 ? high : mid);
  };
  std::string s = "A ";
  s += (z[0] < 0.0 ? "female" : "male");
  s += " speaker with ";
  s += slot(1, "low", "medium", "high");
  s += " pitch and a ";
  s += slot(2, "slow", "moderate", "fast");
  s += " speaking rate.";
  return s;
}

std::vector<float> to_float(std::span<const double> v) {
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace

SyntheticDataset gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  const SeededRng root(spec.seed);
  SeededRng map_rng = root.split(0);

  SyntheticDataset out;
  out.speaker_map = gaussian_matrix(map_rng, spec.latent_dim, spec.dim_speaker);
  out.text_map = gaussian_matrix(map_rng, spec.latent_dim, spec.dim_text);
  out.latents = Matrix(spec.n_speakers, spec.latent_dim);

  Dataset& d = out.data;
  d.speaker.dim = static_cast<std::uint32_t>(spec.dim_speaker);
  d.text.dim = static_cast<std::uint32_t>(spec.dim_text);
  const double c = spec.cross_modal_correlation;

  for (std::size_t k = 0; k < spec.n_speakers; ++k) {
    const std::size_t global = spec.speaker_offset + k;
    SeededRng rng = root.split(1 + global);
    auto z = out.latents.row(k);
    for (double& x : z) x = rng.normal();
    l2_normalize_in_place(z);
    const std::string label = synthetic_speaker_label(global);

    const std::vector<double> s_clean = apply_map(z, out.speaker_map);
    for (std::size_t u = 0; u < spec.utts_per_speaker; ++u) {
      std::vector<double> row = s_clean;
      for (double& x : row) x += spec.intra_speaker_noise * rng.normal();
      l2_normalize_in_place(row);
      const auto f = to_float(row);
      d.speaker.data.insert(d.speaker.data.end(), f.begin(), f.end());
      char id[64];
      std::snprintf(id, sizeof(id), "%s-utt%02zu", label.c_str(), u);
      d.speaker_manifest.push_back({id, d.speaker.count++, label, Modality::kSpeaker, {}});
    }

    const std::vector<double> t_clean = apply_map(z, out.text_map);
    const std::string prompt = describe(z);
    for (std::size_t p = 0; p < spec.prompts_per_speaker; ++p) {
      std::vector<double> row(spec.dim_text);
      for (std::size_t i = 0; i < row.size(); ++i)
        row[i] = c * t_clean[i] + (1.0 - c) * rng.normal();
      l2_normalize_in_place(row);
      const auto f = to_float(row);
      d.text.data.insert(d.text.data.end(), f.begin(), f.end());
      char id[64];
      std::snprintf(id, sizeof(id), "%s-prompt%02zu", label.c_str(), p);
      d.text_manifest.push_back({id, d.text.count++, label, Modality::kText, prompt});
    }
  }
  return out;
}

}  // namespace xmodal
