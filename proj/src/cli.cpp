// src/cli.cpp

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

#include "xmodal/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "xmodal/embedding_io.hpp"
#include "xmodal/error.hpp"
#include "xmodal/numerics.hpp"
#include "xmodal/retrieval.hpp"

namespace fs = std::filesystem;

namespace xmodal::cli {

namespace {

using ojson = nlohmann::ordered_json;

void require_dir(const std::string& path, const std::string& what) {
  if (!fs::is_directory(path)) throw InputError("missing input directory for " + what + ": " + path);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw InputError("missing input file for " + what + ": " + path);
}

void prepare_out_dir(const std::string& path) {
  if (fs::exists(path) && !fs::is_directory(path))
    throw InputError("output path exists and is not a directory: " + path);
  fs::create_directories(path);
}

void require_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw InputError("output directory does not exist: " + parent.string());
}

template <class T>
const T& required(const std::optional<T>& v, const std::string& flag) {
  if (!v) throw InputError("missing required option " + flag);
  return *v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

ojson to_ojson(const nlohmann::json& j) { return ojson::parse(j.dump()); }

ojson synth_json(const SynthSpec& s) {
  ojson j;
  j["speakers"] = s.n_speakers;
  j["utts_per_speaker"] = s.utts_per_speaker;
  j["prompts_per_speaker"] = s.prompts_per_speaker;
  j["dim_speaker"] = s.dim_speaker;
  j["dim_text"] = s.dim_text;
  j["latent_dim"] = s.latent_dim;
  j["noise"] = s.intra_speaker_noise;
  j["correlation"] = s.cross_modal_correlation;
  j["seed"] = s.seed;
  j["speaker_offset"] = s.speaker_offset;
  return j;
}

ojson run_json(const RunConfig& rc) {
  ojson j;
  if (rc.data) j["data"] = *rc.data;
  if (rc.eval) j["eval"] = *rc.eval;
  if (rc.out) j["out"] = *rc.out;
  if (rc.ckpt) j["ckpt"] = *rc.ckpt;
  return j;
}

// Speaker labels of a manifest as class indices over the sorted label set.
std::vector<std::size_t> class_indices(const Manifest& manifest) {
  std::map<std::string, std::size_t> classes;
  for (const auto& e : manifest) classes.emplace(e.speaker, 0);
  std::size_t next = 0;
  for (auto& [label, index] : classes) index = next++;
  std::vector<std::size_t> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) out.push_back(classes.at(e.speaker));
  return out;
}

std::optional<EerReport> try_text_eer(const Dataset& data) {
  std::map<std::string, std::size_t> per_speaker;
  for (const auto& e : data.text_manifest) ++per_speaker[e.speaker];
  const bool has_target = std::any_of(per_speaker.begin(), per_speaker.end(),
                                      [](const auto& p) { return p.second >= 2; });
  if (!has_target || per_speaker.size() < 2) return std::nullopt;
  std::vector<std::string> labels;
  for (const auto& e : data.text_manifest) labels.push_back(e.speaker);
  return text_eer(gather_manifest_rows(data.text, data.text_manifest), labels);
}

ojson eer_json(const std::optional<EerReport>& eer) {
  if (!eer) return nullptr;
  ojson j;
  j["eer_percent"] = eer->eer_percent;
  j["threshold"] = eer->threshold;
  j["n_target"] = eer->n_target;
  j["n_nontarget"] = eer->n_nontarget;
  return j;
}

void emit_report(const RetrievalReport& report, const ojson& extra_json,
                 const std::optional<std::string>& out_path, std::ostream& out) {
  ojson j = to_json(report);
  for (const auto& [key, value] : extra_json.items()) j[key] = value;
  if (out_path) {
    write_text(*out_path, dump(j));
    out << format_table(report);
  } else {
    out << dump(j);
  }
}

// ---------------------------------------------------------------------------

struct GenArgs {
  SynthSpec spec;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int cmd_gen_synth(GenArgs& a, std::ostream& out) {
  const std::string& dir = required(a.out, "--out");
  if (a.spec.n_speakers < 2)
    throw InputError("--speakers must be at least 2: contrastive training needs two speakers");
  a.spec.seed = resolve_seed(a.seed, std::nullopt);
  a.spec.validate();
  prepare_out_dir(dir);
  const SyntheticDataset synth = gen_synthetic(a.spec);
  save_dataset(synth.data, dir);
  ojson summary;
  summary["command"] = "gen-synth";
  summary["out"] = dir;
  summary["spec"] = synth_json(a.spec);
  summary["utterances"] = synth.data.speaker_manifest.size();
  summary["prompts"] = synth.data.text_manifest.size();
  out << dump(summary);
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<std::string> config, data, out, loss, activation;
  std::optional<double> lambda, lr, temperature, aam_margin, aam_scale;
  std::optional<std::size_t> epochs, batch_size, common_dim, layers, checkpoint_every;
  std::optional<std::uint64_t> seed;
  bool fixed_temperature = false;
  bool no_shuffle = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = a.config ? load_run_config(*a.config) : RunConfig{};
  if (a.data) rc.data = a.data;
  if (a.out) rc.out = a.out;
  if (a.loss) rc.train.loss_mode = parse_loss_mode(*a.loss);
  if (a.lambda) rc.train.lambda = *a.lambda;
  if (a.lr) rc.train.learning_rate = *a.lr;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch_size) rc.train.batch_size = *a.batch_size;
  if (a.no_shuffle) rc.train.shuffle = false;
  if (a.checkpoint_every) rc.checkpoint_every = *a.checkpoint_every;
  if (a.common_dim) rc.linker["common_dim"] = *a.common_dim;
  if (a.layers) rc.linker["n_transform_layers"] = *a.layers;
  if (a.activation) rc.linker["activation"] = *a.activation;
  if (a.temperature) rc.linker["init_temperature"] = *a.temperature;
  if (a.fixed_temperature) rc.linker["learnable_temperature"] = false;
  if (a.aam_margin) rc.linker["aam_margin"] = *a.aam_margin;
  if (a.aam_scale) rc.linker["aam_scale"] = *a.aam_scale;
  rc.train.seed = resolve_seed(a.seed, rc.seed_given ? std::optional(rc.train.seed) : std::nullopt);

  const std::string& data_dir = required(rc.data, "--data");
  const std::string& out_dir = required(rc.out, "--out");
  require_dir(data_dir, "--data");
  rc.train.validate();
  const Dataset dataset = load_dataset(data_dir);
  const TrainingData td = make_training_data(dataset);
  if (td.class_names.size() < 2) throw InputError("fewer than 2 speakers available");

  LinkerConfig linker;
  linker.dim_speaker_in = td.speaker.cols();
  linker.dim_text_in = td.text.cols();
  if (rc.train.loss_mode == Objective::kCtsSpk) linker.n_speakers_train = td.class_names.size();
  from_json(rc.linker, linker);
  if (linker.dim_speaker_in != td.speaker.cols() || linker.dim_text_in != td.text.cols())
    throw InputError("configured input dims do not match the dataset");
  linker.validate();
  prepare_out_dir(out_dir);

  ojson effective = run_json(rc);
  effective["command"] = "train";
  effective["linker"] = to_ojson(linker);
  effective["train"] = to_ojson(rc.train);
  effective["checkpoint_every"] = rc.checkpoint_every;
  write_text(fs::path(out_dir) / "config.json", dump(effective));

  std::ofstream log_file(fs::path(out_dir) / "loss_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log_file) throw Error("cannot open loss log in " + out_dir);
  const auto on_epoch = [&](const EpochLog& log, const LinkerParams& params) {
    log_file << to_json(log).dump() << "\n";
    log_file.flush();
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %zu loss %.6f tau %.5f batches %zu\n", log.epoch,
                  log.mean_loss, log.temperature, log.batches);
    out << line;
    if (rc.checkpoint_every > 0 && log.epoch % rc.checkpoint_every == 0) {
      Checkpoint ck{linker, params, {{"epoch", log.epoch}, {"run", effective}}};
      save_checkpoint(ck, fs::path(out_dir) / ("ckpt_epoch_" + std::to_string(log.epoch) + ".ckpt"));
    }
  };
  TrainResult result = train(linker, rc.train, td, on_epoch);
  Checkpoint final_ckpt{linker, std::move(result.params),
                        {{"epoch", rc.train.epochs}, {"run", effective}, {"classes", td.class_names}}};
  save_checkpoint(final_ckpt, fs::path(out_dir) / "ckpt_final.ckpt");
  out << "wrote " << (fs::path(out_dir) / "ckpt_final.ckpt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GradCheckArgs {
  std::optional<std::uint64_t> seed;
  double tolerance = 1e-4;
  double lambda = 0.1;
};

int cmd_grad_check(const GradCheckArgs& a, std::ostream& out) {
  const GradCheckReport report =
      grad_check(grad_check_config(), resolve_seed(a.seed, std::nullopt), a.tolerance, a.lambda);
  for (const auto& e : report.entries) {
    char line[200];
    std::snprintf(line, sizeof(line), "%s %-10s rel_err=%.3e worst=%s\n", e.passed ? "PASS" : "FAIL",
                  std::string(to_string(e.objective)).c_str(), e.relative_error,
                  e.worst_tensor.c_str());
    out << line;
  }
  return report.all_passed() ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct IndexArgs {
  std::optional<std::string> ckpt, data, out;
};

int cmd_build_index(const IndexArgs& a, std::ostream& out) {
  const std::string& ckpt_path = required(a.ckpt, "--ckpt");
  const std::string& data_dir = required(a.data, "--data");
  const std::string& out_dir = required(a.out, "--out");
  require_file(ckpt_path, "--ckpt");
  require_dir(data_dir, "--data");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset data = load_dataset(data_dir);
  prepare_out_dir(out_dir);
  const SearchIndex speaker =
      build_index(ckpt.params, ckpt.config, data.speaker, data.speaker_manifest, Modality::kSpeaker);
  const SearchIndex text =
      build_index(ckpt.params, ckpt.config, data.text, data.text_manifest, Modality::kText);
  save_index(speaker, fs::path(out_dir) / "speaker");
  save_index(text, fs::path(out_dir) / "text");
  ojson meta;
  meta["command"] = "build-index";
  meta["ckpt"] = ckpt_path;
  meta["data"] = data_dir;
  meta["checkpoint_config"] = to_ojson(ckpt.config);
  meta["speaker_rows"] = speaker.size();
  meta["text_rows"] = text.size();
  meta["dim"] = speaker.dim();
  write_text(fs::path(out_dir) / "index.json", dump(meta));
  out << "indexed " << speaker.size() << " speaker rows and " << text.size() << " text rows into "
      << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RetrieveArgs {
  std::optional<std::string> index, query, out;
  std::string direction = "s2t";
  std::string mode = "plain";
  std::string weighting = "uniform";
  std::size_t k = 10;
  std::size_t fuse_n = 10;
};

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  const std::string& dir = required(a.index, "--index");
  const std::string& query_id = required(a.query, "--query");
  require_dir(dir, "--index");
  if (a.out) require_parent(*a.out);
  const Direction direction = parse_direction(a.direction);
  RetrievalOptions options;
  options.k = a.k;
  options.fuse_n = a.fuse_n;
  options.weighting = parse_weighting(a.weighting);
  const RetrievalMode mode = parse_retrieval_mode(a.mode);
  if (a.k == 0 || a.fuse_n == 0) throw InputError("--k and --fuse-n must be positive");

  const SearchIndex speaker = load_index(fs::path(dir) / "speaker");
  const SearchIndex text = load_index(fs::path(dir) / "text");
  const SearchIndex& source = direction == Direction::kSpeakerToText ? speaker : text;
  const SearchIndex& target = direction == Direction::kSpeakerToText ? text : speaker;
  std::optional<std::size_t> row;
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source.id(i) == query_id) row = i;
  if (!row) throw InputError("query id '" + query_id + "' not found in the " +
                             std::string(to_string(source.modality())) + " index");

  RankedList list = retrieve(direction, source.row(*row), speaker, text, mode, options);
  list.query_id = query_id;
  ojson j;
  j["command"] = "retrieve";
  j["index"] = dir;
  j["direction"] = to_string(direction);
  j["mode"] = to_string(mode);
  j["k"] = a.k;
  j["fuse_n"] = a.fuse_n;
  j["weighting"] = to_string(options.weighting);
  j["query_speaker"] = source.label(*row);
  const ojson ranked = to_ojson(to_json(list, target));
  j["results"] = ranked["results"];
  if (a.out)
    write_text(*a.out, dump(j));
  else
    out << dump(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::optional<std::string> config, ckpt, eval, train, out, weighting, mean_rank;
  std::optional<std::size_t> k, fuse_n, lda_dim;
  std::optional<double> shrinkage;
};

RunConfig eval_run_config(const EvalArgs& a) {
  RunConfig rc = a.config ? load_run_config(*a.config) : RunConfig{};
  if (a.ckpt) rc.ckpt = a.ckpt;
  if (a.eval) rc.eval = a.eval;
  if (a.train) rc.data = a.train;
  if (a.out) rc.out = a.out;
  if (a.k) rc.evaluation.k = *a.k;
  if (a.fuse_n) rc.evaluation.fuse_n = *a.fuse_n;
  if (a.weighting) rc.evaluation.weighting = parse_weighting(*a.weighting);
  if (a.mean_rank) rc.evaluation.mean_rank_variant = parse_mean_rank_variant(*a.mean_rank);
  if (a.lda_dim) rc.lda_dim = *a.lda_dim;
  if (a.shrinkage) rc.lda_shrinkage = *a.shrinkage;
  if (rc.evaluation.k == 0 || rc.evaluation.fuse_n == 0)
    throw InputError("--k and --fuse-n must be positive");
  if (rc.out) require_parent(*rc.out);
  return rc;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  const RunConfig rc = eval_run_config(a);
  const std::string& ckpt_path = required(rc.ckpt, "--ckpt");
  const std::string& eval_dir = required(rc.eval, "--eval");
  require_file(ckpt_path, "--ckpt");
  require_dir(eval_dir, "--eval");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset eval = load_dataset(eval_dir);

  RetrievalReport report = evaluate(ckpt.params, ckpt.config, eval, rc.evaluation);
  report.mode = "linked";
  ojson config = run_json(rc);
  config["command"] = "evaluate";
  config["evaluation"] = to_json(rc.evaluation);
  config["checkpoint"] = {{"config", to_ojson(ckpt.config)}, {"metadata", to_ojson(ckpt.metadata)}};
  report.config = config;
  emit_report(report, {{"text_eer", eer_json(try_text_eer(eval))}}, rc.out, out);
  return 0;
}

int cmd_baseline_unlinked(const EvalArgs& a, std::ostream& out) {
  const RunConfig rc = eval_run_config(a);
  const std::string& eval_dir = required(rc.eval, "--eval");
  require_dir(eval_dir, "--eval");
  if (rc.data) require_dir(*rc.data, "--train");
  const Dataset eval = load_dataset(eval_dir);
  const PairingReport pairing = validate_pairing(eval.speaker_manifest, eval.text_manifest);
  if (!pairing.complete()) throw InputError("evaluation set pairing is incomplete");
  const Dataset fit = rc.data ? load_dataset(*rc.data) : eval;

  const Matrix fit_speaker = gather_manifest_rows(fit.speaker, fit.speaker_manifest);
  const Matrix fit_text = gather_manifest_rows(fit.text, fit.text_manifest);
  if (fit_speaker.cols() != eval.speaker.dim || fit_text.cols() != eval.text.dim)
    throw InputError("LDA fit data and evaluation data differ in embedding dims");
  const std::vector<std::size_t> speaker_classes = class_indices(fit.speaker_manifest);
  const std::vector<std::size_t> text_classes = class_indices(fit.text_manifest);
  const std::size_t n_classes =
      std::min(speaker_classes.empty() ? 0 : *std::max_element(speaker_classes.begin(), speaker_classes.end()) + 1,
               text_classes.empty() ? 0 : *std::max_element(text_classes.begin(), text_classes.end()) + 1);
  if (n_classes < 2) throw InputError("LDA needs at least 2 speakers");
  std::size_t rank = std::min({n_classes - 1, fit_speaker.cols(), fit_text.cols()});
  if (rc.lda_dim > 0) rank = std::min(rank, rc.lda_dim);

  LdaProjection speaker_lda = lda_fit(fit_speaker, speaker_classes, rank, rc.lda_shrinkage);
  LdaProjection text_lda = lda_fit(fit_text, text_classes, rank, rc.lda_shrinkage);
  rank = std::min(speaker_lda.projection.cols(), text_lda.projection.cols());
  for (LdaProjection* lda : {&speaker_lda, &text_lda}) {
    Matrix trimmed(lda->projection.rows(), rank);
    for (std::size_t i = 0; i < trimmed.rows(); ++i)
      for (std::size_t j = 0; j < rank; ++j) trimmed(i, j) = lda->projection(i, j);
    lda->projection = std::move(trimmed);
    lda->eigenvalues.resize(rank);
  }

  const SearchIndex speaker = raw_index(
      lda_apply(speaker_lda, gather_manifest_rows(eval.speaker, eval.speaker_manifest)),
      eval.speaker_manifest, Modality::kSpeaker);
  const SearchIndex text =
      raw_index(lda_apply(text_lda, gather_manifest_rows(eval.text, eval.text_manifest)),
                eval.text_manifest, Modality::kText);
  RetrievalReport report = evaluate_indexes(speaker, text, rc.evaluation);
  report.mode = "unlinked";
  ojson config = run_json(rc);
  config["command"] = "baseline-unlinked";
  config["evaluation"] = to_json(rc.evaluation);
  config["lda"] = {{"dim", rank},
                   {"shrinkage", rc.lda_shrinkage},
                   {"fit_on", rc.data ? "train" : "eval"}};
  report.config = config;
  emit_report(report, {{"text_eer", eer_json(try_text_eer(eval))}}, rc.out, out);
  return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::optional<std::string> data, ckpt, out;
  std::string weighting = "uniform";
  std::size_t fuse_n = 10;
  bool fused = false;
};

int cmd_export_2d(const ExportArgs& a, std::ostream& out) {
  const std::string& data_dir = required(a.data, "--data");
  const std::string& out_path = required(a.out, "--out");
  require_dir(data_dir, "--data");
  if (a.ckpt) require_file(*a.ckpt, "--ckpt");
  require_parent(out_path);
  if (a.fuse_n == 0) throw InputError("--fuse-n must be positive");
  const FusionWeighting weighting = parse_weighting(a.weighting);
  const Dataset data = load_dataset(data_dir);

  SearchIndex speaker, text;
  std::string kind = "raw";
  if (a.ckpt) {
    const Checkpoint ckpt = load_checkpoint(*a.ckpt);
    speaker = build_index(ckpt.params, ckpt.config, data.speaker, data.speaker_manifest,
                          Modality::kSpeaker);
    text = build_index(ckpt.params, ckpt.config, data.text, data.text_manifest, Modality::kText);
    kind = "projected";
  } else {
    if (data.speaker.dim != data.text.dim)
      throw InputError("raw speaker and text dims differ; pass --ckpt to project them first");
    if (a.fused) throw InputError("--fused needs --ckpt");
    speaker = raw_index(gather_manifest_rows(data.speaker, data.speaker_manifest),
                        data.speaker_manifest, Modality::kSpeaker);
    text = raw_index(gather_manifest_rows(data.text, data.text_manifest), data.text_manifest,
                     Modality::kText);
  }

  struct Row {
    std::string id, speaker, modality, kind;
  };
  std::vector<Row> meta;
  std::vector<std::vector<double>> vectors;
  for (const SearchIndex* index : {&speaker, &text})
    for (std::size_t i = 0; i < index->size(); ++i) {
      meta.push_back({index->id(i), index->label(i), std::string(to_string(index->modality())), kind});
      vectors.emplace_back(index->row(i).begin(), index->row(i).end());
    }
  if (a.fused) {
    // Each row fused into the other modality's space.
    for (std::size_t i = 0; i < speaker.size(); ++i) {
      meta.push_back({speaker.id(i), speaker.label(i), "speaker", "fused"});
      vectors.push_back(fuse(text, speaker.row(i), a.fuse_n, weighting));
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
      meta.push_back({text.id(i), text.label(i), "text", "fused"});
      vectors.push_back(fuse(speaker, text.row(i), a.fuse_n, weighting));
    }
  }
  if (vectors.size() < 2) throw InputError("need at least 2 rows for a 2-D projection");

  Matrix all(vectors.size(), vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i)
    std::copy(vectors[i].begin(), vectors[i].end(), all.row(i).begin());
  const Matrix xy = pca_project(all, 2);

  std::ostringstream csv;
  csv << "id,speaker,modality,kind,x,y\n";
  char num[64];
  for (std::size_t i = 0; i < meta.size(); ++i) {
    csv << meta[i].id << ',' << meta[i].speaker << ',' << meta[i].modality << ',' << meta[i].kind;
    std::snprintf(num, sizeof(num), ",%.9g,%.9g\n", xy(i, 0), xy.cols() > 1 ? xy(i, 1) : 0.0);
    csv << num;
  }
  write_text(out_path, csv.str());
  ojson sidecar;
  sidecar["command"] = "export-2d";
  sidecar["data"] = data_dir;
  if (a.ckpt) sidecar["ckpt"] = *a.ckpt;
  sidecar["fused"] = a.fused;
  sidecar["fuse_n"] = a.fuse_n;
  sidecar["weighting"] = to_string(weighting);
  sidecar["rows"] = meta.size();
  write_text(out_path + ".json", dump(sidecar));
  out << "wrote " << meta.size() << " rows to " << out_path << "\n";
  return 0;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, value] : j.items()) {
    if (key == "data") rc.data = value.get<std::string>();
    else if (key == "eval") rc.eval = value.get<std::string>();
    else if (key == "out") rc.out = value.get<std::string>();
    else if (key == "ckpt") rc.ckpt = value.get<std::string>();
    else if (key == "linker") {
      LinkerConfig probe;
      from_json(value, probe);  // rejects unknown keys early
      rc.linker = value;
    } else if (key == "train") {
      from_json(value, rc.train);
      rc.seed_given = value.contains("seed");
    } else if (key == "evaluation") from_json(value, rc.evaluation);
    else if (key == "checkpoint_every") rc.checkpoint_every = value.get<std::size_t>();
    else if (key == "lda") {
      for (const auto& [k, v] : value.items()) {
        if (k == "dim") rc.lda_dim = v.get<std::size_t>();
        else if (k == "shrinkage") rc.lda_shrinkage = v.get<double>();
        else throw InputError("unknown lda config key '" + k + "'");
      }
    } else throw InputError("unknown config key '" + key + "'");
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  require_file(path, "--config");
  std::ifstream f(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config) {
  if (flag) return *flag;
  if (config) return *config;
  if (const char* env = std::getenv("XMODAL_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used, 10);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw InputError(std::string("XMODAL_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speaker-text contrastive linking and cross-modal retrieval", "xmodal"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write a synthetic paired dataset");
  gen_cmd->add_option("--speakers", gen.spec.n_speakers, "Number of speakers")->capture_default_str();
  gen_cmd->add_option("--utts", gen.spec.utts_per_speaker, "Utterances per speaker")->capture_default_str();
  gen_cmd->add_option("--prompts", gen.spec.prompts_per_speaker, "Prompts per speaker")->capture_default_str();
  gen_cmd->add_option("--dim-speaker", gen.spec.dim_speaker)->capture_default_str();
  gen_cmd->add_option("--dim-text", gen.spec.dim_text)->capture_default_str();
  gen_cmd->add_option("--latent-dim", gen.spec.latent_dim)->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.intra_speaker_noise)->capture_default_str();
  gen_cmd->add_option("--correlation", gen.spec.cross_modal_correlation)->capture_default_str();
  gen_cmd->add_option("--speaker-offset", gen.spec.speaker_offset)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "Output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the linking heads");
  train_cmd->add_option("--config", tr.config, "JSON run config");
  train_cmd->add_option("--data", tr.data, "Training dataset directory");
  train_cmd->add_option("--out", tr.out, "Run output directory");
  train_cmd->add_option("--loss", tr.loss, "cts, cts_spk or cts_supcon");
  train_cmd->add_option("--lambda", tr.lambda, "AAM weight for cts_spk");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--common-dim", tr.common_dim);
  train_cmd->add_option("--layers", tr.layers);
  train_cmd->add_option("--activation", tr.activation, "relu or gelu");
  train_cmd->add_option("--temperature", tr.temperature, "Initial temperature");
  train_cmd->add_flag("--fixed-temperature", tr.fixed_temperature);
  train_cmd->add_option("--aam-margin", tr.aam_margin);
  train_cmd->add_option("--aam-scale", tr.aam_scale);
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Also save every N epochs");
  train_cmd->add_flag("--no-shuffle", tr.no_shuffle);

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Analytic vs finite-difference gradients");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gc_cmd->add_option("--lambda", gc.lambda)->capture_default_str();

  IndexArgs ix;
  auto* index_cmd = app.add_subcommand("build-index", "Project a dataset into search indexes");
  index_cmd->add_option("--ckpt", ix.ckpt);
  index_cmd->add_option("--data", ix.data);
  index_cmd->add_option("--out", ix.out, "Index directory");

  RetrieveArgs rt;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank one query against an index");
  retrieve_cmd->add_option("--index", rt.index, "Index directory");
  retrieve_cmd->add_option("--query", rt.query, "Query id");
  retrieve_cmd->add_option("--direction", rt.direction, "s2t or t2s")->capture_default_str();
  retrieve_cmd->add_option("--mode", rt.mode, "plain or fused")->capture_default_str();
  retrieve_cmd->add_option("--k", rt.k)->capture_default_str();
  retrieve_cmd->add_option("--fuse-n", rt.fuse_n)->capture_default_str();
  retrieve_cmd->add_option("--weighting", rt.weighting, "uniform or similarity")->capture_default_str();
  retrieve_cmd->add_option("--out", rt.out, "Write JSON here instead of stdout");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "mAP@K and MeanR for all four conditions");
  EvalArgs bl;
  auto* base_cmd = app.add_subcommand("baseline-unlinked", "Evaluate LDA-aligned raw embeddings");
  for (auto [cmd, args] : {std::pair{eval_cmd, &ev}, std::pair{base_cmd, &bl}}) {
    cmd->add_option("--config", args->config, "JSON run config");
    cmd->add_option("--eval", args->eval, "Evaluation dataset directory");
    cmd->add_option("--out", args->out, "Write the JSON report here and print a table");
    cmd->add_option("--k", args->k, "Cutoff for mAP@K");
    cmd->add_option("--fuse-n", args->fuse_n, "Neighbors averaged for fusion");
    cmd->add_option("--weighting", args->weighting, "uniform or similarity");
    cmd->add_option("--mean-rank", args->mean_rank, "first or all");
  }
  eval_cmd->add_option("--ckpt", ev.ckpt);
  base_cmd->add_option("--train", bl.train, "Dataset used to fit LDA (default: --eval)");
  base_cmd->add_option("--lda-dim", bl.lda_dim);
  base_cmd->add_option("--shrinkage", bl.shrinkage);

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export-2d", "PCA 2-D coordinates as CSV");
  export_cmd->add_option("--data", ex.data);
  export_cmd->add_option("--ckpt", ex.ckpt, "Project through a checkpoint first");
  export_cmd->add_option("--out", ex.out, "CSV path");
  export_cmd->add_flag("--fused", ex.fused, "Also emit fused vectors");
  export_cmd->add_option("--fuse-n", ex.fuse_n)->capture_default_str();
  export_cmd->add_option("--weighting", ex.weighting)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_synth(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (gc_cmd->parsed()) return cmd_grad_check(gc, out);
    if (index_cmd->parsed()) return cmd_build_index(ix, out);
    if (retrieve_cmd->parsed()) return cmd_retrieve(rt, out);
    if (eval_cmd->parsed()) return cmd_evaluate(ev, out);
    if (base_cmd->parsed()) return cmd_baseline_unlinked(bl, out);
    if (export_cmd->parsed()) return cmd_export_2d(ex, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: invalid config value: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace xmodal::cli
