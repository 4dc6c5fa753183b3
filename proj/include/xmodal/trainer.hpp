// include/xmodal/trainer.hpp

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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/embedding_io.hpp"
#include "xmodal/error.hpp"
#include "xmodal/linker_model.hpp"
#include "xmodal/losses.hpp"
#include "xmodal/numerics.hpp"

namespace xmodal {

// Training objectives. kCts, kCtsSpk and kCtsSupCon are the trainable
// systems; kInfoNce and kCtsPair exist so the gradient check can exercise the
// directional and pair losses on their own.
enum class Objective {
  kInfoNce,    // speaker->text InfoNCE on the projection branch
  kCtsPair,    // symmetrized pair loss on the transform branch
  kCts,        // projection pair + transform pair
  kCtsSpk,     // kCts + lambda * AAM on the speaker transform output
  kCtsSupCon,  // supervised contrastive on both branches
};

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);
// Only the three training modes are accepted: cts, cts_spk, cts_supcon.
Objective parse_loss_mode(std::string_view s);

struct TrainConfig {
  Objective loss_mode = Objective::kCts;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Partial update: only keys present are assigned; unknown keys throw InputError.
void from_json(const nlohmann::json& j, TrainConfig& c);

// Rows of the speaker and text matrices in manifest order, with per-row
// speaker class indices (classes sorted by label).
struct TrainingData {
  Matrix speaker;
  Matrix text;
  std::vector<std::size_t> speaker_class;
  std::vector<std::size_t> text_class;
  std::vector<std::string> class_names;
};

// Requires complete pairing; throws InputError otherwise.
TrainingData make_training_data(const Dataset& data);

struct PairedBatch {
  std::vector<std::size_t> speaker_rows;
  std::vector<std::size_t> text_rows;
  BatchLabels labels;
};

// One pair per speaker utterance, joined with one of that speaker's prompts
// drawn from `rng`. Pairs are shuffled (when requested) and cut into batches;
// a trailing batch smaller than 2 is dropped.
std::vector<PairedBatch> make_batches(const TrainingData& data, std::size_t batch_size,
                                      bool shuffle, SeededRng& rng);

struct ObjectiveValue {
  double loss = 0.0;
  double projection_loss = 0.0;
  double transform_loss = 0.0;
  double aam_loss = 0.0;
  LinkerParams grads;
};

// Loss and full parameter gradient for one batch.
ObjectiveValue evaluate_objective(Objective objective, const LinkerParams& params,
                                  const LinkerConfig& config, const Matrix& speaker_rows,
                                  const Matrix& text_rows, const BatchLabels& labels,
                                  double lambda);

struct AdamState {
  LinkerParams first_moment;
  LinkerParams second_moment;
  std::uint64_t step = 0;
};

struct TrainState {
  LinkerParams params;
  AdamState adam;
};

TrainState make_train_state(LinkerParams params);

// One Adam step with bias correction, then AAM rows renormalized and the
// temperature clamped to [kMinTemperature, kMaxTemperature]. Throws
// NonFiniteError naming the parameter on a non-finite gradient.
void adam_step(TrainState& state, const LinkerParams& grads, const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double projection_loss = 0.0;
  double transform_loss = 0.0;
  double aam_loss = 0.0;
  double temperature = 0.0;
  std::size_t batches = 0;
};

nlohmann::json to_json(const EpochLog& log);

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  LinkerParams params;
  std::vector<EpochLog> log;
};

// Called after each epoch with the epoch index (1-based) and current params.
using EpochCallback = std::function<void(const EpochLog&, const LinkerParams&)>;

// Throws TrainingDiverged when a batch loss is not finite; params reported
// through the callback up to that point remain the last good state.
TrainResult train(const LinkerConfig& linker, const TrainConfig& config, const TrainingData& data,
                  const EpochCallback& on_epoch = {});

struct GradCheckEntry {
  Objective objective = Objective::kCts;
  double relative_error = 0.0;
  std::string worst_tensor;
  bool passed = false;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;
  bool all_passed() const;
};

// Small model used by the gradient check: 6/5-dim inputs, common width 8,
// two transform layers, three speaker classes.
LinkerConfig grad_check_config();

// Compares analytic gradients through the full model with central finite
// differences (h = 1e-5) for every objective on a seeded 4-row batch. The
// error per objective is the largest per-tensor value of
// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||). A fixed
// temperature is skipped.
GradCheckReport grad_check(const LinkerConfig& config, std::uint64_t seed, double tolerance,
                           double lambda = 0.1);

}  // namespace xmodal
