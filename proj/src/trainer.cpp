// src/trainer.cpp

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

#include "xmodal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::kInfoNce: return "info_nce";
    case Objective::kCtsPair: return "cts_pair";
    case Objective::kCts: return "cts";
    case Objective::kCtsSpk: return "cts_spk";
    case Objective::kCtsSupCon: return "cts_supcon";
  }
  return "unknown";
}

Objective parse_objective(std::string_view s) {
  for (Objective o : {Objective::kInfoNce, Objective::kCtsPair, Objective::kCts,
                      Objective::kCtsSpk, Objective::kCtsSupCon})
    if (to_string(o) == s) return o;
  throw InputError("unknown objective '" + std::string(s) + "'");
}

Objective parse_loss_mode(std::string_view s) {
  const Objective o = parse_objective(s);
  if (o == Objective::kInfoNce || o == Objective::kCtsPair)
    throw InputError("loss mode must be one of cts, cts_spk, cts_supcon");
  return o;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw InputError("batch_size must be at least 2 for contrastive training");
  if (!(lambda >= 0.0)) throw InputError("lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InputError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw InputError("Adam epsilon must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"loss", to_string(c.loss_mode)},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_epsilon", c.adam_epsilon},
                     {"lambda", c.lambda},
                     {"seed", c.seed},
                     {"shuffle", c.shuffle}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw InputError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "loss") c.loss_mode = parse_loss_mode(value.get<std::string>());
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
    else if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "shuffle") c.shuffle = value.get<bool>();
    else throw InputError("unknown train config key '" + key + "'");
  }
}

TrainingData make_training_data(const Dataset& data) {
  const PairingReport report = validate_pairing(data.speaker_manifest, data.text_manifest);
  if (!report.complete())
    throw InputError("pairing incomplete: " + std::to_string(report.missing_text_side.size()) +
                     " speakers without prompts, " +
                     std::to_string(report.missing_speaker_side.size()) +
                     " speakers without utterances");
  TrainingData out;
  std::map<std::string, std::size_t> class_of;
  for (const auto& [label, n] : report.utterances_per_speaker) {
    class_of[label] = out.class_names.size();
    out.class_names.push_back(label);
  }
  out.speaker = gather_manifest_rows(data.speaker, data.speaker_manifest);
  out.text = gather_manifest_rows(data.text, data.text_manifest);
  for (const auto& e : data.speaker_manifest) out.speaker_class.push_back(class_of.at(e.speaker));
  for (const auto& e : data.text_manifest) out.text_class.push_back(class_of.at(e.speaker));
  return out;
}

std::vector<PairedBatch> make_batches(const TrainingData& data, std::size_t batch_size,
                                      bool shuffle, SeededRng& rng) {
  if (data.class_names.size() < 2) throw InputError("fewer than 2 speakers available");
  if (batch_size < 2) throw InputError("batch_size must be at least 2");
  std::vector<std::vector<std::size_t>> prompts(data.class_names.size());
  for (std::size_t r = 0; r < data.text_class.size(); ++r) prompts[data.text_class[r]].push_back(r);

  struct Pair {
    std::size_t speaker_row, text_row, label;
  };
  std::vector<Pair> pairs;
  pairs.reserve(data.speaker_class.size());
  for (std::size_t r = 0; r < data.speaker_class.size(); ++r) {
    const auto& options = prompts[data.speaker_class[r]];
    pairs.push_back({r, options[rng.below(options.size())], data.speaker_class[r]});
  }
  if (shuffle) rng.shuffle(std::span<Pair>(pairs));

  std::vector<PairedBatch> batches;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    if (end - start < 2) break;
    PairedBatch b;
    for (std::size_t i = start; i < end; ++i) {
      b.speaker_rows.push_back(pairs[i].speaker_row);
      b.text_rows.push_back(pairs[i].text_row);
      b.labels.push_back(pairs[i].label);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

// Gradients of S = a * b^T with respect to a and b.
void similarity_backward(const Matrix& grad_s, const Matrix& a, const Matrix& b, Matrix& grad_a,
                         Matrix& grad_b) {
  kernels::gemm_nn(grad_s, b, grad_a);
  kernels::gemm_tn(grad_s, a, grad_b);
}

void accumulate(Matrix& target, const Matrix& add, double weight) {
  if (target.empty()) target = Matrix(add.rows(), add.cols());
  for (std::size_t i = 0; i < add.size(); ++i) target.values()[i] += weight * add.values()[i];
}

}  // namespace

ObjectiveValue evaluate_objective(Objective objective, const LinkerParams& params,
                                  const LinkerConfig& config, const Matrix& speaker_rows,
                                  const Matrix& text_rows, const BatchLabels& labels,
                                  double lambda) {
  if (speaker_rows.rows() != text_rows.rows())
    throw std::invalid_argument("speaker and text batches differ in size");
  const ForwardOutput fwd = forward(params, config, speaker_rows, text_rows);
  const double tau = params.temperature();
  const Matrix s_p = similarity(fwd.x_s_p, fwd.x_t_p);
  const Matrix s_t = similarity(fwd.x_s_t, fwd.x_t_t);

  ObjectiveValue value;
  Matrix grad_sp, grad_st;
  double grad_tau = 0.0;
  OutputGrads out;
  Matrix aam_grad_weights;

  switch (objective) {
    case Objective::kInfoNce: {
      LossResult r = info_nce_directional(s_p, tau);
      value.loss = value.projection_loss = r.loss;
      grad_sp = std::move(r.grad);
      grad_tau = r.grad_temperature;
      break;
    }
    case Objective::kCtsPair: {
      LossResult r = cts_pair(s_t, tau);
      value.loss = value.transform_loss = r.loss;
      grad_st = std::move(r.grad);
      grad_tau = r.grad_temperature;
      break;
    }
    case Objective::kCts:
    case Objective::kCtsSpk:
    case Objective::kCtsSupCon: {
      TotalLoss t = objective == Objective::kCtsSupCon ? sup_cts_total(s_p, s_t, labels, tau)
                                                       : cts_total(s_p, s_t, tau);
      value.loss = t.loss;
      value.projection_loss = t.projection_loss;
      value.transform_loss = t.transform_loss;
      grad_sp = std::move(t.grad_projection);
      grad_st = std::move(t.grad_transform);
      grad_tau = t.grad_temperature;
      if (objective == Objective::kCtsSpk) {
        if (params.aam_weights.empty())
          throw InputError("cts_spk needs an AAM head (n_speakers_train > 0)");
        AamResult aam = aam_softmax(fwd.x_s_t, labels, params.aam_weights, config.aam_margin,
                                    config.aam_scale);
        value.aam_loss = aam.loss;
        value.loss = regularized_total(t.loss, aam.loss, lambda);
        accumulate(out.s_t, aam.grad_outputs, lambda);
        accumulate(aam_grad_weights, aam.grad_weights, lambda);
      }
      break;
    }
  }

  if (!grad_sp.empty()) {
    Matrix ga, gb;
    similarity_backward(grad_sp, fwd.x_s_p, fwd.x_t_p, ga, gb);
    accumulate(out.s_p, ga, 1.0);
    accumulate(out.t_p, gb, 1.0);
  }
  if (!grad_st.empty()) {
    Matrix ga, gb;
    similarity_backward(grad_st, fwd.x_s_t, fwd.x_t_t, ga, gb);
    accumulate(out.s_t, ga, 1.0);
    accumulate(out.t_t, gb, 1.0);
  }
  value.grads = backward(params, config, fwd, out);
  if (config.learnable_temperature) value.grads.log_temperature = grad_tau * tau;
  if (!aam_grad_weights.empty()) value.grads.aam_weights = std::move(aam_grad_weights);
  return value;
}

TrainState make_train_state(LinkerParams params) {
  TrainState s;
  s.adam.first_moment = zeros_like(params);
  s.adam.second_moment = zeros_like(params);
  s.params = std::move(params);
  return s;
}

void adam_step(TrainState& state, const LinkerParams& grads, const TrainConfig& config) {
  auto params = state.params.tensors();
  const auto g = grads.tensors();
  auto m = state.adam.first_moment.tensors();
  auto v = state.adam.second_moment.tensors();
  if (g.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw std::invalid_argument("adam_step: gradient layout does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (g[t].values.size() != params[t].values.size())
      throw std::invalid_argument("adam_step: shape mismatch for " + params[t].name);
    for (std::size_t i = 0; i < g[t].values.size(); ++i)
      if (!std::isfinite(g[t].values[i]))
        throw NonFiniteError("non-finite gradient for " + params[t].name, i);
  }

  const std::uint64_t step = ++state.adam.step;
  const kernels::AdamCoefficients coef{
      config.learning_rate,
      config.beta1,
      config.beta2,
      config.adam_epsilon,
      1.0 - std::pow(config.beta1, static_cast<double>(step)),
      1.0 - std::pow(config.beta2, static_cast<double>(step)),
  };
  for (std::size_t t = 0; t < params.size(); ++t)
    kernels::adam_update(params[t].values, g[t].values, m[t].values, v[t].values, coef);

  if (!state.params.aam_weights.empty()) l2_normalize_rows(state.params.aam_weights);
  state.params.log_temperature = std::clamp(state.params.log_temperature,
                                            std::log(kMinTemperature), std::log(kMaxTemperature));
  for (const auto& t : state.params.tensors())
    for (std::size_t i = 0; i < t.values.size(); ++i)
      if (!std::isfinite(t.values[i])) throw NonFiniteError("non-finite parameter " + t.name, i);
}

nlohmann::json to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["mean_loss"] = log.mean_loss;
  j["projection_loss"] = log.projection_loss;
  j["transform_loss"] = log.transform_loss;
  j["aam_loss"] = log.aam_loss;
  j["temperature"] = log.temperature;
  j["batches"] = log.batches;
  return j;
}

TrainResult train(const LinkerConfig& linker, const TrainConfig& config, const TrainingData& data,
                  const EpochCallback& on_epoch) {
  linker.validate();
  config.validate();
  if (data.speaker.cols() != linker.dim_speaker_in || data.text.cols() != linker.dim_text_in)
    throw InputError("training data dims do not match the linker config");
  if (config.loss_mode == Objective::kCtsSpk && linker.n_speakers_train != data.class_names.size())
    throw InputError("n_speakers_train must equal the number of training speakers for cts_spk");

  TrainState state = make_train_state(init_params(linker, config.seed));
  const SeededRng batch_root = SeededRng(config.seed).split(0xBA7C4);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    SeededRng rng = batch_root.split(epoch);
    const auto batches = make_batches(data, config.batch_size, config.shuffle, rng);
    EpochLog log;
    log.epoch = epoch;
    for (const auto& batch : batches) {
      const Matrix xs = gather_rows(data.speaker, batch.speaker_rows);
      const Matrix xt = gather_rows(data.text, batch.text_rows);
      ObjectiveValue value = evaluate_objective(config.loss_mode, state.params, linker, xs, xt,
                                                batch.labels, config.lambda);
      if (!std::isfinite(value.loss))
        throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch));
      adam_step(state, value.grads, config);
      log.mean_loss += value.loss;
      log.projection_loss += value.projection_loss;
      log.transform_loss += value.transform_loss;
      log.aam_loss += value.aam_loss;
      ++log.batches;
    }
    if (log.batches > 0) {
      const double n = static_cast<double>(log.batches);
      log.mean_loss /= n;
      log.projection_loss /= n;
      log.transform_loss /= n;
      log.aam_loss /= n;
    }
    log.temperature = state.params.temperature();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, state.params);
  }
  result.params = std::move(state.params);
  return result;
}

bool GradCheckReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

LinkerConfig grad_check_config() {
  LinkerConfig c;
  c.dim_speaker_in = 6;
  c.dim_text_in = 5;
  c.common_dim = 8;
  c.n_transform_layers = 2;
  c.n_speakers_train = 3;
  return c;
}

GradCheckReport grad_check(const LinkerConfig& config, std::uint64_t seed, double tolerance,
                           double lambda) {
  if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
  if (config.n_speakers_train == 0) throw InputError("grad_check needs n_speakers_train > 0");
  config.validate();
  constexpr std::size_t kBatch = 4;
  SeededRng rng = SeededRng(seed).split(0x6C7);
  Matrix xs(kBatch, config.dim_speaker_in), xt(kBatch, config.dim_text_in);
  for (double& x : xs.values()) x = rng.normal();
  for (double& x : xt.values()) x = rng.normal();
  BatchLabels labels;
  for (std::size_t i : {0, 1, 0, 2}) labels.push_back(i % config.n_speakers_train);
  const LinkerParams params = init_params(config, seed);

  GradCheckReport report;
  report.tolerance = tolerance;
  for (Objective o : {Objective::kInfoNce, Objective::kCtsPair, Objective::kCts,
                      Objective::kCtsSpk, Objective::kCtsSupCon}) {
    const LinkerParams analytic =
        evaluate_objective(o, params, config, xs, xt, labels, lambda).grads;
    LinkerParams probe = params;
    const auto f = [&](std::span<const double> theta) {
      probe.assign(theta);
      return evaluate_objective(o, probe, config, xs, xt, labels, lambda).loss;
    };
    LinkerParams numeric = params;
    numeric.assign(finite_diff_grad(f, params.flatten()));

    GradCheckEntry entry;
    entry.objective = o;
    const auto a = analytic.tensors();
    const auto n = numeric.tensors();
    for (std::size_t t = 0; t < a.size(); ++t) {
      // A fixed temperature is frozen, so its analytic gradient is zero by design.
      if (!config.learnable_temperature && a[t].name == "log_temperature") continue;
      double diff = 0.0, na = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < a[t].values.size(); ++i) {
        const double d = a[t].values[i] - n[t].values[i];
        diff += d * d;
        na += a[t].values[i] * a[t].values[i];
        nn += n[t].values[i] * n[t].values[i];
      }
      const double denom = std::sqrt(std::max(na, nn));
      const double err = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
      if (err >= entry.relative_error) {
        entry.relative_error = err;
        entry.worst_tensor = a[t].name;
      }
    }
    entry.passed = entry.relative_error < tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace xmodal
