// tests/test_trainer.cpp

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

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "xmodal/error.hpp"
#include "xmodal/trainer.hpp"

using namespace xmodal;

namespace {

Dataset tiny_dataset(std::size_t speakers, std::size_t utts, std::uint64_t seed = 1) {
  SynthSpec s;
  s.n_speakers = speakers;
  s.utts_per_speaker = utts;
  s.dim_speaker = 24;
  s.dim_text = 40;
  s.latent_dim = 8;
  s.seed = seed;
  return gen_synthetic(s).data;
}

LinkerConfig tiny_linker() {
  LinkerConfig c;
  c.dim_speaker_in = 24;
  c.dim_text_in = 40;
  c.common_dim = 16;
  return c;
}

}  // namespace

TEST_CASE("grad_check passes at the default tolerance") {
  const GradCheckReport r = grad_check(grad_check_config(), 0, 1e-4);
  REQUIRE(r.entries.size() == 5);
  CHECK(r.all_passed());
  for (const auto& e : r.entries) CHECK(e.relative_error < 1e-4);
  const GradCheckReport strict = grad_check(grad_check_config(), 0, 1e-12);
  CHECK_FALSE(strict.all_passed());
  for (const auto& e : strict.entries) CHECK(e.relative_error > 0.0);
  const GradCheckReport again = grad_check(grad_check_config(), 0, 1e-4);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again.entries[i].relative_error == r.entries[i].relative_error);
  CHECK(grad_check(grad_check_config(), 3, 1e-4).all_passed());
  CHECK_THROWS(grad_check(grad_check_config(), 0, 0.0));
}

TEST_CASE("grad_check also passes with GELU and a fixed temperature") {
  LinkerConfig c = grad_check_config();
  c.activation = Activation::kGelu;
  c.learnable_temperature = false;
  c.n_transform_layers = 3;
  CHECK(grad_check(c, 1, 1e-4).all_passed());
}

TEST_CASE("make_batches pairing rules") {
  SeededRng rng(1);
  const TrainingData four = make_training_data(tiny_dataset(4, 1));
  const auto batches = make_batches(four, 2, true, rng);
  CHECK(batches.size() == 2);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.speaker_rows.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      seen.insert(b.labels[i]);
      CHECK(four.speaker_class[b.speaker_rows[i]] == b.labels[i]);
      CHECK(four.text_class[b.text_rows[i]] == b.labels[i]);
    }
  }
  CHECK(seen.size() == 4);

  const TrainingData three = make_training_data(tiny_dataset(2, 3));
  SeededRng r2(2);
  const auto all = make_batches(three, 16, false, r2);
  REQUIRE(all.size() == 1);
  std::map<std::size_t, std::set<std::size_t>> prompts_used;
  for (std::size_t i = 0; i < all[0].labels.size(); ++i)
    prompts_used[all[0].labels[i]].insert(all[0].text_rows[i]);
  for (const auto& [label, rows] : prompts_used) CHECK(rows.size() == 1);

  SeededRng a(7), b(7);
  const auto ba = make_batches(three, 4, true, a);
  const auto bb = make_batches(three, 4, true, b);
  REQUIRE(ba.size() == bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(ba[i].speaker_rows == bb[i].speaker_rows);
  // 6 pairs in batches of 5: the trailing single pair is dropped.
  SeededRng c(1);
  CHECK(make_batches(three, 5, true, c).size() == 1);

  TrainingData single = make_training_data(tiny_dataset(2, 1));
  single.class_names.pop_back();
  SeededRng d(1);
  CHECK_THROWS_WITH_AS(make_batches(single, 2, true, d), doctest::Contains("fewer than 2 speakers"),
                       InputError);
}

TEST_CASE("adam_step closed-form first step, zero gradient and projections") {
  LinkerConfig c = grad_check_config();
  TrainConfig tc;
  TrainState state = make_train_state(init_params(c, 1));
  const LinkerParams start = state.params;

  adam_step(state, zeros_like(state.params), tc);
  CHECK(state.adam.step == 1);
  CHECK(state.params.speaker.projection.weight == start.speaker.projection.weight);
  CHECK(state.params.log_temperature == start.log_temperature);

  TrainState fresh = make_train_state(start);
  LinkerParams g = zeros_like(start);
  g.speaker.projection.bias[0] = 50.0;
  g.text.projection.bias[1] = -120.0;
  adam_step(fresh, g, tc);
  CHECK(std::abs((fresh.params.speaker.projection.bias[0] - start.speaker.projection.bias[0]) + 1e-3) < 1e-12);
  CHECK(std::abs((fresh.params.text.projection.bias[1] - start.text.projection.bias[1]) - 1e-3) < 1e-12);

  LinkerParams ga = zeros_like(start);
  for (double& v : ga.aam_weights.values()) v = 1.0;
  ga.log_temperature = -1e6;
  TrainConfig big = tc;
  big.learning_rate = 10.0;
  TrainState s2 = make_train_state(start);
  adam_step(s2, ga, big);
  for (std::size_t r = 0; r < s2.params.aam_weights.rows(); ++r) {
    double n = 0.0;
    for (double v : s2.params.aam_weights.row(r)) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  }
  CHECK(std::abs(s2.params.temperature() - kMaxTemperature) < 1e-12);
  ga.log_temperature = 1e6;
  TrainState s3 = make_train_state(start);
  adam_step(s3, ga, big);
  CHECK(std::abs(s3.params.temperature() - kMinTemperature) < 1e-12);

  LinkerParams bad = zeros_like(start);
  bad.text.transform[1].weight(0, 0) = NAN;
  TrainState s4 = make_train_state(start);
  CHECK_THROWS_WITH_AS(adam_step(s4, bad, tc), doctest::Contains("text.transform.1.weight"),
                       NonFiniteError);
}

TEST_CASE("objective is invariant under a consistent batch permutation") {
  const LinkerConfig c = grad_check_config();
  const LinkerParams p = init_params(c, 2);
  SeededRng rng(3);
  Matrix xs(5, c.dim_speaker_in), xt(5, c.dim_text_in);
  for (double& v : xs.values()) v = rng.normal();
  for (double& v : xt.values()) v = rng.normal();
  const BatchLabels labels{0, 1, 2, 0, 1};
  const std::vector<std::size_t> perm{2, 4, 0, 3, 1};
  BatchLabels pl;
  for (auto i : perm) pl.push_back(labels[i]);
  for (Objective o : {Objective::kCts, Objective::kCtsSpk, Objective::kCtsSupCon}) {
    const double a = evaluate_objective(o, p, c, xs, xt, labels, 0.1).loss;
    const double b = evaluate_objective(o, p, c, gather_rows(xs, perm), gather_rows(xt, perm), pl, 0.1).loss;
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("training with zero epochs returns the initial parameters") {
  const TrainingData td = make_training_data(tiny_dataset(4, 2));
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 5;
  const TrainResult r = train(tiny_linker(), tc, td);
  CHECK(r.params == init_params(tiny_linker(), 5));
  CHECK(r.log.empty());
}

TEST_CASE("training reduces the loss by half and is deterministic") {
  SynthSpec s;
  s.n_speakers = 30;
  s.utts_per_speaker = 5;
  s.dim_speaker = 48;
  s.dim_text = 64;
  s.seed = 7;
  const TrainingData td = make_training_data(gen_synthetic(s).data);
  LinkerConfig lc;
  lc.dim_speaker_in = 48;
  lc.dim_text_in = 64;
  lc.common_dim = 64;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 50;
  tc.seed = 7;
  std::size_t callbacks = 0;
  const TrainResult a = train(lc, tc, td, [&](const EpochLog&, const LinkerParams&) { ++callbacks; });
  CHECK(callbacks == 50);
  REQUIRE(a.log.size() == 50);
  CHECK(a.log.back().mean_loss <= 0.5 * a.log.front().mean_loss);
  const TrainResult b = train(lc, tc, td);
  CHECK(a.params == b.params);
  for (std::size_t i = 0; i < 50; ++i) CHECK(to_json(a.log[i]).dump() == to_json(b.log[i]).dump());
}

TEST_CASE("supervised and regularized modes train") {
  const TrainingData td = make_training_data(tiny_dataset(6, 4));
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 15;
  for (Objective mode : {Objective::kCtsSpk, Objective::kCtsSupCon}) {
    LinkerConfig lc = tiny_linker();
    tc.loss_mode = mode;
    if (mode == Objective::kCtsSpk) {
      lc.n_speakers_train = 5;
      CHECK_THROWS_AS(train(lc, tc, td), InputError);
      lc.n_speakers_train = 6;
    }
    const TrainResult r = train(lc, tc, td);
    CHECK(r.log.back().mean_loss < r.log.front().mean_loss);
    if (mode == Objective::kCtsSpk) CHECK(r.log.back().aam_loss > 0.0);
  }
}

TEST_CASE("config parsing and validation") {
  CHECK(parse_loss_mode("cts_supcon") == Objective::kCtsSupCon);
  CHECK_THROWS_AS(parse_loss_mode("info_nce"), InputError);
  TrainConfig tc;
  from_json(nlohmann::json{{"loss", "cts_spk"}, {"lambda", 0.2}}, tc);
  CHECK(tc.loss_mode == Objective::kCtsSpk);
  CHECK(tc.lambda == 0.2);
  CHECK(tc.batch_size == 64);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"momentum", 0.9}}, tc), InputError);
  tc.batch_size = 1;
  CHECK_THROWS_AS(tc.validate(), InputError);
  tc.batch_size = 2;
  tc.lambda = -1.0;
  CHECK_THROWS_AS(tc.validate(), InputError);
}
