// tests/test_retrieval.cpp

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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xmodal/error.hpp"
#include "xmodal/numerics.hpp"
#include "xmodal/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace xmodal;

namespace {

SearchIndex make_index(const Matrix& rows, Modality m = Modality::kText,
                       std::vector<std::string> ids = {}) {
  std::vector<std::string> labels;
  if (ids.empty())
    for (std::size_t i = 0; i < rows.rows(); ++i) ids.push_back("c" + std::to_string(1000 + i));
  for (std::size_t i = 0; i < rows.rows(); ++i) labels.push_back("spk" + std::to_string(i % 7));
  return SearchIndex(m, rows, std::move(ids), std::move(labels));
}

Matrix random_rows(std::size_t n, std::size_t d, SeededRng& rng) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("nearest_k examples") {
  SeededRng rng(1);
  const SearchIndex idx = make_index(random_rows(20, 5, rng));
  const RankedList top = nearest_k(idx, idx.row(7), 3);
  REQUIRE(top.items.size() == 3);
  CHECK(top.items[0].row == 7);
  CHECK(std::abs(top.items[0].score - 1.0) < 1e-12);
  for (std::size_t i = 1; i < 3; ++i) CHECK(top.items[i - 1].score >= top.items[i].score);

  const RankedList full = nearest_k(idx, idx.row(0), 20);
  std::vector<std::size_t> rows;
  for (const auto& item : full.items) rows.push_back(item.row);
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(rows[i] == i);
  CHECK(nearest_k(idx, idx.row(0), 500).items.size() == 20);
  CHECK_THROWS(nearest_k(idx, idx.row(0), 0));
  CHECK_THROWS(nearest_k(SearchIndex{}, std::vector<double>{1.0}, 1));
  CHECK_THROWS(nearest_k(idx, std::vector<double>{1.0, 2.0}, 1));
}

TEST_CASE("ties break by ascending candidate id") {
  Matrix rows{{1, 0}, {1, 0}, {0, 1}, {1, 0}};
  const SearchIndex idx = make_index(rows, Modality::kText, {"zeta", "alpha", "mid", "beta"});
  const RankedList r = nearest_k(idx, std::vector<double>{2.0, 0.0}, 4);
  CHECK(idx.id(r.items[0].row) == "alpha");
  CHECK(idx.id(r.items[1].row) == "beta");
  CHECK(idx.id(r.items[2].row) == "zeta");
  CHECK(idx.id(r.items[3].row) == "mid");
}

TEST_CASE("nearest_k agrees with the exhaustive oracle") {
  SeededRng rng(2);
  Matrix rows = random_rows(120, 6, rng);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 6; ++j) rows(100 + i, j) = rows(i, j);  // exact duplicates
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 120; ++i) ids.push_back("id" + std::to_string((i * 37) % 120));
  const SearchIndex idx = make_index(rows, Modality::kText, ids);
  std::vector<std::vector<double>> unit;
  for (std::size_t i = 0; i < idx.size(); ++i) unit.emplace_back(idx.row(i).begin(), idx.row(i).end());
  for (int q = 0; q < 200; ++q) {
    std::vector<double> query(6);
    if (q % 3 == 0) {
      const auto src = idx.row(rng.below(120));
      query.assign(src.begin(), src.end());
    } else {
      for (double& v : query) v = rng.normal();
    }
    const std::size_t k = 1 + rng.below(120);
    const auto expected = oracle::exhaustive_top_k(unit, ids, query, k);
    const RankedList got = nearest_k(idx, query, k);
    REQUIRE(got.items.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(got.items[i].row == expected[i].row);
      CHECK(got.items[i].score == expected[i].score);
    }
  }
}

TEST_CASE("fuse examples and properties") {
  const SearchIndex two = make_index(Matrix{{1, 0}, {0, 1}, {-1, 0}});
  const auto f = fuse(two, std::vector<double>{1.0, 0.9}, 2);
  CHECK(std::abs(f[0] - 0.7071068) < 1e-6);
  CHECK(std::abs(f[1] - 0.7071068) < 1e-6);

  SeededRng rng(3);
  const SearchIndex idx = make_index(random_rows(30, 8, rng));
  const std::vector<double> q(idx.row(4).begin(), idx.row(4).end());
  const auto nearest = fuse(idx, q, 1);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(nearest[j] - idx.row(4)[j]) < 1e-12);
  for (std::size_t n : {1, 2, 5, 10, 30, 100})
    for (auto w : {FusionWeighting::kUniform, FusionWeighting::kSimilarity})
      CHECK(std::abs(l2_norm(fuse(idx, q, n, w)) - 1.0) < 1e-9);

  // Appending duplicates of rows ranked beyond n leaves the fusion unchanged.
  const RankedList ranked = nearest_k(idx, q, 30);
  Matrix extended(33, 8);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 30; ++i) {
    std::copy(idx.row(i).begin(), idx.row(i).end(), extended.row(i).begin());
    ids.push_back(idx.id(i));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t src = ranked.items[29 - i].row;
    std::copy(idx.row(src).begin(), idx.row(src).end(), extended.row(30 + i).begin());
    ids.push_back("zz" + std::to_string(i));
  }
  const SearchIndex ext = make_index(extended, Modality::kText, ids);
  // Re-normalizing stored unit rows may move the last bit, so compare closely.
  const auto fe = fuse(ext, q, 10), fi = fuse(idx, q, 10);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(fe[j] - fi[j]) < 1e-12);

  // Similarity weights lean toward the closer neighbor.
  const auto sim = fuse(two, std::vector<double>{1.0, 0.2}, 2, FusionWeighting::kSimilarity);
  CHECK(sim[0] > sim[1]);
  CHECK(parse_weighting("similarity") == FusionWeighting::kSimilarity);
  CHECK_THROWS_AS(parse_weighting("softmax"), InputError);
}

TEST_CASE("retrieve modes") {
  SeededRng rng(4);
  const SearchIndex speakers = make_index(random_rows(12, 5, rng), Modality::kSpeaker);
  const SearchIndex texts = make_index(random_rows(9, 5, rng), Modality::kText);
  RetrievalOptions o;
  o.k = 9;
  const std::vector<double> q(speakers.row(2).begin(), speakers.row(2).end());
  std::vector<double> scaled = q;
  for (double& v : scaled) v *= 37.5;
  const RankedList a = retrieve(Direction::kSpeakerToText, q, speakers, texts, RetrievalMode::kPlain, o);
  const RankedList b = retrieve(Direction::kSpeakerToText, scaled, speakers, texts, RetrievalMode::kPlain, o);
  for (std::size_t i = 0; i < a.items.size(); ++i) CHECK(a.items[i].row == b.items[i].row);

  o.fuse_n = 1;
  const RankedList fused = retrieve(Direction::kSpeakerToText, q, speakers, texts, RetrievalMode::kFused, o);
  CHECK(fused.items[0].row == a.items[0].row);

  o.fuse_n = 4;
  const std::vector<double> tq(texts.row(1).begin(), texts.row(1).end());
  const RankedList t2s = retrieve(Direction::kTextToSpeaker, tq, speakers, texts, RetrievalMode::kFused, o);
  const RankedList manual = nearest_k(speakers, fuse(speakers, tq, 4), 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(t2s.items[i].row == manual.items[i].row);
  CHECK(t2s.items.size() == 9);
  const RankedList again = retrieve(Direction::kTextToSpeaker, tq, speakers, texts, RetrievalMode::kFused, o);
  for (std::size_t i = 0; i < 9; ++i) CHECK(again.items[i].score == t2s.items[i].score);
  CHECK(parse_direction("t2s") == Direction::kTextToSpeaker);
  CHECK_THROWS_AS(parse_retrieval_mode("mixed"), InputError);
}

TEST_CASE("build_index uses projection outputs") {
  SynthSpec s;
  s.n_speakers = 30;
  s.dim_speaker = 10;
  s.dim_text = 12;
  const Dataset d = gen_synthetic(s).data;
  LinkerConfig c;
  c.dim_speaker_in = 10;
  c.dim_text_in = 12;
  c.common_dim = 8;
  const LinkerParams p = init_params(c, 1);
  const SearchIndex text = build_index(p, c, d.text, d.text_manifest, Modality::kText);
  CHECK(text.size() == 30);
  CHECK(text == build_index(p, c, d.text, d.text_manifest, Modality::kText));
  const Matrix xt = gather_manifest_rows(d.text, d.text_manifest);
  const Matrix xs = gather_manifest_rows(d.speaker, d.speaker_manifest);
  const ForwardOutput f = forward(p, c, gather_rows(xs, std::vector<std::size_t>{0, 1, 2}),
                                  gather_rows(xt, std::vector<std::size_t>{0, 1, 2}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(text.rows()(i, j) - f.x_t_p(i, j)) < 1e-12);
  for (std::size_t i = 0; i < text.size(); ++i) CHECK(std::abs(l2_norm(text.row(i)) - 1.0) < 1e-9);
  CHECK_THROWS_AS(build_index(p, c, d.speaker, d.speaker_manifest, Modality::kText), InputError);

  const test::TempDir dir("index");
  save_index(text, dir / "text");
  const SearchIndex back = load_index(dir / "text");
  CHECK(back.size() == 30);
  CHECK(back.id(3) == text.id(3));
  CHECK(back.modality() == Modality::kText);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(back.row(3)[j] - text.row(3)[j]) < 1e-6);
}

TEST_CASE("LDA recovers the separating direction of a hand-built two-class set") {
  // Class means (0,0) and (1,0); within-class spread only along y.
  Matrix rows(8, 2);
  std::vector<std::size_t> labels;
  const double ys[4] = {-1.0, -0.5, 0.5, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    rows(i, 0) = 0.0;
    rows(i, 1) = ys[i];
    rows(4 + i, 0) = 1.0;
    rows(4 + i, 1) = ys[i];
  }
  labels = {0, 0, 0, 0, 1, 1, 1, 1};
  const LdaProjection lda = lda_fit(rows, labels, 1, 0.1);
  REQUIRE(lda.projection.cols() == 1);
  const double angle = std::atan2(std::abs(lda.projection(1, 0)), std::abs(lda.projection(0, 0)));
  CHECK(angle < 1e-6);
  CHECK(lda.projection(0, 0) > 0.0);
  CHECK(lda.n_classes == 2);
  CHECK(lda.eigenvalues.size() == 1);

  // Identical points per class leave Sw = 0: singular without shrinkage.
  Matrix degenerate{{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  const std::vector<std::size_t> dl{0, 0, 1, 1};
  CHECK_THROWS(lda_fit(degenerate, dl, 1, 0.0));
  CHECK_NOTHROW(lda_fit(degenerate, dl, 1, 0.1));
  CHECK_THROWS_AS(lda_fit(rows, std::vector<std::size_t>(8, 0), 1, 0.1), InputError);
  CHECK_THROWS_AS(lda_fit(rows, labels, 1, 1.0), InputError);
}

TEST_CASE("LDA direction beats random directions on Fisher ratio") {
  SeededRng rng(44);
  const std::size_t d = 6, per = 25;
  Matrix rows(3 * per, d);
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      auto r = rows.row(c * per + i);
      for (std::size_t j = 0; j < d; ++j) r[j] = rng.normal() * (j == 0 ? 3.0 : 0.5);
      r[1] += 1.5 * static_cast<double>(c);
      r[2] -= 0.8 * static_cast<double>(c);
      labels.push_back(c);
    }
  const LdaProjection lda = lda_fit(rows, labels, 2, 0.0);
  std::vector<double> w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = lda.projection(j, 0);
  const double best = fisher_ratio(rows, labels, w);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> r(d);
    for (double& v : r) v = rng.normal();
    CHECK(fisher_ratio(rows, labels, r) < best);
  }
  const Matrix applied = lda_apply(lda, rows);
  CHECK(applied.cols() == 2);
  for (std::size_t i = 0; i < applied.rows(); ++i) CHECK(std::abs(l2_norm(applied.row(i)) - 1.0) < 1e-9);
  CHECK(lda_fit(rows, labels, 2, 0.0).projection == lda.projection);
  CHECK(lda_fit(rows, labels, 10, 0.1).projection.cols() == 2);
}

TEST_CASE("LDA on singleton classes uses the total-scatter ridge") {
  SeededRng rng(9);
  const Matrix rows = random_rows(6, 10, rng);
  const std::vector<std::size_t> labels{0, 1, 2, 3, 4, 5};
  const LdaProjection lda = lda_fit(rows, labels, 3, 0.1);
  CHECK(lda.projection.cols() == 3);
  CHECK_THROWS(lda_fit(rows, labels, 3, 0.0));
}
