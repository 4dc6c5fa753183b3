// tests/test_losses.cpp

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

#include "xmodal/error.hpp"
#include "xmodal/losses.hpp"
#include "xmodal/numerics.hpp"

using namespace xmodal;

namespace {

constexpr double kHandPair = 0.3132617;   // -log(e / (e + 1))
constexpr double kHandTotal = 0.6265234;  // two pair losses
constexpr double kHandSupCon = 1.6265234;

Matrix random_similarity(std::size_t n, SeededRng& rng) {
  Matrix s(n, n);
  for (double& v : s.values()) v = rng.uniform(-1.0, 1.0);
  return s;
}

double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
}

// Finite-difference gradient of a loss over the entries of S.
template <class F>
std::vector<double> numeric_grad(const Matrix& s, F loss_of) {
  return finite_diff_grad(
      [&](std::span<const double> flat) {
        Matrix m(s.rows(), s.cols());
        std::copy(flat.begin(), flat.end(), m.values().begin());
        return loss_of(m);
      },
      s.values());
}

// Plain softmax cross-entropy over logits, averaged over rows.
double softmax_ce(const Matrix& logits, const BatchLabels& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
    total += std::log(z) - logits(i, labels[i]);
  }
  return total / static_cast<double>(logits.rows());
}

Matrix unit_rows(std::size_t n, std::size_t d, SeededRng& rng) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.normal();
  l2_normalize_rows(m);
  return m;
}

}  // namespace

TEST_CASE("hand values on the 2x2 identity at tau = 1") {
  const Matrix eye = Matrix::identity(2);
  CHECK(std::abs(info_nce_directional(eye, 1.0).loss - kHandPair) < 1e-6);
  CHECK(std::abs(cts_pair(eye, 1.0).loss - kHandPair) < 1e-6);
  CHECK(std::abs(cts_total(eye, eye, 1.0).loss - kHandTotal) < 1e-6);
  CHECK(std::abs(sup_con_directional(eye, {0, 0}, 1.0).loss - kHandSupCon) < 1e-6);
  // Closed forms behind the constants.
  CHECK(std::abs(info_nce_directional(eye, 1.0).loss - std::log1p(std::exp(-1.0))) < 1e-15);
}

TEST_CASE("single-row InfoNCE is exactly zero") {
  const LossResult r = info_nce_directional(Matrix{{0.3}}, 0.07);
  CHECK(r.loss == 0.0);
  CHECK(r.grad(0, 0) == 0.0);
}

TEST_CASE("InfoNCE gradient matches (softmax - I) / (N tau) and finite differences") {
  SeededRng rng(31);
  const Matrix s = random_similarity(4, rng);
  const double tau = 0.3;
  const LossResult r = info_nce_directional(s, tau);
  const auto num = numeric_grad(s, [&](const Matrix& m) { return info_nce_directional(m, tau).loss; });
  CHECK(rel_error(r.grad.values(), num) < 1e-6);
  for (std::size_t i = 0; i < 4; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(s(i, j) / tau);
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = (std::exp(s(i, j) / tau) / z - (i == j ? 1.0 : 0.0)) / (4 * tau);
      CHECK(std::abs(r.grad(i, j) - expected) < 1e-12);
    }
  }
  const double h = 1e-6;
  const double dtau = (info_nce_directional(s, tau + h).loss - info_nce_directional(s, tau - h).loss) / (2 * h);
  CHECK(std::abs(r.grad_temperature - dtau) < 1e-6 * std::max(1.0, std::abs(dtau)));
}

TEST_CASE("cts_pair symmetry") {
  SeededRng rng(2);
  Matrix sym = random_similarity(5, rng);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < i; ++j) sym(j, i) = sym(i, j);
  CHECK(std::abs(cts_pair(sym, 0.5).loss - info_nce_directional(sym, 0.5).loss) < 1e-15);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = random_similarity(1 + rng.below(6), rng);
    CHECK(cts_pair(s, 0.2).loss == cts_pair(s.transposed(), 0.2).loss);
  }
  const Matrix s = random_similarity(4, rng);
  const auto num = numeric_grad(s, [&](const Matrix& m) { return cts_pair(m, 0.4).loss; });
  CHECK(rel_error(cts_pair(s, 0.4).grad.values(), num) < 1e-6);
}

TEST_CASE("cts_total adds the branches") {
  SeededRng rng(3);
  const Matrix sp = random_similarity(4, rng), st = random_similarity(4, rng);
  const TotalLoss t = cts_total(sp, st, 0.1);
  CHECK(t.loss == cts_pair(sp, 0.1).loss + cts_pair(st, 0.1).loss);
  CHECK(t.projection_loss == cts_pair(sp, 0.1).loss);
  CHECK(t.grad_projection == cts_pair(sp, 0.1).grad);
  // Perturbing only the transform branch moves only its component.
  Matrix st2 = st;
  st2(1, 2) += 0.3;
  const TotalLoss t2 = cts_total(sp, st2, 0.1);
  CHECK(t2.projection_loss == t.projection_loss);
  CHECK(t2.transform_loss != t.transform_loss);
  CHECK_THROWS(cts_total(sp, random_similarity(3, rng), 0.1));
}

TEST_CASE("SupCon reductions and gradient") {
  SeededRng rng(4);
  for (std::size_t n : {2, 4, 8}) {
    const Matrix s = random_similarity(n, rng);
    BatchLabels distinct(n);
    for (std::size_t i = 0; i < n; ++i) distinct[i] = 10 * i + 1;
    const double summed = sup_con_directional(s, distinct, 0.2).loss;
    CHECK(std::abs(summed - n * info_nce_directional(s, 0.2).loss) < 1e-9);
    const TotalLoss sup = sup_cts_total(s, s.transposed(), distinct, 0.2);
    CHECK(std::abs(sup.loss - n * cts_total(s, s.transposed(), 0.2).loss) < 1e-9);
  }
  const Matrix s6 = random_similarity(6, rng);
  const BatchLabels labels{0, 1, 0, 2, 1, 0};
  const LossResult r = sup_con_directional(s6, labels, 0.3);
  const auto num = numeric_grad(s6, [&](const Matrix& m) { return sup_con_directional(m, labels, 0.3).loss; });
  CHECK(rel_error(r.grad.values(), num) < 1e-6);

  Matrix sym = random_similarity(6, rng);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < i; ++j) sym(j, i) = sym(i, j);
  CHECK(std::abs(sup_cts_total(sym, sym, labels, 0.3).loss -
                 2.0 * sup_con_directional(sym, labels, 0.3).loss) < 1e-12);
  CHECK_THROWS(sup_con_directional(s6, BatchLabels{0, 1}, 0.3));
}

TEST_CASE("AAM softmax reductions, hand value and gradients") {
  // Two classes, true cosine 1, other 0, m = 0, s = 1.
  const Matrix outputs{{1.0, 0.0}};
  const Matrix weights{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(std::abs(aam_softmax(outputs, {0}, weights, 0.0, 1.0).loss - kHandPair) < 1e-6);

  SeededRng rng(5);
  const Matrix x = unit_rows(4, 8, rng), w = unit_rows(3, 8, rng);
  const BatchLabels labels{0, 2, 1, 2};
  Matrix logits(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) logits(i, j) = dot(x.row(i), w.row(j));
  CHECK(std::abs(aam_softmax(x, labels, w, 0.0, 1.0).loss - softmax_ce(logits, labels)) < 1e-9);

  const AamResult r = aam_softmax(x, labels, w, 0.2, 30.0);
  const auto gx = finite_diff_grad(
      [&](std::span<const double> flat) {
        Matrix m(4, 8);
        std::copy(flat.begin(), flat.end(), m.values().begin());
        return aam_softmax(m, labels, w, 0.2, 30.0).loss;
      },
      x.values());
  const auto gw = finite_diff_grad(
      [&](std::span<const double> flat) {
        Matrix m(3, 8);
        std::copy(flat.begin(), flat.end(), m.values().begin());
        return aam_softmax(x, labels, m, 0.2, 30.0).loss;
      },
      w.values());
  CHECK(rel_error(r.grad_outputs.values(), gx) < 1e-4);
  CHECK(rel_error(r.grad_weights.values(), gw) < 1e-4);

  CHECK_THROWS(aam_softmax(x, BatchLabels{0, 3, 1, 2}, w, 0.2, 30.0));
  Matrix big = x;
  for (std::size_t j = 0; j < big.cols(); ++j) big(0, j) = 2.0 * w(0, j);
  CHECK_THROWS(aam_softmax(big, labels, w, 0.2, 30.0));
}

TEST_CASE("AAM uses the fallback past theta + m > pi") {
  // theta = pi (cosine -1), m = 0.5: the logit is s * (cos(theta) - m sin m).
  const Matrix outputs{{-1.0, 0.0}};
  const Matrix weights{{1.0, 0.0}, {0.0, 1.0}};
  const double m = 0.5, s = 2.0;
  const double target = s * (-1.0 - m * std::sin(m));
  const double expected = std::log(std::exp(target) + std::exp(0.0)) - target;
  CHECK(std::abs(aam_softmax(outputs, {0}, weights, m, s).loss - expected) < 1e-12);
}

TEST_CASE("regularized total") {
  CHECK(regularized_total(0.6265234, 0.3132617, 0.0) == 0.6265234);
  CHECK(std::abs(regularized_total(0.6265, 0.3133, 0.1) - 0.6578) < 1e-4);
  const double h = 1e-6;
  const double d = (regularized_total(0.6, 0.31, 0.1 + h) - regularized_total(0.6, 0.31, 0.1 - h)) / (2 * h);
  CHECK(std::abs(d - 0.31) < 1e-8);
  CHECK_THROWS(regularized_total(1.0, 1.0, -0.1));
}

TEST_CASE("loss invariants") {
  SeededRng rng(6);
  const Matrix s = random_similarity(6, rng);
  const BatchLabels labels{0, 1, 0, 2, 1, 0};
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  Matrix ps(6, 6);
  BatchLabels pl(6);
  for (std::size_t i = 0; i < 6; ++i) {
    pl[i] = labels[perm[i]];
    for (std::size_t j = 0; j < 6; ++j) ps(i, j) = s(perm[i], perm[j]);
  }
  CHECK(std::abs(info_nce_directional(ps, 0.2).loss - info_nce_directional(s, 0.2).loss) < 1e-12);
  CHECK(std::abs(cts_pair(ps, 0.2).loss - cts_pair(s, 0.2).loss) < 1e-12);
  CHECK(std::abs(sup_con_directional(ps, pl, 0.2).loss - sup_con_directional(s, labels, 0.2).loss) < 1e-12);

  for (int t = 0; t < 50; ++t) {
    const Matrix r = random_similarity(1 + rng.below(7), rng);
    CHECK(info_nce_directional(r, 0.05).loss >= 0.0);
    CHECK(cts_pair(r, 0.05).loss >= 0.0);
  }
  CHECK(std::abs(info_nce_directional(s, 1e6).loss - std::log(6.0)) < 1e-3);
  CHECK_THROWS(info_nce_directional(Matrix{{NAN}}, 1.0));
  CHECK_THROWS(info_nce_directional(Matrix{{1.0}}, 0.0));
}
