// src/numerics.cpp

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

#include "xmodal/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> l2_normalize(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  l2_normalize_in_place(out);
  return out;
}

double l2_normalize_in_place(std::span<double> v) {
  const double norm = l2_norm(v);
  if (!(norm > kDegenerateNorm)) throw DegenerateVectorError();
  for (double& x : v) x /= norm;
  return norm;
}

std::vector<double> l2_normalize_rows(Matrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) norms[r] = l2_normalize_in_place(m.row(r));
  return norms;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = l2_norm(a), nb = l2_norm(b);
  if (!(na > kDegenerateNorm) || !(nb > kDegenerateNorm)) throw DegenerateVectorError();
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  kernels::gemm_nn(a, b, c);
  return c;
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: not square");
  const std::size_t n = a.rows();
  const double scale = std::max(max_abs(a), 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-9 * scale)
        throw std::invalid_argument("cholesky: matrix not symmetric");

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NotPositiveDefiniteError(j);
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

Matrix solve_lower(const Matrix& lower, const Matrix& b) {
  const std::size_t n = lower.rows();
  if (b.rows() != n) throw std::invalid_argument("solve_lower: shape");
  Matrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x(i, c);
      for (std::size_t k = 0; k < i; ++k) acc -= lower(i, k) * x(k, c);
      x(i, c) = acc / lower(i, i);
    }
  return x;
}

Matrix solve_lower_transposed(const Matrix& lower, const Matrix& b) {
  const std::size_t n = lower.rows();
  if (b.rows() != n) throw std::invalid_argument("solve_lower_transposed: shape");
  Matrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c)
    for (std::size_t ii = n; ii-- > 0;) {
      double acc = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) acc -= lower(k, ii) * x(k, c);
      x(ii, c) = acc / lower(ii, ii);
    }
  return x;
}

namespace {

constexpr int kMaxSweeps = 100;

double off_diagonal_sq(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
  return acc;
}

}  // namespace

SymEig sym_eig(const Matrix& input) {
  if (input.rows() != input.cols()) throw std::invalid_argument("sym_eig: not square");
  const std::size_t n = input.rows();
  const double scale = max_abs(input);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * std::max(scale, 1.0))
        throw std::invalid_argument("sym_eig: matrix not symmetric");

  Matrix a = input;
  Matrix v = Matrix::identity(n);
  double frob = 0.0;
  for (double x : a.values()) frob += x * x;
  const double tol = 1e-30 * frob;

  int sweeps = 0;
  while (off_diagonal_sq(a) > tol) {
    if (sweeps == kMaxSweeps) throw Error("sym_eig: Jacobi iteration did not converge");
    ++sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sign convention, then ordering.
  std::vector<std::vector<double>> columns(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t lead = 0;
    for (std::size_t i = 0; i < n; ++i) {
      columns[k][i] = v(i, k);
      if (std::abs(v(i, k)) > std::abs(v(lead, k))) lead = i;
    }
    if (columns[k][lead] < 0.0)
      for (double& x : columns[k]) x = -x;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (a(x, x) != a(y, y)) return a(x, x) > a(y, y);
    return columns[x] < columns[y];
  });

  SymEig out;
  out.sweeps = sweeps;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = columns[order[k]][i];
  }
  return out;
}

Matrix pca_project(const Matrix& x, std::size_t components) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0 || components == 0) throw std::invalid_argument("pca_project: empty input");
  Matrix centered = x;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered(r, c) -= mean;
  }
  const std::size_t k = std::min({components, n, d});
  Matrix scores(n, components);
  if (n < d) {
    Matrix gram;
    kernels::gemm_nt(centered, centered, gram);
    const SymEig eig = sym_eig(gram);
    for (std::size_t c = 0; c < k; ++c) {
      const double sv = std::sqrt(std::max(eig.values[c], 0.0));
      for (std::size_t r = 0; r < n; ++r) scores(r, c) = eig.vectors(r, c) * sv;
    }
  } else {
    Matrix cov;
    kernels::gemm_tn(centered, centered, cov);
    const SymEig eig = sym_eig(cov);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += centered(r, j) * eig.vectors(j, c);
        scores(r, c) = acc;
      }
  }
  return scores;
}

std::vector<double> finite_diff_grad(const ScalarFunction& f,
                                     std::span<const double> theta, double h) {
  std::vector<double> probe(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = f(probe);
    probe[i] = saved - h;
    const double minus = f(probe);
    probe[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus))
      throw NonFiniteError("finite_diff_grad: non-finite function value", i);
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
  // Rejection sampling on the top of the range keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

SeededRng SeededRng::split(std::uint64_t stream) const {
  std::uint64_t mix = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  return SeededRng(splitmix64(mix));
}

}  // namespace xmodal
